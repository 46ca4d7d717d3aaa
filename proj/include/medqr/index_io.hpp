#pragma once

// Binary dense-index format, all integers little-endian:
//
//   8 bytes   magic "SINAIDX1"
//   u32       dim
//   u64       entry count
//   u32       header length L, then L bytes of UTF-8 JSON (pooling spec plus
//             a "backend" descriptor)
//   per entry u16 id length, id bytes, dim x IEEE-754 binary32

#include <bit>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "medqr/error.hpp"
#include "medqr/io.hpp"
#include "medqr/retrieve.hpp"

namespace medqr {

inline constexpr std::string_view kIndexMagic = "SINAIDX1";

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

  template <typename T>
  T le(const char* what) {
    need(sizeof(T), what);
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i));
    }
    pos_ += sizeof(T);
    return value;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t offset() const noexcept { return pos_; }
  bool at_end() const noexcept { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw Error(origin_ + ": truncated file at byte offset " + std::to_string(pos_) + " (reading " + what + ")");
    }
  }

  std::string_view bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_index(const DenseIndex& index) {
  std::string out(kIndexMagic);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(index.dim()));
  detail::put_le<std::uint64_t>(out, index.size());
  nlohmann::json header = to_json(index.spec());
  header["backend"] = index.backend();
  const std::string json = header.dump();
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(json.size()));
  out += json;
  for (const auto& e : index.entries()) {
    if (e.id.size() > 0xFFFF) throw Error("save_index: id longer than 65535 bytes");
    detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(e.id.size()));
    out += e.id;
    for (float x : e.vector) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(x));
  }
  return out;
}

inline DenseIndex deserialize_index(std::string_view bytes, const std::string& origin = "<index>",
                                    std::optional<std::size_t> expected_dim = std::nullopt) {
  if (bytes.substr(0, kIndexMagic.size()) != kIndexMagic) throw Error(origin + ": bad magic");
  detail::ByteReader in(bytes, origin);
  in.take(kIndexMagic.size(), "magic");
  const std::size_t dim = in.le<std::uint32_t>("dim");
  const std::uint64_t count = in.le<std::uint64_t>("count");
  if (expected_dim && *expected_dim != dim) {
    throw Error(origin + ": dim mismatch (file " + std::to_string(dim) + ", expected " +
                std::to_string(*expected_dim) + ")");
  }
  const std::uint32_t header_len = in.le<std::uint32_t>("header length");
  const auto header_bytes = in.take(header_len, "header");
  nlohmann::json header = nlohmann::json::parse(header_bytes, nullptr, false);
  if (header.is_discarded() || !header.is_object()) throw Error(origin + ": malformed header JSON");
  DenseIndex index(dim, pooling_spec_from_json(header), header.value("backend", nlohmann::json{}));
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint16_t id_len = in.le<std::uint16_t>("id length");
    std::string id(in.take(id_len, "id"));
    const auto raw = in.take(dim * sizeof(float), "vector");
    std::vector<float> vec(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      std::uint32_t word = 0;
      for (std::size_t b = 0; b < 4; ++b) {
        word |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[4 * j + b])) << (8 * b);
      }
      vec[j] = std::bit_cast<float>(word);
    }
    index.add(std::move(id), std::move(vec));
  }
  if (!in.at_end()) {
    throw Error(origin + ": trailing bytes after last entry at byte offset " +
                std::to_string(in.offset()));
  }
  return index;
}

inline void save_index(const DenseIndex& index, const std::filesystem::path& path) {
  io::write_file(path, serialize_index(index));
}

inline DenseIndex load_index(const std::filesystem::path& path,
                             std::optional<std::size_t> expected_dim = std::nullopt) {
  return deserialize_index(io::read_file(path), path.string(), expected_dim);
}

}  // namespace medqr
