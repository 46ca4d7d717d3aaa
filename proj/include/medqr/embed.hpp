#pragma once

// Token-embedding backends and masked-token predictors.
//
// A backend stands in for the frozen language model: it maps a token
// sequence to one vector per token. Three kinds exist:
//   static_table            classic word vectors, OOV -> zero vector
//   hash                    deterministic unit vectors, a test double
//   precomputed_contextual  per-sequence vectors exported offline

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "medqr/corpus.hpp"
#include "medqr/error.hpp"
#include "medqr/io.hpp"
#include "medqr/rng.hpp"
#include "medqr/textnorm.hpp"

namespace medqr {

/// Row-major sequence of equal-length vectors.
class VectorSequence {
 public:
  VectorSequence() = default;
  VectorSequence(std::size_t count, std::size_t dim) : dim_(dim), data_(count * dim, 0.0) {}

  std::size_t size() const noexcept { return dim_ == 0 ? 0 : data_.size() / dim_; }
  std::size_t dim() const noexcept { return dim_; }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> operator[](std::size_t i) { return {data_.data() + i * dim_, dim_}; }
  std::span<const double> operator[](std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  std::span<const double> data() const noexcept { return data_; }

  friend bool operator==(const VectorSequence&, const VectorSequence&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

enum class BackendKind { static_table, hash, precomputed_contextual };

inline std::string_view to_string(BackendKind k) {
  switch (k) {
    case BackendKind::static_table:
      return "static";
    case BackendKind::hash:
      return "hash";
    case BackendKind::precomputed_contextual:
      break;
  }
  return "precomputed";
}

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;

  virtual std::size_t dim() const noexcept = 0;
  virtual BackendKind kind() const noexcept = 0;

  /// One vector per token. `sequence_id` is only consulted by contextual
  /// backends, which ignore the tokens apart from checking the count.
  virtual VectorSequence embed(const TokenSequence& tokens, std::string_view sequence_id = {}) const = 0;

  bool context_free() const noexcept { return kind() != BackendKind::precomputed_contextual; }

  /// Descriptor written into index headers.
  virtual nlohmann::json describe() const { return {{"kind", to_string(kind())}, {"dim", dim()}}; }
};

inline VectorSequence embed_sequence(const EmbeddingBackend& backend, const TokenSequence& tokens,
                                     std::string_view sequence_id = {}) {
  return backend.embed(tokens, sequence_id);
}

// ---------------------------------------------------------------------------

class StaticBackend final : public EmbeddingBackend {
 public:
  StaticBackend(std::size_t dim, std::unordered_map<std::string, std::vector<double>> table)
      : dim_(dim), table_(std::move(table)) {
    if (dim_ == 0) throw Error("static backend: dim must be >= 1");
  }

  std::size_t dim() const noexcept override { return dim_; }
  BackendKind kind() const noexcept override { return BackendKind::static_table; }
  std::size_t vocab_size() const noexcept { return table_.size(); }

  VectorSequence embed(const TokenSequence& tokens, std::string_view = {}) const override {
    VectorSequence out(tokens.size(), dim_);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      auto it = table_.find(tokens[i]);
      if (it != table_.end()) std::copy(it->second.begin(), it->second.end(), out[i].begin());
    }
    return out;
  }

 private:
  std::size_t dim_;
  std::unordered_map<std::string, std::vector<double>> table_;
};

namespace detail {

inline std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
    const std::size_t start = pos;
    while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t') ++pos;
    if (pos > start) fields.push_back(line.substr(start, pos - start));
  }
  return fields;
}

template <typename T>
bool parse_number(std::string_view s, T& value) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace detail

/// Word-vector text format: header `V D`, then `token f1 ... fD` per line.
inline StaticBackend parse_static_backend(std::string_view content,
                                          const std::string& origin = "<vectors>") {
  if (auto bad = utf8::first_invalid(content)) {
    throw Error(origin + ": not valid UTF-8 (byte offset " + std::to_string(*bad) + ")");
  }
  const auto lines = io::split_lines(content);
  if (lines.empty()) throw ParseError(origin, 1, "missing `V D` header");
  const auto header = detail::split_spaces(lines[0]);
  std::size_t vocab = 0, dim = 0;
  if (header.size() != 2 || !detail::parse_number(header[0], vocab) ||
      !detail::parse_number(header[1], dim) || dim == 0) {
    throw ParseError(origin, 1, "header must be `V D` with D >= 1");
  }
  std::unordered_map<std::string, std::vector<double>> table;
  table.reserve(vocab);
  std::size_t rows = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t lineno = i + 1;
    const auto fields = detail::split_spaces(lines[i]);
    if (fields.empty()) continue;
    if (fields.size() != dim + 1) {
      throw ParseError(origin, lineno,
                       "expected " + std::to_string(dim) + " floats, got " +
                           std::to_string(fields.size() - 1));
    }
    std::vector<double> vec(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      if (!detail::parse_number(fields[j + 1], vec[j]) || !std::isfinite(vec[j])) {
        throw ParseError(origin, lineno, "bad float \"" + std::string(fields[j + 1]) + "\"");
      }
    }
    if (!table.emplace(std::string(fields[0]), std::move(vec)).second) {
      throw ParseError(origin, lineno, "duplicate token \"" + std::string(fields[0]) + "\"");
    }
    ++rows;
  }
  if (rows != vocab) {
    throw ParseError(origin, 1,
                     "header declares " + std::to_string(vocab) + " rows, file has " +
                         std::to_string(rows));
  }
  return StaticBackend(dim, std::move(table));
}

inline StaticBackend static_backend_load(const std::filesystem::path& path) {
  return parse_static_backend(io::read_file(path), path.string());
}

// ---------------------------------------------------------------------------

/// Each token maps to a unit vector drawn from a generator seeded by
/// (seed, FNV-1a-64 of the token bytes), identical on every platform.
class HashBackend final : public EmbeddingBackend {
 public:
  HashBackend(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim_ == 0) throw Error("hash backend: dim must be >= 1");
  }

  std::size_t dim() const noexcept override { return dim_; }
  BackendKind kind() const noexcept override { return BackendKind::hash; }
  std::uint64_t seed() const noexcept { return seed_; }

  void token_vector(std::string_view token, std::span<double> out) const {
    Rng rng(derive_seed(seed_, fnv1a64(token)));
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (double& x : out) {
        x = rng.uniform(-1.0, 1.0);
        norm2 += x * x;
      }
    } while (norm2 == 0.0);
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : out) x *= inv;
  }

  VectorSequence embed(const TokenSequence& tokens, std::string_view = {}) const override {
    VectorSequence out(tokens.size(), dim_);
    for (std::size_t i = 0; i < tokens.size(); ++i) token_vector(tokens[i], out[i]);
    return out;
  }

  nlohmann::json describe() const override {
    return {{"kind", "hash"}, {"dim", dim_}, {"seed", seed_}};
  }

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

inline HashBackend hash_backend(std::size_t dim, std::uint64_t seed) { return HashBackend(dim, seed); }

// ---------------------------------------------------------------------------

/// Vectors exported offline from a contextual model, keyed by sequence id.
/// JSON-Lines: {"id": str, "vectors": [[f, ...], ...]}.
class PrecomputedBackend final : public EmbeddingBackend {
 public:
  PrecomputedBackend(std::size_t dim, std::unordered_map<std::string, VectorSequence> store)
      : dim_(dim), store_(std::move(store)) {
    if (dim_ == 0) throw Error("precomputed backend: dim must be >= 1");
  }

  std::size_t dim() const noexcept override { return dim_; }
  BackendKind kind() const noexcept override { return BackendKind::precomputed_contextual; }
  bool contains(std::string_view id) const { return store_.contains(std::string(id)); }

  VectorSequence embed(const TokenSequence& tokens, std::string_view sequence_id) const override {
    auto it = store_.find(std::string(sequence_id));
    if (it == store_.end()) {
      throw Error("precomputed backend: no vectors for sequence \"" + std::string(sequence_id) + "\"");
    }
    if (it->second.size() != tokens.size()) {
      throw Error("precomputed backend: sequence \"" + std::string(sequence_id) + "\" has " +
                  std::to_string(it->second.size()) + " vectors for " +
                  std::to_string(tokens.size()) + " tokens");
    }
    return it->second;
  }

 private:
  std::size_t dim_;
  std::unordered_map<std::string, VectorSequence> store_;
};

inline PrecomputedBackend parse_precomputed_backend(std::string_view content,
                                                    const std::string& origin = "<precomputed>") {
  std::size_t dim = 0;
  std::unordered_map<std::string, VectorSequence> store;
  detail::for_each_json_line(content, origin, [&](const nlohmann::json& obj, std::size_t lineno) {
    std::string id = detail::require_string(obj, "id", origin, lineno);
    auto vecs = obj.find("vectors");
    if (vecs == obj.end() || !vecs->is_array()) throw ParseError(origin, lineno, "missing vectors array");
    for (const auto& row : *vecs) {
      if (!row.is_array() || row.empty()) throw ParseError(origin, lineno, "vector rows must be non-empty arrays");
      if (dim == 0) dim = row.size();
      if (row.size() != dim) throw ParseError(origin, lineno, "inconsistent vector dimension");
    }
    VectorSequence seq(vecs->size(), dim);
    for (std::size_t i = 0; i < vecs->size(); ++i) {
      for (std::size_t j = 0; j < dim; ++j) {
        const auto& v = (*vecs)[i][j];
        if (!v.is_number() || !std::isfinite(v.get<double>())) {
          throw ParseError(origin, lineno, "non-finite or non-numeric vector component");
        }
        seq[i][j] = v.get<double>();
      }
    }
    if (!store.emplace(id, std::move(seq)).second) {
      throw ParseError(origin, lineno, "duplicate id \"" + id + "\"");
    }
  });
  if (dim == 0) throw Error(origin + ": no vectors");
  return PrecomputedBackend(dim, std::move(store));
}

inline PrecomputedBackend precomputed_backend_load(const std::filesystem::path& path) {
  return parse_precomputed_backend(io::read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Masked-token predictors

using Prediction = std::pair<std::size_t, std::string>;

class MlmPredictor {
 public:
  virtual ~MlmPredictor() = default;
  /// One prediction per masked position, ascending position.
  virtual std::vector<Prediction> predict(const MaskedSentence& masked) const = 0;
};

/// Always predicts the most frequent corpus token (ties: smallest bytes).
class FrequencyBaseline final : public MlmPredictor {
 public:
  explicit FrequencyBaseline(std::string token) : token_(std::move(token)) {}

  static FrequencyBaseline from_sequences(std::span<const TokenSequence> sequences) {
    std::map<std::string, std::size_t, std::less<>> counts;
    for (const auto& seq : sequences) {
      for (const auto& t : seq.tokens) {
        if (t != kMaskToken && t != kSepToken) ++counts[t];
      }
    }
    if (counts.empty()) throw Error("frequency baseline: no tokens to count");
    // std::map iterates in ascending order, so strict > keeps the smallest tie.
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    return FrequencyBaseline(best->first);
  }

  const std::string& token() const noexcept { return token_; }

  std::vector<Prediction> predict(const MaskedSentence& masked) const override {
    if (masked.gold.empty()) throw Error("mlm_predict: sentence has no masks");
    std::vector<Prediction> out;
    for (const auto& g : masked.gold) out.emplace_back(g.first, token_);
    return out;
  }

 private:
  std::string token_;
};

/// Predictions produced by an external model, JSON-Lines
/// {"sentence_id", "position", "token"}.
class ExternalPredictions final : public MlmPredictor {
 public:
  explicit ExternalPredictions(std::map<std::pair<std::string, std::size_t>, std::string> table)
      : table_(std::move(table)) {}

  std::vector<Prediction> predict(const MaskedSentence& masked) const override {
    if (masked.gold.empty()) throw Error("mlm_predict: sentence has no masks");
    std::vector<Prediction> out;
    for (const auto& g : masked.gold) {
      auto it = table_.find({masked.id, g.first});
      if (it == table_.end()) {
        throw Error("external predictions: missing (" + masked.id + ", " + std::to_string(g.first) + ")");
      }
      out.emplace_back(g.first, it->second);
    }
    return out;
  }

 private:
  std::map<std::pair<std::string, std::size_t>, std::string> table_;
};

inline ExternalPredictions parse_external_predictions(std::string_view content,
                                                      const std::string& origin = "<predictions>") {
  std::map<std::pair<std::string, std::size_t>, std::string> table;
  detail::for_each_json_line(content, origin, [&](const nlohmann::json& obj, std::size_t lineno) {
    std::string sid = detail::require_string(obj, "sentence_id", origin, lineno);
    auto pos = obj.find("position");
    if (pos == obj.end() || !pos->is_number_unsigned()) {
      throw ParseError(origin, lineno, "position must be a nonnegative integer");
    }
    std::string token = detail::require_string(obj, "token", origin, lineno);
    if (!table.emplace(std::make_pair(sid, pos->get<std::size_t>()), std::move(token)).second) {
      throw ParseError(origin, lineno, "duplicate (sentence_id, position)");
    }
  });
  return ExternalPredictions(std::move(table));
}

inline ExternalPredictions load_external_predictions(const std::filesystem::path& path) {
  return parse_external_predictions(io::read_file(path), path.string());
}

inline std::vector<Prediction> mlm_predict(const MlmPredictor& predictor, const MaskedSentence& masked) {
  return predictor.predict(masked);
}

}  // namespace medqr
