#pragma once

// QA corpus ingestion and the derived datasets used by the evaluation
// protocols: classification sets, splits, noisy queries, masked sentences and
// paraphrase pairs. Every sampler is a pure function of its inputs and seed.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "medqr/error.hpp"
#include "medqr/io.hpp"
#include "medqr/rng.hpp"
#include "medqr/textnorm.hpp"

namespace medqr {

enum class Style { formal, informal, unknown };

inline std::string_view to_string(Style s) {
  switch (s) {
    case Style::formal:
      return "formal";
    case Style::informal:
      return "informal";
    case Style::unknown:
      break;
  }
  return "unknown";
}

inline std::optional<Style> parse_style(std::string_view s) {
  if (s == "formal") return Style::formal;
  if (s == "informal") return Style::informal;
  if (s == "unknown") return Style::unknown;
  return std::nullopt;
}

struct QARecord {
  std::string id;
  std::string question;
  std::string answer;
  std::string category;
  std::string source;
  Style style = Style::unknown;

  friend bool operator==(const QARecord&, const QARecord&) = default;
};

inline nlohmann::json to_json(const QARecord& r) {
  return {{"id", r.id},           {"question", r.question}, {"answer", r.answer},
          {"category", r.category}, {"source", r.source},   {"style", to_string(r.style)}};
}

/// Records in file order with unique ids.
class Corpus {
 public:
  Corpus() = default;

  explicit Corpus(std::vector<QARecord> records) {
    for (auto& r : records) add(std::move(r));
  }

  void add(QARecord record) {
    if (record.question.empty()) throw Error("record \"" + record.id + "\" has an empty question");
    if (!by_id_.emplace(record.id, records_.size()).second) {
      throw Error("duplicate id \"" + record.id + "\"");
    }
    records_.push_back(std::move(record));
  }

  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const QARecord& operator[](std::size_t i) const { return records_[i]; }
  const std::vector<QARecord>& records() const noexcept { return records_; }
  auto begin() const { return records_.begin(); }
  auto end() const { return records_.end(); }

  const QARecord* find(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : &records_[it->second];
  }

  bool contains(std::string_view id) const { return find(id) != nullptr; }

 private:
  std::vector<QARecord> records_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

namespace detail {

inline nlohmann::json parse_json_line(std::string_view line, const std::string& origin,
                                      std::size_t lineno) {
  nlohmann::json obj = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (obj.is_discarded()) throw ParseError(origin, lineno, "malformed JSON");
  if (!obj.is_object()) throw ParseError(origin, lineno, "expected a JSON object");
  return obj;
}

inline std::string require_string(const nlohmann::json& obj, const char* key,
                                  const std::string& origin, std::size_t lineno) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(origin, lineno, std::string("missing key \"") + key + "\"");
  if (!it->is_string()) {
    throw ParseError(origin, lineno, std::string("key \"") + key + "\" must be a string");
  }
  return it->get<std::string>();
}

// Calls fn(obj, lineno) for every non-blank line of a JSON-Lines document.
template <typename Fn>
void for_each_json_line(std::string_view content, const std::string& origin, Fn&& fn) {
  const auto lines = io::split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (io::trim_ascii(lines[i]).empty()) continue;
    fn(parse_json_line(lines[i], origin, i + 1), i + 1);
  }
}

}  // namespace detail

inline QARecord parse_qa_record(const nlohmann::json& obj, const std::string& origin,
                                std::size_t lineno) {
  QARecord r;
  r.id = detail::require_string(obj, "id", origin, lineno);
  r.question = detail::require_string(obj, "question", origin, lineno);
  r.answer = detail::require_string(obj, "answer", origin, lineno);
  r.category = detail::require_string(obj, "category", origin, lineno);
  r.source = detail::require_string(obj, "source", origin, lineno);
  if (auto it = obj.find("style"); it != obj.end()) {
    auto style = it->is_string() ? parse_style(it->get<std::string>()) : std::nullopt;
    if (!style) throw ParseError(origin, lineno, "style must be formal, informal or unknown");
    r.style = *style;
  }
  if (r.question.empty()) throw ParseError(origin, lineno, "empty question");
  return r;
}

inline Corpus parse_qa_corpus(std::string_view content, const std::string& origin = "<corpus>") {
  Corpus corpus;
  detail::for_each_json_line(content, origin, [&](const nlohmann::json& obj, std::size_t lineno) {
    QARecord r = parse_qa_record(obj, origin, lineno);
    if (corpus.contains(r.id)) throw ParseError(origin, lineno, "duplicate id \"" + r.id + "\"");
    corpus.add(std::move(r));
  });
  return corpus;
}

inline Corpus load_qa_corpus(const std::filesystem::path& path) {
  return parse_qa_corpus(io::read_file(path), path.string());
}

// ---------------------------------------------------------------------------

struct LengthStats {
  double mean = 0.0;
  double stddev = 0.0;  // population
};

inline LengthStats length_stats(const Corpus& corpus, const Tokenizer& tokenizer = default_tokenizer()) {
  if (corpus.empty()) throw Error("length_stats: empty corpus");
  std::vector<double> lengths;
  lengths.reserve(corpus.size());
  for (const auto& r : corpus) lengths.push_back(static_cast<double>(tokenizer(r.question).size()));
  const double n = static_cast<double>(lengths.size());
  double mean = 0.0;
  for (double l : lengths) mean += l;
  mean /= n;
  double var = 0.0;
  for (double l : lengths) var += (l - mean) * (l - mean);
  return {mean, std::sqrt(var / n)};
}

// ---------------------------------------------------------------------------
// Labeled datasets

struct LabeledExample {
  std::string text;
  int label = 0;
  std::string origin_id;

  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

/// Binary question-classification set: `n_pos` records of `target_category`
/// labeled 1 and `n_neg` records of other categories labeled 0, each drawn
/// uniformly without replacement, then shuffled together.
inline std::vector<LabeledExample> build_qc_dataset(const Corpus& corpus,
                                                    std::string_view target_category,
                                                    std::size_t n_pos, std::size_t n_neg,
                                                    std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    (corpus[i].category == target_category ? pos : neg).push_back(i);
  }
  if (pos.size() < n_pos) {
    throw Error("build_qc_dataset: category \"" + std::string(target_category) + "\" has " +
                std::to_string(pos.size()) + " records, need " + std::to_string(n_pos));
  }
  if (neg.size() < n_neg) {
    throw Error("build_qc_dataset: other categories have " + std::to_string(neg.size()) +
                " records, need " + std::to_string(n_neg));
  }
  Rng rng(seed);
  std::vector<LabeledExample> out;
  out.reserve(n_pos + n_neg);
  for (std::size_t j : rng.sample_indices(pos.size(), n_pos)) {
    const auto& r = corpus[pos[j]];
    out.push_back({r.question, 1, r.id});
  }
  for (std::size_t j : rng.sample_indices(neg.size(), n_neg)) {
    const auto& r = corpus[neg[j]];
    out.push_back({r.question, 0, r.id});
  }
  rng.shuffle(out);
  return out;
}

struct SplitFractions {
  double train = 0.85;
  double valid = 0.10;
  double test = 0.05;
};

template <typename T>
struct DatasetSplits {
  std::vector<T> train;
  std::vector<T> valid;
  std::vector<T> test;
};

/// Seeded shuffle, then contiguous slices: test gets round(n*test), valid
/// gets round(n*valid), train keeps the remainder.
template <typename T>
DatasetSplits<T> split_dataset(std::vector<T> examples, SplitFractions f, std::uint64_t seed) {
  if (f.train < 0 || f.valid < 0 || f.test < 0) throw Error("split fractions must be nonnegative");
  if (std::abs(f.train + f.valid + f.test - 1.0) > 1e-9) throw Error("split fractions must sum to 1");
  const std::size_t n = examples.size();
  const std::size_t n_test = round_half_up(static_cast<double>(n) * f.test);
  const std::size_t n_valid = round_half_up(static_cast<double>(n) * f.valid);
  if (n_test + n_valid > n) throw Error("split_dataset: too few examples for the requested split");
  const std::size_t n_train = n - n_test - n_valid;
  auto check = [](double frac, std::size_t count, const char* name) {
    if (frac > 0 && count == 0) {
      throw Error(std::string("split_dataset: ") + name + " split would be empty");
    }
  };
  check(f.train, n_train, "train");
  check(f.valid, n_valid, "valid");
  check(f.test, n_test, "test");

  Rng rng(seed);
  rng.shuffle(examples);
  DatasetSplits<T> out;
  auto first = std::make_move_iterator(examples.begin());
  out.train.assign(first, first + static_cast<std::ptrdiff_t>(n_train));
  out.valid.assign(first + static_cast<std::ptrdiff_t>(n_train),
                   first + static_cast<std::ptrdiff_t>(n_train + n_valid));
  out.test.assign(first + static_cast<std::ptrdiff_t>(n_train + n_valid),
                  std::make_move_iterator(examples.end()));
  return out;
}

/// JSON-Lines {text, label[, id]} for externally labeled sets (e.g. the
/// three-class sentiment comments).
inline std::vector<LabeledExample> load_labeled_examples(const std::filesystem::path& path) {
  std::vector<LabeledExample> out;
  const std::string origin = path.string();
  detail::for_each_json_line(io::read_file(path), origin,
                             [&](const nlohmann::json& obj, std::size_t lineno) {
    LabeledExample ex;
    ex.text = detail::require_string(obj, "text", origin, lineno);
    auto label = obj.find("label");
    if (label == obj.end() || !label->is_number_integer() || label->get<long long>() < 0) {
      throw ParseError(origin, lineno, "label must be a nonnegative integer");
    }
    ex.label = label->get<int>();
    if (auto id = obj.find("id"); id != obj.end() && id->is_string()) {
      ex.origin_id = id->get<std::string>();
    } else {
      ex.origin_id = "line" + std::to_string(lineno);
    }
    out.push_back(std::move(ex));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Noise and masking

inline std::size_t noise_count(double m, std::size_t len) {
  if (m <= 0.0 || len == 0) return 0;
  return std::clamp<std::size_t>(round_half_up(m * static_cast<double>(len)), 1, len);
}

/// Replaces k = round(m * len) distinct positions (at least one when m > 0)
/// with vocabulary tokens that differ from the original. Every token is
/// eligible, punctuation included.
inline TokenSequence inject_noise(const TokenSequence& tokens, double m,
                                  const std::vector<std::string>& vocab, std::uint64_t seed) {
  if (!(m >= 0.0 && m <= 1.0)) throw Error("inject_noise: m must lie in [0, 1]");
  TokenSequence out = tokens;
  const std::size_t k = noise_count(m, tokens.size());
  if (k == 0) return out;
  if (vocab.size() < 2) throw Error("inject_noise: vocabulary needs at least 2 tokens");
  Rng rng(seed);
  for (std::size_t pos : rng.sample_indices(tokens.size(), k)) {
    const std::string& original = tokens[pos];
    if (std::all_of(vocab.begin(), vocab.end(), [&](const auto& v) { return v == original; })) {
      throw Error("inject_noise: vocabulary has no token other than \"" + original + "\"");
    }
    std::size_t pick;
    do {
      pick = rng.uniform_index(vocab.size());
    } while (vocab[pick] == original);
    out.tokens[pos] = vocab[pick];
  }
  return out;
}

struct MaskedSentence {
  std::string id;
  TokenSequence tokens;  // [MASK] at masked positions
  std::vector<std::pair<std::size_t, std::string>> gold;  // ascending position

  std::size_t mask_count() const noexcept { return gold.size(); }
  friend bool operator==(const MaskedSentence&, const MaskedSentence&) = default;
};

inline std::size_t mask_count(double rate, std::size_t len) {
  return std::min(len, std::max<std::size_t>(1, round_half_up(rate * static_cast<double>(len))));
}

inline MaskedSentence mask_tokens(const TokenSequence& tokens, double rate, std::uint64_t seed,
                                  std::string id = {}) {
  if (tokens.empty()) throw Error("mask_tokens: empty sentence");
  if (!(rate > 0.0 && rate <= 1.0)) throw Error("mask_tokens: rate must lie in (0, 1]");
  MaskedSentence out;
  out.id = std::move(id);
  out.tokens = tokens;
  Rng rng(seed);
  auto positions = rng.sample_indices(tokens.size(), mask_count(rate, tokens.size()));
  std::sort(positions.begin(), positions.end());
  for (std::size_t pos : positions) {
    out.gold.emplace_back(pos, tokens[pos]);
    out.tokens.tokens[pos] = std::string(kMaskToken);
  }
  return out;
}

inline nlohmann::json to_json(const MaskedSentence& s) {
  nlohmann::json gold = nlohmann::json::array();
  for (const auto& [pos, tok] : s.gold) gold.push_back({{"position", pos}, {"token", tok}});
  return {{"id", s.id}, {"tokens", s.tokens.tokens}, {"gold", gold}};
}

// ---------------------------------------------------------------------------
// Paraphrase pairs

struct ParaphrasePair {
  std::string prime_id;
  std::string paraphrase;
};

inline std::vector<ParaphrasePair> parse_paraphrase_pairs(std::string_view content,
                                                          const Corpus& corpus,
                                                          const std::string& origin = "<pairs>") {
  std::vector<ParaphrasePair> out;
  detail::for_each_json_line(content, origin, [&](const nlohmann::json& obj, std::size_t lineno) {
    ParaphrasePair p;
    p.prime_id = detail::require_string(obj, "prime_id", origin, lineno);
    p.paraphrase = detail::require_string(obj, "paraphrase", origin, lineno);
    if (!corpus.contains(p.prime_id)) {
      throw ParseError(origin, lineno, "unknown prime_id \"" + p.prime_id + "\"");
    }
    out.push_back(std::move(p));
  });
  return out;
}

inline std::vector<ParaphrasePair> load_paraphrase_pairs(const std::filesystem::path& path,
                                                         const Corpus& corpus) {
  return parse_paraphrase_pairs(io::read_file(path), corpus, path.string());
}

}  // namespace medqr
