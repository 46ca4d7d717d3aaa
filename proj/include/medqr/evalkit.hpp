#pragma once

// Retrieval, judgment, classification and fill-in-the-blank metrics, plus
// the paraphrase and noisy-query protocols.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "medqr/corpus.hpp"
#include "medqr/embed.hpp"
#include "medqr/error.hpp"
#include "medqr/retrieve.hpp"
#include "medqr/rng.hpp"
#include "medqr/textnorm.hpp"

namespace medqr {

// ---------------------------------------------------------------------------
// Rank metrics

struct RankOutcome {
  std::string query_id;
  std::optional<std::size_t> rank;  // 1-based; nullopt when not retrieved
};

inline double recall_at_k(std::span<const RankOutcome> outcomes, std::size_t k) {
  if (outcomes.empty()) throw Error("recall_at_k: no outcomes");
  if (k == 0) throw Error("recall_at_k: k must be >= 1");
  const auto hits = std::count_if(outcomes.begin(), outcomes.end(),
                                  [k](const RankOutcome& o) { return o.rank && *o.rank <= k; });
  return static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

/// Mean reciprocal rank; ranks beyond `cutoff` count as 0.
inline double mrr(std::span<const RankOutcome> outcomes, std::size_t cutoff = 100) {
  if (outcomes.empty()) throw Error("mrr: no outcomes");
  double sum = 0.0;
  for (const auto& o : outcomes) {
    if (o.rank && *o.rank <= cutoff) sum += 1.0 / static_cast<double>(*o.rank);
  }
  return sum / static_cast<double>(outcomes.size());
}

// ---------------------------------------------------------------------------
// Human judgments

enum class Grade { similar_question, similar_topic, different_topic };

inline std::optional<Grade> parse_grade(std::string_view s) {
  if (s == "similar_question") return Grade::similar_question;
  if (s == "similar_topic") return Grade::similar_topic;
  if (s == "different_topic") return Grade::different_topic;
  return std::nullopt;
}

inline double grade_score(Grade g) {
  switch (g) {
    case Grade::similar_question:
      return 1.0;
    case Grade::similar_topic:
      return 0.5;
    case Grade::different_topic:
      break;
  }
  return 0.0;
}

struct JudgmentLabel {
  std::string query_id;
  Grade grade = Grade::different_topic;
};

/// JSON-Lines {query_id, grade}; one label per query.
inline std::vector<JudgmentLabel> parse_judgments(std::string_view content, const std::string& origin = "<judgments>") {
  std::vector<JudgmentLabel> out;
  std::unordered_set<std::string> seen;
  detail::for_each_json_line(content, origin, [&](const nlohmann::json& obj, std::size_t lineno) {
    JudgmentLabel label;
    label.query_id = detail::require_string(obj, "query_id", origin, lineno);
    auto grade = parse_grade(detail::require_string(obj, "grade", origin, lineno));
    if (!grade) throw ParseError(origin, lineno, "grade must be similar_question, similar_topic or different_topic");
    label.grade = *grade;
    if (!seen.insert(label.query_id).second) {
      throw ParseError(origin, lineno, "second label for query \"" + label.query_id + "\"");
    }
    out.push_back(std::move(label));
  });
  return out;
}

inline std::vector<JudgmentLabel> load_judgments(const std::filesystem::path& path) {
  return parse_judgments(io::read_file(path), path.string());
}

struct JudgmentAccuracy {
  double graded = 0.0;  // percent, scores 1 / 0.5 / 0
  double rigid = 0.0;   // percent, similar_question only
};

inline JudgmentAccuracy judgment_accuracy(std::span<const JudgmentLabel> labels) {
  if (labels.empty()) throw Error("judgment_accuracy: no labels");
  double score = 0.0;
  std::size_t exact = 0;
  for (const auto& l : labels) {
    score += grade_score(l.grade);
    if (l.grade == Grade::similar_question) ++exact;
  }
  const double n = static_cast<double>(labels.size());
  return {100.0 * score / n, 100.0 * static_cast<double>(exact) / n};
}

// ---------------------------------------------------------------------------
// Classification

struct ClassificationMetrics {
  double precision = 0.0;  // macro
  double recall = 0.0;     // macro
  double macro_f1 = 0.0;
  double accuracy = 0.0;
};

/// Per-class precision / recall / F1 with 0 for undefined ratios, averaged
/// over all `num_classes` classes.
inline ClassificationMetrics classification_metrics(std::span<const std::size_t> predictions,
                                                    std::span<const std::size_t> golds, std::size_t num_classes) {
  if (predictions.size() != golds.size()) throw Error("classification_metrics: length mismatch");
  if (num_classes == 0) throw Error("classification_metrics: need at least one class");
  std::vector<std::size_t> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const std::size_t p = predictions[i], g = golds[i];
    if (p >= num_classes || g >= num_classes) throw Error("classification_metrics: label out of range");
    if (p == g) {
      ++tp[g];
      ++correct;
    } else {
      ++fp[p];
      ++fn[g];
    }
  }
  auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
  ClassificationMetrics m;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double prec = ratio(tp[c], tp[c] + fp[c]);
    const double rec = ratio(tp[c], tp[c] + fn[c]);
    m.precision += prec;
    m.recall += rec;
    m.macro_f1 += prec + rec == 0.0 ? 0.0 : 2.0 * prec * rec / (prec + rec);
  }
  const double k = static_cast<double>(num_classes);
  m.precision /= k;
  m.recall /= k;
  m.macro_f1 /= k;
  m.accuracy = ratio(correct, golds.size());
  return m;
}

// ---------------------------------------------------------------------------
// Fill-in-the-blank

/// Percentage of masked tokens whose prediction matches the gold token
/// exactly after both are normalized with `table`.
inline double fill_blank_accuracy(std::span<const std::vector<Prediction>> predictions,
                                  std::span<const MaskedSentence> masked_set, const MappingTable& table = {}) {
  if (predictions.size() != masked_set.size()) throw Error("fill_blank_accuracy: sentence count mismatch");
  std::size_t total = 0, correct = 0;
  for (std::size_t s = 0; s < masked_set.size(); ++s) {
    const auto& gold = masked_set[s].gold;
    const auto& pred = predictions[s];
    if (pred.size() != gold.size()) {
      throw Error("fill_blank_accuracy: sentence \"" + masked_set[s].id + "\" has " + std::to_string(pred.size()) +
                  " predictions for " + std::to_string(gold.size()) + " masks");
    }
    for (std::size_t i = 0; i < gold.size(); ++i) {
      if (pred[i].first != gold[i].first) {
        throw Error("fill_blank_accuracy: prediction position mismatch in \"" + masked_set[s].id + "\"");
      }
      ++total;
      if (normalize(pred[i].second, table) == normalize(gold[i].second, table)) ++correct;
    }
  }
  if (total == 0) throw Error("fill_blank_accuracy: no masked tokens");
  return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Protocols

/// Each paraphrase is a query whose gold item is its prime question; the
/// rank is looked up in the top `depth` hits.
inline std::vector<RankOutcome> run_paraphrase_protocol(std::span<const ParaphrasePair> pairs, const Retriever& retriever,
                                                        std::size_t depth = 100,
                                                        const Tokenizer& tokenizer = default_tokenizer()) {
  if (pairs.empty()) throw Error("paraphrase protocol: no pairs");
  std::vector<RankOutcome> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (!retriever.contains(p.prime_id)) throw Error("paraphrase protocol: \"" + p.prime_id + "\" is not indexed");
    const TokenSequence query = tokenizer(p.paraphrase);
    RankOutcome o{p.prime_id, std::nullopt};
    if (!query.empty()) {
      const std::size_t r = retriever.search(query, depth, "paraphrase:" + p.prime_id).rank_of(p.prime_id);
      if (r > 0) o.rank = r;
    }
    out.push_back(std::move(o));
  }
  return out;
}

/// Uniform sample of `n` records without replacement (all when n >= size),
/// kept in draw order.
inline std::vector<QARecord> sample_records(const Corpus& corpus, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<QARecord> out;
  for (std::size_t i : rng.sample_indices(corpus.size(), std::min(n, corpus.size()))) out.push_back(corpus[i]);
  return out;
}

struct NoiseRow {
  double noise = 0.0;
  double r_at_1 = 0.0;  // fraction
  std::size_t queries = 0;
};

/// For each noise level m, every sampled question is corrupted with
/// inject_noise and issued as a query; R@1 counts retrieval of the original.
/// Query i at level j uses seed derive_seed(seed, j, i).
inline std::vector<NoiseRow> noise_sweep(std::span<const QARecord> sample, const Retriever& retriever,
                                         std::span<const double> grid, const std::vector<std::string>& vocab,
                                         std::uint64_t seed, const Tokenizer& tokenizer = default_tokenizer()) {
  if (sample.empty()) throw Error("noise_sweep: empty sample");
  for (double m : grid) {
    if (!(m >= 0.0 && m <= 1.0)) throw Error("noise_sweep: noise levels must lie in [0, 1]");
  }
  std::vector<TokenSequence> base;
  base.reserve(sample.size());
  for (const auto& r : sample) {
    if (!retriever.contains(r.id)) throw Error("noise_sweep: \"" + r.id + "\" is not indexed");
    base.push_back(tokenizer(r.question));
  }
  std::vector<NoiseRow> rows;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    std::vector<RankOutcome> outcomes;
    outcomes.reserve(sample.size());
    for (std::size_t i = 0; i < sample.size(); ++i) {
      const TokenSequence noisy = inject_noise(base[i], grid[j], vocab, derive_seed(seed, j, i));
      RankOutcome o{sample[i].id, std::nullopt};
      if (!noisy.empty()) {
        const auto hits = retriever.search(noisy, 1, "noise:" + std::to_string(j) + ":" + sample[i].id);
        if (!hits.empty() && hits[0].id == sample[i].id) o.rank = 1;
      }
      outcomes.push_back(std::move(o));
    }
    rows.push_back({grid[j], recall_at_k(outcomes, 1), outcomes.size()});
  }
  return rows;
}

}  // namespace medqr
