#pragma once

// Corpus TF-IDF statistics, keyphrase extraction, and pooling of per-token
// vectors into one question vector.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "medqr/corpus.hpp"
#include "medqr/embed.hpp"
#include "medqr/error.hpp"
#include "medqr/textnorm.hpp"

namespace medqr {

// ---------------------------------------------------------------------------
// TF-IDF statistics

/// Document frequencies over tokenized questions. idf uses the smoothed form
/// ln((N+1)/(df+1)) + 1, which stays positive; tokens never seen in the
/// corpus get df = 0.
class TfIdfStats {
 public:
  TfIdfStats() = default;

  explicit TfIdfStats(std::span<const TokenSequence> docs) {
    if (docs.empty()) throw Error("corpus_stats: empty corpus");
    n_docs_ = docs.size();
    std::size_t total = 0;
    std::vector<std::string_view> seen;
    for (const auto& doc : docs) {
      total += doc.size();
      seen.assign(doc.tokens.begin(), doc.tokens.end());
      std::sort(seen.begin(), seen.end());
      seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
      for (auto t : seen) ++df_[std::string(t)];
    }
    avgdl_ = static_cast<double>(total) / static_cast<double>(n_docs_);
  }

  std::size_t doc_count() const noexcept { return n_docs_; }
  double avgdl() const noexcept { return avgdl_; }
  std::size_t vocab_size() const noexcept { return df_.size(); }

  std::size_t df(std::string_view token) const {
    auto it = df_.find(std::string(token));
    return it == df_.end() ? 0 : it->second;
  }

  double idf(std::string_view token) const {
    const auto n = static_cast<double>(n_docs_);
    return std::log((n + 1.0) / (static_cast<double>(df(token)) + 1.0)) + 1.0;
  }

  /// Sorted distinct corpus tokens; the replacement pool for noisy queries.
  std::vector<std::string> vocabulary() const {
    std::vector<std::string> v;
    v.reserve(df_.size());
    for (const auto& [t, _] : df_) v.push_back(t);
    std::sort(v.begin(), v.end());
    return v;
  }

  const std::unordered_map<std::string, std::size_t>& document_frequencies() const noexcept { return df_; }

 private:
  std::size_t n_docs_ = 0;
  double avgdl_ = 0.0;
  std::unordered_map<std::string, std::size_t> df_;
};

inline std::vector<TokenSequence> tokenize_corpus(const Corpus& corpus,
                                                  const Tokenizer& tokenizer = default_tokenizer()) {
  std::vector<TokenSequence> docs;
  docs.reserve(corpus.size());
  for (const auto& r : corpus) docs.push_back(tokenizer(r.question));
  return docs;
}

inline TfIdfStats corpus_stats(const Corpus& corpus, const Tokenizer& tokenizer = default_tokenizer()) {
  if (corpus.empty()) throw Error("corpus_stats: empty corpus");
  const auto docs = tokenize_corpus(corpus, tokenizer);
  return TfIdfStats(docs);
}

// ---------------------------------------------------------------------------
// Keyphrases

struct KeyphraseSpan {
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive
  double score = 0.0;
  friend bool operator==(const KeyphraseSpan&, const KeyphraseSpan&) = default;
};

namespace detail {

struct Candidate {
  std::size_t first = 0;
  std::size_t length = 1;
  double score = 0.0;
  double idf = 0.0;
};

inline bool ranks_before(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.idf != b.idf) return a.idf > b.idf;
  return a.first < b.first;
}

inline std::vector<Candidate> unigram_candidates(const TokenSequence& tokens, const TfIdfStats& stats,
                                                 const StopwordSet& stopwords) {
  std::unordered_map<std::string_view, std::size_t> slot;
  std::vector<Candidate> cands;
  std::vector<std::size_t> tf;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (stopwords.contains(tokens[i])) continue;
    auto [it, fresh] = slot.emplace(tokens[i], cands.size());
    if (fresh) {
      cands.push_back({i, 1, 0.0, stats.idf(tokens[i])});
      tf.push_back(0);
    }
    ++tf[it->second];
  }
  for (std::size_t c = 0; c < cands.size(); ++c) {
    cands[c].score = static_cast<double>(tf[c]) * cands[c].idf;
  }
  return cands;
}

// Adjacent non-stop-word pairs, scored by the sum of member unigram scores.
inline std::vector<Candidate> bigram_candidates(const TokenSequence& tokens, const TfIdfStats& stats,
                                                const StopwordSet& stopwords) {
  std::unordered_map<std::string_view, double> unigram_score;
  for (const auto& c : unigram_candidates(tokens, stats, stopwords)) {
    unigram_score[tokens[c.first]] = c.score;
  }
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<Candidate> cands;
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    if (stopwords.contains(tokens[i]) || stopwords.contains(tokens[i + 1])) continue;
    std::string key = tokens[i] + '\x1f' + tokens[i + 1];
    if (!slot.emplace(std::move(key), cands.size()).second) continue;
    cands.push_back({i, 2, unigram_score[tokens[i]] + unigram_score[tokens[i + 1]],
                     stats.idf(tokens[i]) + stats.idf(tokens[i + 1])});
  }
  return cands;
}

}  // namespace detail

/// Top-n keyphrases by tf * idf, in rank order. Unigram mode selects
/// distinct non-stop-word token types and anchors each at its first
/// occurrence; bigram mode does the same for adjacent pairs, skipping pairs
/// that overlap an earlier pick.
inline std::vector<KeyphraseSpan> rank_keyphrases(const TokenSequence& tokens, const TfIdfStats& stats,
                                                  std::size_t n, const StopwordSet& stopwords,
                                                  bool bigrams = false) {
  if (n == 0) throw Error("extract_keyphrases: n must be >= 1");
  auto cands = bigrams ? detail::bigram_candidates(tokens, stats, stopwords)
                       : detail::unigram_candidates(tokens, stats, stopwords);
  if (bigrams && cands.empty()) return rank_keyphrases(tokens, stats, n, stopwords, false);
  std::sort(cands.begin(), cands.end(), detail::ranks_before);
  std::vector<KeyphraseSpan> picked;
  for (const auto& c : cands) {
    if (picked.size() == n) break;
    const KeyphraseSpan span{c.first, c.first + c.length, c.score};
    const bool overlaps = std::any_of(picked.begin(), picked.end(), [&](const KeyphraseSpan& p) {
      return span.start < p.end && p.start < span.end;
    });
    if (!overlaps) picked.push_back(span);
  }
  return picked;
}

/// rank_keyphrases() reordered by ascending start.
inline std::vector<KeyphraseSpan> extract_keyphrases(const TokenSequence& tokens, const TfIdfStats& stats,
                                                     std::size_t n, const StopwordSet& stopwords,
                                                     bool bigrams = false) {
  auto spans = rank_keyphrases(tokens, stats, n, stopwords, bigrams);
  std::sort(spans.begin(), spans.end(),
            [](const KeyphraseSpan& a, const KeyphraseSpan& b) { return a.start < b.start; });
  return spans;
}

struct KeyphraseSequence {
  TokenSequence sequence;
  std::vector<bool> keyphrase_mask;  // true only at tokens from inside a span
};

/// Each span widened by `window` tokens per side; overlapping widened regions
/// merge, the others are joined by one [SEP].
inline KeyphraseSequence build_keyphrase_sequence(const TokenSequence& tokens,
                                                  std::span<const KeyphraseSpan> spans,
                                                  std::size_t window) {
  const std::size_t len = tokens.size();
  std::vector<bool> inside(len, false);
  struct Region {
    std::size_t lo, hi;
  };
  std::vector<Region> regions;
  std::size_t prev_start = 0;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const auto& s = spans[i];
    if (s.start >= s.end || s.end > len) throw Error("build_keyphrase_sequence: span out of range");
    if (i > 0 && (s.start < prev_start || s.start < spans[i - 1].end)) {
      throw Error("build_keyphrase_sequence: spans must be disjoint and ascending");
    }
    prev_start = s.start;
    for (std::size_t p = s.start; p < s.end; ++p) inside[p] = true;
    const Region r{s.start > window ? s.start - window : 0, std::min(len, s.end + window)};
    if (!regions.empty() && r.lo < regions.back().hi) {
      regions.back().hi = std::max(regions.back().hi, r.hi);
    } else {
      regions.push_back(r);
    }
  }

  KeyphraseSequence out;
  for (std::size_t ri = 0; ri < regions.size(); ++ri) {
    if (ri > 0) {
      const Span anchor{out.sequence.offsets.back().end, out.sequence.offsets.back().end};
      out.sequence.push_back(std::string(kSepToken), anchor);
      out.keyphrase_mask.push_back(false);
    }
    for (std::size_t p = regions[ri].lo; p < regions[ri].hi; ++p) {
      out.sequence.push_back(tokens.tokens[p], tokens.offsets[p]);
      out.keyphrase_mask.push_back(inside[p]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pooling

enum class Strategy { all, rsw, kw, kw_rcnt };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::all:
      return "all";
    case Strategy::rsw:
      return "rsw";
    case Strategy::kw:
      return "kw";
    case Strategy::kw_rcnt:
      break;
  }
  return "kw_rcnt";
}

inline std::optional<Strategy> parse_strategy(std::string_view s) {
  if (s == "all") return Strategy::all;
  if (s == "rsw") return Strategy::rsw;
  if (s == "kw") return Strategy::kw;
  if (s == "kw_rcnt") return Strategy::kw_rcnt;
  return std::nullopt;
}

struct PoolingSpec {
  Strategy strategy = Strategy::all;
  std::size_t n_keyphrases = 5;
  std::size_t context_window = 2;
  StopwordSet stopwords;
  bool bigrams = false;

  bool uses_keyphrases() const noexcept {
    return strategy == Strategy::kw || strategy == Strategy::kw_rcnt;
  }

  void validate() const {
    if (uses_keyphrases() && n_keyphrases == 0) throw Error("pooling spec: n_keyphrases must be >= 1");
  }

  friend bool operator==(const PoolingSpec&, const PoolingSpec&) = default;
};

inline nlohmann::json to_json(const PoolingSpec& spec) {
  return {{"strategy", to_string(spec.strategy)},
          {"n_keyphrases", spec.n_keyphrases},
          {"context_window", spec.context_window},
          {"bigrams", spec.bigrams},
          {"stopwords", spec.stopwords.sorted()}};
}

inline PoolingSpec pooling_spec_from_json(const nlohmann::json& j) {
  PoolingSpec spec;
  try {
    auto strategy = parse_strategy(j.at("strategy").get<std::string>());
    if (!strategy) throw Error("pooling spec: unknown strategy");
    spec.strategy = *strategy;
    spec.n_keyphrases = j.at("n_keyphrases").get<std::size_t>();
    spec.context_window = j.at("context_window").get<std::size_t>();
    spec.bigrams = j.value("bigrams", false);
    spec.stopwords = StopwordSet(j.value("stopwords", std::vector<std::string>{}));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("pooling spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

struct QuestionRepresentation {
  std::vector<double> vector;
  Strategy strategy = Strategy::all;  // as requested
  bool fell_back = false;             // degraded to mean over all tokens
  std::string source_id;
};

namespace detail {

inline std::vector<double> masked_mean(const VectorSequence& vecs, const std::vector<bool>* mask) {
  std::vector<double> mean(vecs.dim(), 0.0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < vecs.size(); ++i) {
    if (mask && !(*mask)[i]) continue;
    const auto row = vecs[i];
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += row[j];
    ++count;
  }
  if (count > 0) {
    const double inv = 1.0 / static_cast<double>(count);
    for (double& x : mean) x *= inv;
  }
  return mean;
}

}  // namespace detail

/// Suffix of the sequence id under which contextual backends store the
/// keyphrase sequence of a question.
inline constexpr std::string_view kKeyphraseSequenceSuffix = "#kw";

/// Pools a tokenized question into one vector:
///   all      mean over every token
///   rsw      mean over non-stop-word tokens
///   kw       keyphrase sequence (context and [SEP] included) embedded, mean over all of it
///   kw_rcnt  same sequence, mean over keyphrase positions only
/// rsw and the kw variants fall back to `all` when they have nothing to pool.
inline QuestionRepresentation represent(const TokenSequence& tokens, const PoolingSpec& spec,
                                        const EmbeddingBackend& backend, const TfIdfStats& stats,
                                        std::string_view source_id = {}) {
  if (tokens.empty()) throw Error("represent: question has no tokens");
  spec.validate();
  QuestionRepresentation rep;
  rep.strategy = spec.strategy;
  rep.source_id = std::string(source_id);

  auto pool_all = [&] {
    rep.vector = detail::masked_mean(backend.embed(tokens, source_id), nullptr);
  };

  switch (spec.strategy) {
    case Strategy::all:
      pool_all();
      break;
    case Strategy::rsw: {
      std::vector<bool> keep(tokens.size());
      bool any = false;
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        keep[i] = !spec.stopwords.contains(tokens[i]);
        any = any || keep[i];
      }
      if (!any) {
        rep.fell_back = true;
        pool_all();
        break;
      }
      rep.vector = detail::masked_mean(backend.embed(tokens, source_id), &keep);
      break;
    }
    case Strategy::kw:
    case Strategy::kw_rcnt: {
      const auto spans = extract_keyphrases(tokens, stats, spec.n_keyphrases, spec.stopwords, spec.bigrams);
      if (spans.empty()) {
        rep.fell_back = true;
        pool_all();
        break;
      }
      const auto kw = build_keyphrase_sequence(tokens, spans, spec.context_window);
      std::string kw_id;
      if (!backend.context_free()) kw_id = std::string(source_id) + std::string(kKeyphraseSequenceSuffix);
      const auto vecs = backend.embed(kw.sequence, kw_id);
      rep.vector = detail::masked_mean(vecs, spec.strategy == Strategy::kw_rcnt ? &kw.keyphrase_mask : nullptr);
      break;
    }
  }
  return rep;
}

inline QuestionRepresentation represent_text(std::string_view text, const PoolingSpec& spec,
                                             const EmbeddingBackend& backend, const TfIdfStats& stats,
                                             std::string_view source_id = {},
                                             const Tokenizer& tokenizer = default_tokenizer()) {
  return represent(tokenizer(text), spec, backend, stats, source_id);
}

}  // namespace medqr
