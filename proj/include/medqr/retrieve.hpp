#pragma once

// Exact dense cosine search, BM25 and TF-IDF bag-of-words retrieval, and
// BM25-then-dense re-ranking.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "medqr/corpus.hpp"
#include "medqr/embed.hpp"
#include "medqr/error.hpp"
#include "medqr/represent.hpp"
#include "medqr/textnorm.hpp"

namespace medqr {

template <typename T, typename U>
  requires std::floating_point<T> && std::floating_point<U>
double cosine(std::span<const T> u, std::span<const U> v) {
  if (u.size() != v.size()) {
    throw Error("cosine: dimension mismatch (" + std::to_string(u.size()) + " vs " +
                std::to_string(v.size()) + ")");
  }
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = u[i], b = v[i];
    dot += a * b;
    nu += a * a;
    nv += b * b;
  }
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

inline double cosine(const std::vector<double>& u, const std::vector<double>& v) {
  return cosine(std::span<const double>(u), std::span<const double>(v));
}

// ---------------------------------------------------------------------------
// Ranked lists

struct Hit {
  std::string id;
  double score = 0.0;
  friend bool operator==(const Hit&, const Hit&) = default;
};

/// Descending score, ties by ascending id.
inline bool hit_before(const Hit& a, const Hit& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

struct RankedList {
  std::vector<Hit> hits;

  std::size_t size() const noexcept { return hits.size(); }
  bool empty() const noexcept { return hits.empty(); }
  const Hit& operator[](std::size_t i) const { return hits[i]; }

  /// 1-based rank of `id`, or 0 when absent.
  std::size_t rank_of(std::string_view id) const {
    for (std::size_t i = 0; i < hits.size(); ++i) {
      if (hits[i].id == id) return i + 1;
    }
    return 0;
  }

  friend bool operator==(const RankedList&, const RankedList&) = default;
};

inline RankedList top_k(std::vector<Hit> hits, std::size_t k) {
  const std::size_t keep = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), hit_before);
  hits.resize(keep);
  return {std::move(hits)};
}

// ---------------------------------------------------------------------------
// Dense index

class DenseIndex {
 public:
  struct Entry {
    std::string id;
    std::vector<float> vector;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  DenseIndex() = default;

  DenseIndex(std::size_t dim, PoolingSpec spec, nlohmann::json backend = {})
      : dim_(dim), spec_(std::move(spec)), backend_(std::move(backend)) {}

  void add(std::string id, std::vector<float> vec) {
    if (vec.size() != dim_) throw Error("dense index: vector dimension mismatch for \"" + id + "\"");
    if (!by_id_.emplace(id, entries_.size()).second) throw Error("dense index: duplicate id \"" + id + "\"");
    entries_.push_back({std::move(id), std::move(vec)});
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const PoolingSpec& spec() const noexcept { return spec_; }
  /// Backend descriptor recorded at build time ({kind, dim[, seed]}); may be null.
  const nlohmann::json& backend() const noexcept { return backend_; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  const Entry* find(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : &entries_[it->second];
  }

  bool operator==(const DenseIndex& o) const {
    return dim_ == o.dim_ && spec_ == o.spec_ && backend_ == o.backend_ && entries_ == o.entries_;
  }

 private:
  std::size_t dim_ = 0;
  PoolingSpec spec_;
  nlohmann::json backend_;
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

/// Represents every question; runs in parallel across worker threads but
/// the entry order is always corpus order.
inline DenseIndex build_dense_index(const Corpus& corpus, const PoolingSpec& spec,
                                    const EmbeddingBackend& backend, const TfIdfStats& stats,
                                    const Tokenizer& tokenizer = default_tokenizer(),
                                    unsigned threads = 0) {
  if (corpus.empty()) throw Error("build_dense_index: empty corpus");
  spec.validate();
  const std::size_t n = corpus.size();
  std::vector<std::vector<float>> vectors(n);
  std::vector<std::exception_ptr> errors(n);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      try {
        const auto rep = represent(tokenizer(corpus[i].question), spec, backend, stats, corpus[i].id);
        vectors[i].assign(rep.vector.begin(), rep.vector.end());
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t b = 0; b < n; b += chunk) pool.emplace_back(work, b, std::min(n, b + chunk));
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  DenseIndex index(backend.dim(), spec, backend.describe());
  for (std::size_t i = 0; i < n; ++i) index.add(corpus[i].id, std::move(vectors[i]));
  return index;
}

/// Exact brute-force top-k by cosine.
inline RankedList dense_search(const DenseIndex& index, std::span<const double> query, std::size_t k) {
  if (index.empty()) throw Error("dense_search: empty index");
  if (k == 0) throw Error("dense_search: k must be >= 1");
  if (query.size() != index.dim()) throw Error("dense_search: query dimension mismatch");
  std::vector<Hit> hits;
  hits.reserve(index.size());
  for (const auto& e : index.entries()) {
    hits.push_back({e.id, cosine(query, std::span<const float>(e.vector))});
  }
  return top_k(std::move(hits), k);
}

// ---------------------------------------------------------------------------
// Inverted index

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

class InvertedIndex {
 public:
  struct Posting {
    std::size_t doc;  // position in corpus order
    std::size_t tf;
  };

  InvertedIndex() = default;

  InvertedIndex(std::vector<std::string> ids, const std::vector<TokenSequence>& docs)
      : ids_(std::move(ids)), stats_(docs) {
    if (ids_.size() != docs.size()) throw Error("inverted index: id/document count mismatch");
    doc_len_.reserve(docs.size());
    for (std::size_t d = 0; d < docs.size(); ++d) {
      doc_len_.push_back(docs[d].size());
      std::unordered_map<std::string_view, std::size_t> tf;
      for (const auto& t : docs[d].tokens) ++tf[t];
      for (const auto& [t, count] : tf) postings_[std::string(t)].push_back({d, count});
    }
    for (auto& [_, list] : postings_) {
      std::sort(list.begin(), list.end(), [](const Posting& a, const Posting& b) { return a.doc < b.doc; });
    }
    tfidf_norm_.assign(docs.size(), 0.0);
    for (const auto& [t, list] : postings_) {
      const double idf = stats_.idf(t);
      for (const auto& p : list) tfidf_norm_[p.doc] += std::pow(static_cast<double>(p.tf) * idf, 2);
    }
    for (double& x : tfidf_norm_) x = std::sqrt(x);
  }

  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  const TfIdfStats& stats() const noexcept { return stats_; }
  const std::string& id(std::size_t doc) const { return ids_[doc]; }
  std::size_t doc_len(std::size_t doc) const { return doc_len_[doc]; }
  double tfidf_norm(std::size_t doc) const { return tfidf_norm_[doc]; }

  const std::vector<Posting>* postings(std::string_view token) const {
    auto it = postings_.find(std::string(token));
    return it == postings_.end() ? nullptr : &it->second;
  }

 private:
  std::vector<std::string> ids_;
  std::vector<std::size_t> doc_len_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  std::vector<double> tfidf_norm_;
  TfIdfStats stats_;
};

inline InvertedIndex build_inverted_index(const Corpus& corpus,
                                          const Tokenizer& tokenizer = default_tokenizer()) {
  if (corpus.empty()) throw Error("build_inverted_index: empty corpus");
  std::vector<std::string> ids;
  ids.reserve(corpus.size());
  for (const auto& r : corpus) ids.push_back(r.id);
  return InvertedIndex(std::move(ids), tokenize_corpus(corpus, tokenizer));
}

namespace detail {

inline std::vector<std::pair<std::string_view, std::size_t>> term_counts(const TokenSequence& q) {
  std::vector<std::pair<std::string_view, std::size_t>> counts;
  std::unordered_map<std::string_view, std::size_t> slot;
  for (const auto& t : q.tokens) {
    auto [it, fresh] = slot.emplace(t, counts.size());
    if (fresh) counts.emplace_back(t, 0);
    ++counts[it->second].second;
  }
  return counts;
}

inline RankedList collect(const InvertedIndex& index, const std::vector<double>& scores, std::size_t k) {
  std::vector<Hit> hits;
  for (std::size_t d = 0; d < scores.size(); ++d) {
    if (scores[d] > 0.0) hits.push_back({index.id(d), scores[d]});
  }
  return top_k(std::move(hits), k);
}

}  // namespace detail

inline double bm25_idf(std::size_t n_docs, std::size_t df) {
  const double n = static_cast<double>(n_docs), f = static_cast<double>(df);
  return std::log(1.0 + (n - f + 0.5) / (f + 0.5));
}

/// Okapi BM25 summed over distinct query terms; zero-score documents dropped.
inline RankedList bm25_search(const InvertedIndex& index, const TokenSequence& query, std::size_t k,
                              Bm25Params params = {}) {
  if (index.empty()) throw Error("bm25_search: empty index");
  if (k == 0) throw Error("bm25_search: k must be >= 1");
  const auto& stats = index.stats();
  std::vector<double> scores(index.size(), 0.0);
  for (const auto& [term, _] : detail::term_counts(query)) {
    const auto* list = index.postings(term);
    if (!list) continue;
    const double idf = bm25_idf(stats.doc_count(), list->size());
    for (const auto& p : *list) {
      const double tf = static_cast<double>(p.tf);
      const double norm = 1.0 - params.b + params.b * static_cast<double>(index.doc_len(p.doc)) / stats.avgdl();
      scores[p.doc] += idf * tf * (params.k1 + 1.0) / (tf + params.k1 * norm);
    }
  }
  return detail::collect(index, scores, k);
}

/// Cosine between L2-normalized tf * idf bags (smoothed idf; unseen query
/// terms count toward the query norm only).
inline RankedList tfidf_search(const InvertedIndex& index, const TokenSequence& query, std::size_t k) {
  if (index.empty()) throw Error("tfidf_search: empty index");
  if (k == 0) throw Error("tfidf_search: k must be >= 1");
  const auto& stats = index.stats();
  std::vector<double> scores(index.size(), 0.0);
  double qnorm = 0.0;
  for (const auto& [term, count] : detail::term_counts(query)) {
    const double idf = stats.idf(term);
    const double qw = static_cast<double>(count) * idf;
    qnorm += qw * qw;
    const auto* list = index.postings(term);
    if (!list) continue;
    for (const auto& p : *list) scores[p.doc] += qw * static_cast<double>(p.tf) * idf;
  }
  if (qnorm == 0.0) return {};
  qnorm = std::sqrt(qnorm);
  for (std::size_t d = 0; d < scores.size(); ++d) {
    if (scores[d] > 0.0) scores[d] /= qnorm * index.tfidf_norm(d);
  }
  return detail::collect(index, scores, k);
}

// ---------------------------------------------------------------------------
// Two-stage

/// BM25 top-`first_stage_k` candidates re-scored purely by cosine between the
/// query representation and each candidate's indexed vector.
inline RankedList rerank(const RankedList& candidates, const DenseIndex& dense,
                         std::span<const double> query_vector, std::size_t k) {
  std::vector<Hit> hits;
  hits.reserve(candidates.size());
  for (const auto& c : candidates.hits) {
    const auto* entry = dense.find(c.id);
    if (!entry) throw Error("two_stage_search: candidate \"" + c.id + "\" missing from the dense index");
    hits.push_back({c.id, cosine(query_vector, std::span<const float>(entry->vector))});
  }
  return top_k(std::move(hits), k);
}

inline RankedList two_stage_search(const InvertedIndex& inverted, const DenseIndex& dense,
                                   const TokenSequence& query, std::size_t first_stage_k, std::size_t k,
                                   const PoolingSpec& spec, const EmbeddingBackend& backend,
                                   const TfIdfStats& stats, Bm25Params params = {},
                                   std::string_view query_id = {}) {
  if (k == 0 || first_stage_k < k) throw Error("two_stage_search: need first_stage_k >= k >= 1");
  const RankedList candidates = bm25_search(inverted, query, first_stage_k, params);
  if (candidates.empty()) return {};
  const auto rep = represent(query, spec, backend, stats, query_id);
  return rerank(candidates, dense, rep.vector, k);
}

// ---------------------------------------------------------------------------
// Retriever interface used by the evaluation protocols

class Retriever {
 public:
  virtual ~Retriever() = default;
  virtual std::string name() const = 0;
  virtual RankedList search(const TokenSequence& query, std::size_t k, std::string_view query_id = {}) const = 0;
  virtual bool contains(std::string_view id) const = 0;
};

class DenseRetriever final : public Retriever {
 public:
  DenseRetriever(const DenseIndex& index, const EmbeddingBackend& backend, const TfIdfStats& stats)
      : index_(index), backend_(backend), stats_(stats) {
    if (backend.dim() != index.dim()) throw Error("dense retriever: backend dim differs from index dim");
  }

  std::string name() const override { return "dense_" + std::string(to_string(index_.spec().strategy)); }

  RankedList search(const TokenSequence& query, std::size_t k, std::string_view query_id) const override {
    const auto rep = represent(query, index_.spec(), backend_, stats_, query_id);
    return dense_search(index_, rep.vector, k);
  }

  bool contains(std::string_view id) const override { return index_.find(id) != nullptr; }

 private:
  const DenseIndex& index_;
  const EmbeddingBackend& backend_;
  const TfIdfStats& stats_;
};

class Bm25Retriever final : public Retriever {
 public:
  Bm25Retriever(const InvertedIndex& index, const Corpus& corpus, Bm25Params params = {})
      : index_(index), corpus_(corpus), params_(params) {}

  std::string name() const override { return "bm25"; }
  RankedList search(const TokenSequence& query, std::size_t k, std::string_view) const override {
    return bm25_search(index_, query, k, params_);
  }
  bool contains(std::string_view id) const override { return corpus_.contains(id); }

 private:
  const InvertedIndex& index_;
  const Corpus& corpus_;
  Bm25Params params_;
};

class TfIdfRetriever final : public Retriever {
 public:
  TfIdfRetriever(const InvertedIndex& index, const Corpus& corpus) : index_(index), corpus_(corpus) {}

  std::string name() const override { return "tfidf"; }
  RankedList search(const TokenSequence& query, std::size_t k, std::string_view) const override {
    return tfidf_search(index_, query, k);
  }
  bool contains(std::string_view id) const override { return corpus_.contains(id); }

 private:
  const InvertedIndex& index_;
  const Corpus& corpus_;
};

class TwoStageRetriever final : public Retriever {
 public:
  TwoStageRetriever(const InvertedIndex& inverted, const DenseIndex& dense, const EmbeddingBackend& backend,
                    std::size_t first_stage_k, Bm25Params params = {})
      : inverted_(inverted), dense_(dense), backend_(backend), first_stage_k_(first_stage_k), params_(params) {}

  std::string name() const override {
    return "bm25+" + std::string(to_string(dense_.spec().strategy));
  }

  RankedList search(const TokenSequence& query, std::size_t k, std::string_view query_id) const override {
    return two_stage_search(inverted_, dense_, query, std::max(first_stage_k_, k), k, dense_.spec(), backend_,
                            inverted_.stats(), params_, query_id);
  }

  bool contains(std::string_view id) const override { return dense_.find(id) != nullptr; }

 private:
  const InvertedIndex& inverted_;
  const DenseIndex& dense_;
  const EmbeddingBackend& backend_;
  std::size_t first_stage_k_;
  Bm25Params params_;
};

}  // namespace medqr
