#pragma once

// Test helpers: scratch directories, synthetic corpora and brute-force
// reference implementations that share no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "medqr/medqr.hpp"

namespace testsupport {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "medqr-test-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write(const fs::path& p, const std::string& content) { medqr::io::write_file(p, content); }

/// Lowercase ASCII word "w<index>" style vocabulary of the given size.
/// "wa", "wb", ... : letters only, so each word is a single token.
inline std::string word(std::size_t i) {
  std::string s;
  do {
    s.insert(s.begin(), static_cast<char>('a' + i % 26));
    i /= 26;
  } while (i > 0);
  return "w" + s;
}

inline std::vector<std::string> word_list(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(word(i));
  return out;
}

/// Corpus whose questions hold `min_len`..`max_len` tokens drawn from a
/// vocabulary of `vocab` words. With `distinct` set, tokens inside one
/// question never repeat. Ids are zero-padded so lexical order = creation
/// order.
inline medqr::Corpus synthetic_corpus(std::size_t n, std::uint64_t seed, std::size_t vocab = 300,
                                      std::size_t min_len = 4, std::size_t max_len = 12, bool distinct = false) {
  std::mt19937_64 gen(seed);
  const auto words = word_list(vocab);
  medqr::Corpus corpus;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t len = min_len + gen() % (max_len - min_len + 1);
    std::vector<std::string> toks;
    std::set<std::string> used;
    while (toks.size() < len) {
      const std::string& w = words[gen() % words.size()];
      if (distinct && !used.insert(w).second) continue;
      toks.push_back(w);
    }
    std::string q;
    for (const auto& t : toks) q += (q.empty() ? "" : " ") + t;
    char id[32];
    std::snprintf(id, sizeof id, "d%05zu", i);
    corpus.add({id, q, "answer " + std::to_string(i), i % 3 == 0 ? "cardio" : "other", "synthetic",
                medqr::Style::unknown});
  }
  return corpus;
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

struct OracleHit {
  std::string id;
  double score;
};

inline void oracle_sort(std::vector<OracleHit>& hits) {
  std::sort(hits.begin(), hits.end(), [](const OracleHit& a, const OracleHit& b) {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
  });
}

/// Full scan: cosine of the query against every stored float vector.
inline std::vector<OracleHit> naive_dense(const medqr::DenseIndex& index, const std::vector<double>& q, std::size_t k) {
  std::vector<OracleHit> all;
  for (const auto& e : index.entries()) {
    double dot = 0, a = 0, b = 0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double x = q[i], y = static_cast<double>(e.vector[i]);
      dot += x * y;
      a += x * x;
      b += y * y;
    }
    double c = (a == 0 || b == 0) ? 0.0 : dot / (std::sqrt(a) * std::sqrt(b));
    c = std::min(1.0, std::max(-1.0, c));
    all.push_back({e.id, c});
  }
  oracle_sort(all);
  if (all.size() > k) all.resize(k);
  return all;
}

struct BagDoc {
  std::string id;
  std::vector<std::string> tokens;
};

inline std::vector<std::string> distinct_in_order(const std::vector<std::string>& toks) {
  std::vector<std::string> out;
  for (const auto& t : toks) {
    if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
  }
  return out;
}

inline std::size_t count_of(const std::vector<std::string>& toks, const std::string& t) {
  return static_cast<std::size_t>(std::count(toks.begin(), toks.end(), t));
}

inline std::size_t doc_freq(const std::vector<BagDoc>& docs, const std::string& t) {
  std::size_t df = 0;
  for (const auto& d : docs) df += count_of(d.tokens, t) > 0;
  return df;
}

/// Okapi BM25 evaluated document by document from the raw token lists.
inline std::vector<OracleHit> naive_bm25(const std::vector<BagDoc>& docs, const std::vector<std::string>& query,
                                         std::size_t k, double k1 = 1.2, double b = 0.75) {
  const double n = static_cast<double>(docs.size());
  double total = 0;
  for (const auto& d : docs) total += static_cast<double>(d.tokens.size());
  const double avgdl = total / n;
  std::vector<OracleHit> hits;
  for (const auto& d : docs) {
    double s = 0;
    for (const auto& t : distinct_in_order(query)) {
      const double tf = static_cast<double>(count_of(d.tokens, t));
      if (tf == 0) continue;
      const double df = static_cast<double>(doc_freq(docs, t));
      const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
      s += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * static_cast<double>(d.tokens.size()) / avgdl));
    }
    if (s > 0) hits.push_back({d.id, s});
  }
  oracle_sort(hits);
  if (hits.size() > k) hits.resize(k);
  return hits;
}

/// Dense TF-IDF bag vectors over the union vocabulary, L2-normalized, dot product.
inline std::vector<OracleHit> naive_tfidf(const std::vector<BagDoc>& docs, const std::vector<std::string>& query,
                                          std::size_t k) {
  const double n = static_cast<double>(docs.size());
  std::set<std::string> vocab;
  for (const auto& d : docs) vocab.insert(d.tokens.begin(), d.tokens.end());
  vocab.insert(query.begin(), query.end());
  auto idf = [&](const std::string& t) { return std::log((n + 1) / (static_cast<double>(doc_freq(docs, t)) + 1)) + 1; };
  auto bag = [&](const std::vector<std::string>& toks) {
    std::vector<double> v;
    double norm = 0;
    for (const auto& t : vocab) {
      v.push_back(static_cast<double>(count_of(toks, t)) * idf(t));
      norm += v.back() * v.back();
    }
    norm = std::sqrt(norm);
    if (norm > 0) {
      for (double& x : v) x /= norm;
    }
    return v;
  };
  const auto qv = bag(query);
  std::vector<OracleHit> hits;
  for (const auto& d : docs) {
    const auto dv = bag(d.tokens);
    double s = 0;
    for (std::size_t i = 0; i < qv.size(); ++i) s += qv[i] * dv[i];
    if (s > 1e-15) hits.push_back({d.id, s});
  }
  oracle_sort(hits);
  if (hits.size() > k) hits.resize(k);
  return hits;
}

inline std::vector<BagDoc> bag_docs(const medqr::Corpus& corpus) {
  std::vector<BagDoc> out;
  for (const auto& r : corpus) out.push_back({r.id, split_ws(r.question)});
  return out;
}

}  // namespace testsupport
