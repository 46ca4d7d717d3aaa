#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"

using namespace medqr;
using testsupport::TempDir;

namespace {

Corpus docs(const std::vector<std::pair<std::string, std::string>>& items) {
  Corpus c;
  for (const auto& [id, q] : items) c.add({id, q, "", "", "", {}});
  return c;
}

std::vector<std::string> ids(const RankedList& r) {
  std::vector<std::string> out;
  for (const auto& h : r.hits) out.push_back(h.id);
  return out;
}

void expect_matches_oracle(const RankedList& got, const std::vector<testsupport::OracleHit>& want, double tol) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    EXPECT_NEAR(got[i].score, want[i].score, tol);
    // Positions may only differ inside groups of numerically tied scores.
    if (got[i].id != want[i].id) {
      EXPECT_NEAR(got[i].score, want[i].score, 1e-12);
    }
  }
}

DenseIndex manual_index(const std::vector<std::pair<std::string, std::vector<float>>>& rows) {
  DenseIndex idx(rows.front().second.size(), {});
  for (const auto& [id, v] : rows) idx.add(id, v);
  return idx;
}

}  // namespace

TEST(Cosine, Examples) {
  EXPECT_NEAR(cosine(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}), 1.0, 1e-15);
  EXPECT_EQ(cosine(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 0.0);
  EXPECT_NEAR(cosine(std::vector<double>{1, 1}, std::vector<double>{1, 0}), 0.70710678, 1e-8);
  EXPECT_EQ(cosine(std::vector<double>{0, 0}, std::vector<double>{1, 0}), 0.0);
  EXPECT_THROW(cosine(std::vector<double>{1}, std::vector<double>{1, 0}), Error);
}

TEST(DenseSearch, SelfRetrievalAndSaturation) {
  const auto idx = manual_index({{"a", {1, 0, 0}}, {"b", {0, 1, 0}}, {"c", {1, 1, 1}}});
  const std::vector<double> q = {0, 1, 0};
  const auto r = dense_search(idx, q, 1);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].id, "b");
  EXPECT_DOUBLE_EQ(r[0].score, 1.0);
  const auto all = dense_search(idx, q, 10);
  EXPECT_EQ(all.size(), 3u);
  for (std::size_t i = 0; i + 1 < all.size(); ++i) EXPECT_GE(all[i].score, all[i + 1].score);
}

TEST(DenseSearch, TiesBrokenById) {
  // cosines 0.9, 0.2, 0.9 for ids b, c, a
  const float s = static_cast<float>(std::sqrt(1 - 0.81));
  const float t = static_cast<float>(std::sqrt(1 - 0.04));
  const auto idx = manual_index({{"b", {0.9f, s}}, {"c", {0.2f, t}}, {"a", {0.9f, s}}});
  EXPECT_EQ(ids(dense_search(idx, std::vector<double>{1, 0}, 3)), (std::vector<std::string>{"a", "b", "c"}));
}

TEST(DenseSearch, Errors) {
  const auto idx = manual_index({{"a", {1, 0}}});
  EXPECT_THROW(dense_search(idx, std::vector<double>{1, 0, 0}, 1), Error);
  EXPECT_THROW(dense_search(idx, std::vector<double>{1, 0}, 0), Error);
  EXPECT_THROW(dense_search(DenseIndex(2, {}), std::vector<double>{1, 0}, 1), Error);
}

TEST(DenseSearch, MatchesFullScanOracle) {
  std::mt19937_64 gen(21);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + gen() % 300, dim = 1 + gen() % 32;
    DenseIndex idx(dim, {});
    std::vector<std::vector<float>> pool;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<float> v(dim);
      if (!pool.empty() && gen() % 5 == 0) {
        v = pool[gen() % pool.size()];  // duplicates exercise the id tiebreak
      } else {
        for (auto& x : v) x = static_cast<float>(nd(gen));
      }
      pool.push_back(v);
      idx.add("id" + std::to_string(gen() % 100000) + "_" + std::to_string(i), v);
    }
    std::vector<double> q(dim);
    for (auto& x : q) x = nd(gen);
    const std::size_t k = 1 + gen() % (n + 5);
    const auto got = dense_search(idx, q, k);
    const auto want = testsupport::naive_dense(idx, q, k);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      EXPECT_EQ(got[i].id, want[i].id);
      EXPECT_EQ(got[i].score, want[i].score);
    }
    // Positive scaling of the query leaves the order unchanged.
    for (auto& x : q) x *= 3.5;
    EXPECT_EQ(ids(dense_search(idx, q, k)), ids(got));
  }
}

TEST(BuildDenseIndex, ShapeAndDeterminism) {
  const auto c = testsupport::synthetic_corpus(3, 1);
  const HashBackend b(12, 0);
  const auto s = corpus_stats(c);
  const auto idx = build_dense_index(c, {}, b, s);
  EXPECT_EQ(idx.size(), 3u);
  EXPECT_EQ(idx.dim(), 12u);
  const auto big = testsupport::synthetic_corpus(200, 2);
  EXPECT_EQ(serialize_index(build_dense_index(big, {}, b, corpus_stats(big), default_tokenizer(), 4)),
            serialize_index(build_dense_index(big, {}, b, corpus_stats(big), default_tokenizer(), 1)));
}

TEST(BuildDenseIndex, SelfRetrieval) {
  const auto c = testsupport::synthetic_corpus(150, 3, 400, 5, 12, true);
  const HashBackend b(64, 0);
  const auto s = corpus_stats(c);
  for (auto st : {Strategy::all, Strategy::kw_rcnt}) {
    PoolingSpec spec;
    spec.strategy = st;
    const auto idx = build_dense_index(c, spec, b, s);
    for (const auto& r : c) {
      const auto rep = represent(tokenize(r.question), spec, b, s, r.id);
      EXPECT_EQ(dense_search(idx, rep.vector, 1)[0].id, r.id);
    }
  }
}

TEST(Bm25, HandExample) {
  const auto c = docs({{"d1", "a b"}, {"d2", "a a"}});
  const auto inv = build_inverted_index(c);
  const auto r = bm25_search(inv, tokenize("a"), 10);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].id, "d2");
  EXPECT_NEAR(r[0].score, 0.25069, 1e-5);
  EXPECT_NEAR(r[1].score, 0.18232, 1e-5);
}

TEST(Bm25, UnseenQueryAndRepeatedTerms) {
  const auto c = docs({{"d1", "a b"}, {"d2", "a a"}});
  const auto inv = build_inverted_index(c);
  EXPECT_TRUE(bm25_search(inv, tokenize("zzz"), 5).empty());
  EXPECT_EQ(bm25_search(inv, tokenize("a"), 5), bm25_search(inv, tokenize("a a"), 5));
  EXPECT_THROW(bm25_search(inv, tokenize("a"), 0), Error);
}

TEST(Bm25, MatchesOracleOnRandomCorpora) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 15; ++trial) {
    const auto c = testsupport::synthetic_corpus(20 + gen() % 100, gen(), 30 + gen() % 50, 1, 10);
    const auto inv = build_inverted_index(c);
    const auto bag = testsupport::bag_docs(c);
    for (int qi = 0; qi < 10; ++qi) {
      const auto& q = c[gen() % c.size()].question;
      const double k1 = 0.5 + (gen() % 20) / 10.0, b = (gen() % 11) / 10.0;
      const auto got = bm25_search(inv, tokenize(q), 15, {k1, b});
      expect_matches_oracle(got, testsupport::naive_bm25(bag, testsupport::split_ws(q), 15, k1, b), 1e-9);
    }
  }
}

TEST(Bm25, NonNegativeAndMonotoneInTf) {
  const auto c = docs({{"d1", "a x y z"}, {"d2", "a a y z"}, {"d3", "a a a z"}, {"d4", "a b c d"}, {"d5", "e f g h"},
                       {"d6", "a e f g"}});
  const auto inv = build_inverted_index(c);
  const auto r = bm25_search(inv, tokenize("a"), 10);
  EXPECT_EQ(ids(r).front(), "d3");
  for (const auto& h : r.hits) EXPECT_GE(h.score, 0.0);
  const auto s = [&](const std::string& id) { return r[r.rank_of(id) - 1].score; };
  EXPECT_GT(s("d3"), s("d2"));
  EXPECT_GT(s("d2"), s("d1"));
}

TEST(TfIdf, ToyCorpusMatchesOracle) {
  const auto c = docs({{"d1", "a b a"}, {"d2", "b c"}, {"d3", "c c d"}});
  const auto inv = build_inverted_index(c);
  const auto bag = testsupport::bag_docs(c);
  const auto got = tfidf_search(inv, tokenize("a c"), 10);
  const auto want = testsupport::naive_tfidf(bag, {"a", "c"}, 10);
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    EXPECT_EQ(got[i].id, want[i].id);
    EXPECT_NEAR(got[i].score, want[i].score, 1e-12);
  }
}

TEST(TfIdf, IdenticalAndDisjointQueries) {
  const auto c = docs({{"d1", "a b a"}, {"d2", "b c"}, {"d3", "c c d"}});
  const auto inv = build_inverted_index(c);
  const auto r = tfidf_search(inv, tokenize("c d c"), 3);
  EXPECT_EQ(r[0].id, "d3");
  EXPECT_NEAR(r[0].score, 1.0, 1e-12);
  EXPECT_TRUE(tfidf_search(inv, tokenize("q r"), 3).empty());
}

TEST(TfIdf, MatchesOracleOnRandomCorpora) {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 10; ++trial) {
    const auto c = testsupport::synthetic_corpus(10 + gen() % 40, gen(), 25, 1, 8);
    const auto inv = build_inverted_index(c);
    const auto bag = testsupport::bag_docs(c);
    for (int qi = 0; qi < 5; ++qi) {
      const auto q = testsupport::split_ws(c[gen() % c.size()].question + " " + testsupport::word(gen() % 40));
      std::string text;
      for (const auto& t : q) text += t + " ";
      expect_matches_oracle(tfidf_search(inv, tokenize(text), 12), testsupport::naive_tfidf(bag, q, 12), 1e-12);
    }
  }
}

TEST(TwoStage, SubsetOfFirstStageAndExhaustiveEquivalence) {
  const auto c = testsupport::synthetic_corpus(120, 6, 80);
  const HashBackend b(32, 2);
  const auto s = corpus_stats(c);
  PoolingSpec spec;
  const auto dense = build_dense_index(c, spec, b, s);
  const auto inv = build_inverted_index(c);
  std::mt19937_64 gen(1);
  for (int i = 0; i < 30; ++i) {
    const auto q = tokenize(c[gen() % c.size()].question + " " + testsupport::word(gen() % 80));
    const auto first = bm25_search(inv, q, 20);
    const auto two = two_stage_search(inv, dense, q, 20, 10, spec, b, s);
    for (const auto& h : two.hits) EXPECT_GT(first.rank_of(h.id), 0u);

    const auto full = two_stage_search(inv, dense, q, c.size(), c.size(), spec, b, s);
    const auto all_bm25 = bm25_search(inv, q, c.size());
    const auto rep = represent(q, spec, b, s);
    std::vector<std::string> expect;
    for (const auto& h : dense_search(dense, rep.vector, c.size()).hits) {
      if (all_bm25.rank_of(h.id) > 0) expect.push_back(h.id);
    }
    EXPECT_EQ(ids(full), expect);
  }
}

TEST(TwoStage, SingleCandidate) {
  const auto c = testsupport::synthetic_corpus(40, 7, 50);
  const HashBackend b(16, 0);
  const auto s = corpus_stats(c);
  const auto dense = build_dense_index(c, {}, b, s);
  const auto inv = build_inverted_index(c);
  const auto q = tokenize(c[3].question);
  const auto r = two_stage_search(inv, dense, q, 1, 1, {}, b, s);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].id, bm25_search(inv, q, 1)[0].id);
  EXPECT_THROW(two_stage_search(inv, dense, q, 1, 2, {}, b, s), Error);
}

TEST(IndexIo, RoundTripBitExact) {
  TempDir dir;
  PoolingSpec spec;
  spec.strategy = Strategy::kw_rcnt;
  spec.stopwords = StopwordSet({"از"});
  const auto c = testsupport::synthetic_corpus(25, 9);
  const HashBackend b(10, 4);
  const auto idx = build_dense_index(c, spec, b, corpus_stats(c));
  save_index(idx, dir / "i.bin");
  const auto back = load_index(dir / "i.bin");
  EXPECT_EQ(back, idx);
  EXPECT_EQ(back.spec(), spec);
  EXPECT_EQ(serialize_index(back), io::read_file(dir / "i.bin"));
  EXPECT_EQ(io::read_file(dir / "i.bin").substr(0, 8), "SINAIDX1");
}

TEST(IndexIo, HeaderLayout) {
  const auto idx = manual_index({{"ab", {1.5f, -2.0f}}});
  const std::string bytes = serialize_index(idx);
  auto u32 = [&](std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
    return v;
  };
  EXPECT_EQ(u32(8), 2u);   // dim
  EXPECT_EQ(u32(12), 1u);  // count, low word
  EXPECT_EQ(u32(16), 0u);  // count, high word
  const std::uint32_t json_len = u32(20);
  const auto header = nlohmann::json::parse(bytes.substr(24, json_len));
  EXPECT_EQ(header.at("strategy"), "all");
  const std::size_t entry = 24 + json_len;
  EXPECT_EQ(static_cast<unsigned char>(bytes[entry]), 2u);
  EXPECT_EQ(bytes.substr(entry + 2, 2), "ab");
  EXPECT_EQ(u32(entry + 4), std::bit_cast<std::uint32_t>(1.5f));
  EXPECT_EQ(bytes.size(), entry + 4 + 8);
}

TEST(IndexIo, CorruptionErrors) {
  const auto c = testsupport::synthetic_corpus(5, 9);
  const auto idx = build_dense_index(c, {}, HashBackend(4, 0), corpus_stats(c));
  std::string bytes = serialize_index(idx);
  std::string bad = bytes;
  bad[0] = 'X';
  try {
    deserialize_index(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("bad magic"), std::string::npos);
  }
  const std::string cut = bytes.substr(0, bytes.size() - 6);
  try {
    deserialize_index(cut);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos) << e.what();
  }
  EXPECT_THROW(deserialize_index(bytes, "<x>", 8), Error);
  EXPECT_THROW(deserialize_index(bytes + "z"), Error);
  EXPECT_THROW(load_index("/nonexistent/index.bin"), Error);
}

TEST(Retrievers, InterfaceDispatch) {
  const auto c = testsupport::synthetic_corpus(30, 10, 60);
  const HashBackend b(16, 0);
  const auto s = corpus_stats(c);
  const auto dense = build_dense_index(c, {}, b, s);
  const auto inv = build_inverted_index(c);
  const DenseRetriever d(dense, b, s);
  const Bm25Retriever bm(inv, c);
  const TfIdfRetriever tf(inv, c);
  const TwoStageRetriever ts(inv, dense, b, 100);
  const auto q = tokenize(c[4].question);
  EXPECT_EQ(bm.search(q, 5, {}), bm25_search(inv, q, 5));
  EXPECT_EQ(tf.search(q, 5, {}), tfidf_search(inv, q, 5));
  EXPECT_EQ(d.search(q, 1, {})[0].id, c[4].id);
  EXPECT_EQ(ts.search(q, 5, {}), two_stage_search(inv, dense, q, 100, 5, {}, b, s));
  EXPECT_TRUE(d.contains(c[0].id));
  EXPECT_FALSE(bm.contains("nope"));
  EXPECT_EQ(d.name(), "dense_all");
}
