#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "support.hpp"

using namespace medqr;
using testsupport::TempDir;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

Run run(const TempDir& dir, const std::vector<std::string>& args) {
  std::string cmd = quote(MEDQR_CLI);
  for (const auto& a : args) cmd += " " + quote(a);
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  cmd += " >" + quote(out.string()) + " 2>" + quote(err.string());
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = io::read_file(out);
  r.err = io::read_file(err);
  return r;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::string corpus_jsonl(const Corpus& c) {
  std::string s;
  for (const auto& r : c) s += to_json(r).dump() + "\n";
  return s;
}

std::string sample(const std::string& name) {
  return (std::filesystem::path(MEDQR_SOURCE_DIR) / "samples" / "data" / name).string();
}

}  // namespace

TEST(Cli, NormalizeWritesOneLinePerRecordAndIsIdempotent) {
  TempDir dir;
  std::string in;
  for (int i = 0; i < 10; ++i) {
    in += R"({"id":"r)" + std::to_string(i) + R"(","question":"<b>كيف</b> &amp; http://x.y q)" + std::to_string(i) +
          R"(","answer":"a","category":"c","source":"s"})" "\n";
  }
  testsupport::write(dir / "in.jsonl", in);
  const auto table = (std::filesystem::path(MEDQR_SOURCE_DIR) / "data" / "persian_mapping.tsv").string();
  auto r = run(dir, {"normalize", "--in", (dir / "in.jsonl").string(), "--mapping-table", table, "--out",
                     (dir / "n1.jsonl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("documents: 10"), std::string::npos);
  const std::string once = io::read_file(dir / "n1.jsonl");
  EXPECT_EQ(lines(once).size(), 10u);
  EXPECT_NE(once.find("کیف & q0"), std::string::npos);
  r = run(dir, {"normalize", "--in", (dir / "n1.jsonl").string(), "--mapping-table", table, "--out",
                (dir / "n2.jsonl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(io::read_file(dir / "n2.jsonl"), once);
}

TEST(Cli, NormalizeMalformedLineNamesTheLine) {
  TempDir dir;
  testsupport::write(dir / "in.jsonl", R"({"id":"a","question":"x","answer":"y","category":"c","source":"s"})" "\n"
                                       R"({"id":"b","question":"x","answer":"y","category":"c","source":"s"})" "\n"
                                       R"({"id":"c","question":"x","answer":"y","category":"c","source":"s"})" "\n"
                                       "{not json\n");
  const auto r = run(dir, {"normalize", "--in", (dir / "in.jsonl").string(), "--out", (dir / "o.jsonl").string()});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find(":4"), std::string::npos) << r.err;
  EXPECT_EQ(lines(r.err).size(), 1u);
}

TEST(Cli, BuildIndexRecordsCountAndHeader) {
  TempDir dir;
  testsupport::write(dir / "c.jsonl", corpus_jsonl(testsupport::synthetic_corpus(100, 1)));
  const std::vector<std::string> args = {"build-index", "--corpus", (dir / "c.jsonl").string(), "--backend", "hash",
                                         "--dim", "64", "--strategy", "kw_rcnt", "--n-keyphrases", "5", "--window", "2"};
  auto a = args;
  a.insert(a.end(), {"--out", (dir / "a.bin").string()});
  auto r = run(dir, a);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("entries: 100"), std::string::npos);
  const auto idx = load_index(dir / "a.bin");
  EXPECT_EQ(idx.size(), 100u);
  EXPECT_EQ(idx.dim(), 64u);
  EXPECT_EQ(idx.spec().strategy, Strategy::kw_rcnt);
  EXPECT_EQ(idx.spec().n_keyphrases, 5u);
  EXPECT_EQ(idx.spec().context_window, 2u);
  auto b = args;
  b.insert(b.end(), {"--out", (dir / "b.bin").string()});
  ASSERT_EQ(run(dir, b).code, 0);
  EXPECT_EQ(io::read_file(dir / "a.bin"), io::read_file(dir / "b.bin"));
}

TEST(Cli, QueryRanksAndLimits) {
  TempDir dir;
  const auto c = testsupport::synthetic_corpus(50, 2, 300, 5, 10, true);
  testsupport::write(dir / "c.jsonl", corpus_jsonl(c));
  ASSERT_EQ(run(dir, {"build-index", "--corpus", (dir / "c.jsonl").string(), "--out", (dir / "i.bin").string()}).code, 0);
  const std::vector<std::string> base = {"query", "--corpus", (dir / "c.jsonl").string(), "--index",
                                         (dir / "i.bin").string()};
  auto a = base;
  a.insert(a.end(), {"--k", "3", c[7].question});
  auto r = run(dir, a);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto out = lines(r.out);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].substr(0, 2 + c[7].id.size()), "1\t" + c[7].id);
  double prev = 2.0;
  for (const auto& l : out) {
    std::vector<std::string> tabbed;
    std::istringstream in(l);
    for (std::string f; std::getline(in, f, '\t');) tabbed.push_back(f);
    ASSERT_EQ(tabbed.size(), 4u);
    const double s = std::stod(tabbed[2]);
    EXPECT_LE(s, prev);
    prev = s;
  }
  a = base;
  a.insert(a.end(), {"--k", "80", c[7].question});
  r = run(dir, a);
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(lines(r.out).size(), 50u);
  EXPECT_NE(r.err.find("warning"), std::string::npos);

  for (const std::string m : {"bm25", "tfidf", "two-stage"}) {
    a = base;
    a.insert(a.end(), {"--method", m, "--k", "1", c[7].question});
    r = run(dir, a);
    ASSERT_EQ(r.code, 0) << m << r.err;
    EXPECT_EQ(r.out.substr(0, 2 + c[7].id.size()), "1\t" + c[7].id) << m;
  }
}

TEST(Cli, QueryErrors) {
  TempDir dir;
  testsupport::write(dir / "c.jsonl", corpus_jsonl(testsupport::synthetic_corpus(5, 2)));
  testsupport::write(dir / "bad.bin", "not an index");
  auto r = run(dir, {"query", "--corpus", (dir / "c.jsonl").string(), "--index", (dir / "missing.bin").string(), "x"});
  EXPECT_NE(r.code, 0);
  EXPECT_EQ(lines(r.err).size(), 1u);
  r = run(dir, {"query", "--corpus", (dir / "c.jsonl").string(), "--index", (dir / "bad.bin").string(), "x"});
  EXPECT_NE(r.code, 0);
  EXPECT_EQ(lines(r.err).size(), 1u);
  EXPECT_NE(run(dir, {"bogus-command"}).code, 0);
}

TEST(Cli, EvalParaphraseIdentityAndShape) {
  TempDir dir;
  const auto c = testsupport::synthetic_corpus(30, 3, 300, 5, 10, true);
  testsupport::write(dir / "c.jsonl", corpus_jsonl(c));
  std::string pairs;
  for (const auto& r : c) pairs += nlohmann::json{{"prime_id", r.id}, {"paraphrase", r.question}}.dump() + "\n";
  testsupport::write(dir / "p.jsonl", pairs);
  const auto r = run(dir, {"eval-paraphrase", "--corpus", (dir / "c.jsonl").string(), "--pairs",
                           (dir / "p.jsonl").string(), "--methods", "dense,bm25", "--out", (dir / "r.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(io::read_file(dir / "r.json"));
  EXPECT_EQ(j["columns"], (std::vector<std::string>{"R@1", "R@5", "R@10", "MRR"}));
  EXPECT_DOUBLE_EQ(j["metrics"]["dense_all"]["R@1"].get<double>(), 100.0);
  EXPECT_EQ(j["metrics"].size(), 2u);
}

TEST(Cli, EvalNoiseOneColumnPerLevel) {
  TempDir dir;
  testsupport::write(dir / "c.jsonl", corpus_jsonl(testsupport::synthetic_corpus(40, 4, 300, 5, 10, true)));
  const std::vector<std::string> args = {"eval-noise", "--corpus", (dir / "c.jsonl").string(), "--noise-grid",
                                         "0,0.2,0.5", "--sample", "20"};
  auto a = args;
  a.insert(a.end(), {"--out", (dir / "a.json").string()});
  const auto r = run(dir, a);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(io::read_file(dir / "a.json"));
  EXPECT_EQ(j["columns"].size(), 3u);
  EXPECT_DOUBLE_EQ(j["metrics"].begin()->begin()->get<double>(), 100.0);
  a = args;
  a.insert(a.end(), {"--out", (dir / "b.json").string()});
  const auto again = run(dir, a);
  EXPECT_EQ(again.out, r.out);
  EXPECT_EQ(io::read_file(dir / "a.json"), io::read_file(dir / "b.json"));
}

TEST(Cli, EvalJudgmentAndFill) {
  TempDir dir;
  auto r = run(dir, {"eval-judgment", sample("toy_judgments.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("Graded"), std::string::npos);
  EXPECT_NE(r.out.find("Rigid"), std::string::npos);
  r = run(dir, {"eval-fill", "--corpus", sample("toy_corpus.jsonl"), "--out", (dir / "f.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(io::read_file(dir / "f.json"));
  EXPECT_EQ(j["columns"], std::vector<std::string>{"Accuracy"});
}

TEST(Cli, TrainAndEvalClassifier) {
  TempDir dir;
  std::string data;
  const auto words = testsupport::word_list(30);
  Rng rng(3);
  for (int i = 0; i < 60; ++i) {
    std::string text;
    for (int t = 0; t < 6; ++t) text += words[rng.uniform_index(words.size())] + " ";
    const bool pos = i % 2 == 0;
    if (pos) text += "pain";
    data += nlohmann::json{{"text", text}, {"label", pos ? 1 : 0}}.dump() + "\n";
  }
  testsupport::write(dir / "d.jsonl", data);
  const std::vector<std::string> args = {"train-classifier", "--dataset", (dir / "d.jsonl").string(), "--head",
                                         "linear", "--epochs", "30", "--lr", "0.05", "--dropout", "0",
                                         "--split", "0.8,0.1,0.1"};
  auto a = args;
  a.insert(a.end(), {"--out", (dir / "m1.ckpt").string(), "--report", (dir / "r1.json").string()});
  auto r = run(dir, a);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(io::read_file(dir / "r1.json"));
  EXPECT_EQ(j["columns"], (std::vector<std::string>{"Prec.", "Rec.", "Macro F1", "Accu."}));
  a = args;
  a.insert(a.end(), {"--out", (dir / "m2.ckpt").string(), "--report", (dir / "r2.json").string()});
  ASSERT_EQ(run(dir, a).code, 0);
  EXPECT_EQ(io::read_file(dir / "m1.ckpt"), io::read_file(dir / "m2.ckpt"));
  EXPECT_EQ(io::read_file(dir / "r1.json"), io::read_file(dir / "r2.json"));

  r = run(dir, {"eval-classifier", "--checkpoint", (dir / "m1.ckpt").string(), "--dataset", (dir / "d.jsonl").string(),
                "--out", (dir / "e.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto e = nlohmann::json::parse(io::read_file(dir / "e.json"));
  EXPECT_EQ(e["metrics"].size(), 1u);
  EXPECT_EQ(e["metrics"].begin()->size(), 4u);
}

TEST(Cli, ConfigFileSuppliesDefaultsAndFlagsWin) {
  TempDir dir;
  testsupport::write(dir / "c.jsonl", corpus_jsonl(testsupport::synthetic_corpus(20, 5)));
  testsupport::write(dir / "run.conf", "# comment\nstrategy = kw\ndim = 16\nwindow=1\n");
  auto r = run(dir, {"build-index", "--config", (dir / "run.conf").string(), "--corpus", (dir / "c.jsonl").string(),
                     "--out", (dir / "a.bin").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto idx = load_index(dir / "a.bin");
  EXPECT_EQ(idx.spec().strategy, Strategy::kw);
  EXPECT_EQ(idx.dim(), 16u);
  EXPECT_EQ(idx.spec().context_window, 1u);
  r = run(dir, {"build-index", "--config", (dir / "run.conf").string(), "--corpus", (dir / "c.jsonl").string(),
                "--strategy", "rsw", "--out", (dir / "b.bin").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_index(dir / "b.bin").spec().strategy, Strategy::rsw);
  EXPECT_NE(run(dir, {"build-index", "--config", (dir / "nope.conf").string(), "--corpus",
                      (dir / "c.jsonl").string(), "--out", (dir / "c.bin").string()})
                .code,
            0);
}
