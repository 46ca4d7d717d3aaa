// medqr: corpus preparation, indexing, querying and evaluation.

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <CLI11.hpp>

#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace medqr;
using medqr::cli::RunConfig;

namespace {

// ---------------------------------------------------------------------------
// Retrieval setup shared by query and the retrieval evaluations

struct Stack {
  MappingTable table;
  Corpus corpus;
  TfIdfStats stats;
  std::unique_ptr<EmbeddingBackend> backend;
  DenseIndex dense;
  std::optional<InvertedIndex> inverted;
};

std::unique_ptr<Stack> make_stack(const RunConfig& cfg, cli::BackendFlags given, bool need_dense) {
  auto s = std::make_unique<Stack>();
  s->table = cli::mapping_table(cfg);
  s->corpus = cli::load_corpus(cfg, s->table);
  if (s->corpus.empty()) throw Error("corpus is empty");
  s->stats = corpus_stats(s->corpus);
  if (!need_dense) return s;
  if (!cfg.index.empty()) {
    s->dense = load_index(cfg.index);
    s->backend = cli::make_backend(cfg, given, s->dense.backend());
    if (s->backend->dim() != s->dense.dim()) throw Error("backend dim differs from index dim");
    for (const auto& r : s->corpus) {
      if (!s->dense.find(r.id)) throw Error("corpus record \"" + r.id + "\" is not in the index");
    }
  } else {
    s->backend = cli::make_backend(cfg, given);
    s->dense = build_dense_index(s->corpus, cli::pooling_spec(cfg, s->table), *s->backend, s->stats);
  }
  return s;
}

const InvertedIndex& inverted(Stack& s) {
  if (!s.inverted) s.inverted = build_inverted_index(s.corpus);
  return *s.inverted;
}

std::unique_ptr<Retriever> make_retriever(Stack& s, const std::string& method, const RunConfig& cfg) {
  if (method == "dense") return std::make_unique<DenseRetriever>(s.dense, *s.backend, s.stats);
  if (method == "bm25") return std::make_unique<Bm25Retriever>(inverted(s), s.corpus, cfg.bm25());
  if (method == "tfidf") return std::make_unique<TfIdfRetriever>(inverted(s), s.corpus);
  if (method == "two-stage") {
    return std::make_unique<TwoStageRetriever>(inverted(s), s.dense, *s.backend, cfg.first_stage_k, cfg.bm25());
  }
  throw Error("unknown method \"" + method + "\" (dense, bm25, tfidf, two-stage)");
}

/// The pooling and backend actually used, which may come from an index.
nlohmann::json stack_config(const Stack& s) {
  if (!s.backend) return nlohmann::json::object();
  return {{"pooling", to_json(s.dense.spec())}, {"backend_descriptor", s.backend->describe()}};
}

bool needs_dense(const std::vector<std::string>& methods) {
  for (const auto& m : methods) {
    if (m == "dense" || m == "two-stage") return true;
  }
  return false;
}

std::string snippet(const std::string& text, std::size_t max_cp = 60) {
  std::string out;
  std::size_t n = 0;
  for (std::size_t pos = 0; pos < text.size();) {
    const auto d = utf8::decode_lenient(text, pos);
    if (n++ == max_cp) return out + "...";
    utf8::append(out, utf8::is_space(d.cp) ? U' ' : d.cp);
    pos += d.length;
  }
  return out;
}

void emit(EvalReport& report, const RunConfig& cfg) {
  std::cout << report.to_text();
  cli::write_report(report, cfg);
}

nlohmann::json report_config(const RunConfig& cfg, nlohmann::json extra = nlohmann::json::object()) {
  nlohmann::json j = cfg.to_json();
  for (auto& [k, v] : extra.items()) j[k] = v;
  return j;
}

std::string timestamp_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

EvalReport new_report(std::string title, const RunConfig& cfg) {
  EvalReport r;
  r.title = std::move(title);
  r.seed = cfg.seed;
  if (cfg.timestamp) r.timestamp = timestamp_now();
  return r;
}

// ---------------------------------------------------------------------------
// normalize

struct NormalizeArgs {
  std::string in;
};

int cmd_normalize(const RunConfig& cfg, const NormalizeArgs& a) {
  if (cfg.out.empty()) throw Error("--out is required");
  const MappingTable table = cli::mapping_table(cfg);
  const std::string content = io::read_file(a.in);
  std::string out;
  std::size_t docs = 0, warnings = 0, dropped = 0;
  std::unordered_set<std::string> seen;
  detail::for_each_json_line(content, a.in, [&](const nlohmann::json& obj, std::size_t lineno) {
    QARecord r = parse_qa_record(obj, a.in, lineno);
    if (!seen.insert(r.id).second) throw ParseError(a.in, lineno, "duplicate id \"" + r.id + "\"");
    auto q = clean_and_normalize(r.question, table);
    auto ans = clean_and_normalize(r.answer, table);
    warnings += q.warnings + ans.warnings;
    r.question = std::move(q.text);
    r.answer = std::move(ans.text);
    if (r.question.empty()) {
      ++warnings;
      ++dropped;
      std::cerr << "warning: " << a.in << ":" << lineno << ": question empty after cleaning, record dropped\n";
      return;
    }
    out += to_json(r).dump() + "\n";
    ++docs;
  });
  io::write_file(cfg.out, out);
  std::cout << "documents: " << docs << "\nwarnings: " << warnings << "\n";
  if (dropped) std::cout << "dropped: " << dropped << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// build-index

int cmd_build_index(const RunConfig& cfg, cli::BackendFlags given) {
  if (cfg.out.empty()) throw Error("--out is required");
  const MappingTable table = cli::mapping_table(cfg);
  const Corpus corpus = cli::load_corpus(cfg, table);
  if (corpus.empty()) throw Error("corpus is empty");
  const PoolingSpec spec = cli::pooling_spec(cfg, table);
  auto backend = cli::make_backend(cfg, given);
  const DenseIndex index = build_dense_index(corpus, spec, *backend, corpus_stats(corpus));
  save_index(index, cfg.out);
  std::cout << "entries: " << index.size() << "\ndim: " << index.dim() << "\nstrategy: " << to_string(spec.strategy)
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// query

struct QueryArgs {
  std::string text;
  std::string method = "dense";
  std::string query_id = "query";
};

int cmd_query(const RunConfig& cfg, cli::BackendFlags given, const QueryArgs& a) {
  if (cfg.index.empty() && a.method != "bm25" && a.method != "tfidf") throw Error("--index is required");
  if (cfg.k == 0) throw Error("--k must be >= 1");
  auto stack = make_stack(cfg, given, needs_dense({a.method}));
  const TokenSequence query = tokenize(clean_and_normalize(a.text, stack->table).text);
  if (query.empty()) throw Error("query is empty after normalization");
  auto retriever = make_retriever(*stack, a.method, cfg);
  const RankedList hits = retriever->search(query, cfg.k, a.query_id);
  for (std::size_t i = 0; i < hits.size(); ++i) {
    const QARecord* rec = stack->corpus.find(hits[i].id);
    char score[32];
    std::snprintf(score, sizeof score, "%.6f", hits[i].score);
    std::cout << i + 1 << '\t' << hits[i].id << '\t' << score << '\t' << (rec ? snippet(rec->question) : "") << '\n';
  }
  if (hits.size() < cfg.k) {
    std::cerr << "warning: only " << hits.size() << " of " << cfg.k << " requested results available\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// eval-paraphrase

struct ParaphraseArgs {
  std::string pairs;
  std::vector<std::string> methods = {"dense"};
  bool with_mrr = false;
};

int cmd_eval_paraphrase(const RunConfig& cfg, cli::BackendFlags given, const ParaphraseArgs& a) {
  auto stack = make_stack(cfg, given, needs_dense(a.methods));
  auto pairs = load_paraphrase_pairs(a.pairs, stack->corpus);
  for (auto& p : pairs) p.paraphrase = clean_and_normalize(p.paraphrase, stack->table).text;
  bool with_mrr = a.with_mrr;
  for (const auto& m : a.methods) with_mrr = with_mrr || m != "dense";

  EvalReport report = new_report("Paraphrase retrieval", cfg);
  report.columns = {"R@1", "R@5", "R@10"};
  if (with_mrr) report.columns.push_back("MRR");
  report.config = report_config(cfg, {{"pairs", a.pairs}, {"methods", a.methods}});
  report.config.update(stack_config(*stack));
  for (const auto& m : a.methods) {
    auto retriever = make_retriever(*stack, m, cfg);
    const auto outcomes = run_paraphrase_protocol(pairs, *retriever);
    std::vector<double> row = {100 * recall_at_k(outcomes, 1), 100 * recall_at_k(outcomes, 5),
                               100 * recall_at_k(outcomes, 10)};
    if (with_mrr) row.push_back(100 * mrr(outcomes));
    report.add_row(retriever->name(), std::move(row));
  }
  report.notes.push_back("queries: " + std::to_string(pairs.size()));
  emit(report, cfg);
  return 0;
}

// ---------------------------------------------------------------------------
// eval-noise

struct NoiseArgs {
  std::size_t sample = 1000;
  std::vector<std::string> methods = {"dense"};
};

std::string level_label(double m) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "m=%g", m);
  return buf;
}

int cmd_eval_noise(const RunConfig& cfg, cli::BackendFlags given, const NoiseArgs& a) {
  if (cfg.noise_grid.empty()) throw Error("--noise-grid is empty");
  if (a.sample == 0) throw Error("--sample must be >= 1");
  auto stack = make_stack(cfg, given, needs_dense(a.methods));
  const auto sample = sample_records(stack->corpus, a.sample, derive_seed(cfg.seed, 1));
  const auto vocab = stack->stats.vocabulary();

  EvalReport report = new_report("Noisy-query R@1", cfg);
  for (double m : cfg.noise_grid) report.columns.push_back(level_label(m));
  report.config = report_config(cfg, {{"sample", a.sample}, {"methods", a.methods}});
  report.config.update(stack_config(*stack));
  std::vector<std::pair<std::string, std::vector<NoiseRow>>> detail_rows;
  for (const auto& method : a.methods) {
    auto retriever = make_retriever(*stack, method, cfg);
    auto rows = noise_sweep(sample, *retriever, cfg.noise_grid, vocab, derive_seed(cfg.seed, 2));
    std::vector<double> values;
    for (const auto& r : rows) values.push_back(100 * r.r_at_1);
    report.add_row(retriever->name(), std::move(values));
    detail_rows.emplace_back(retriever->name(), std::move(rows));
  }
  for (const auto& [name, rows] : detail_rows) {
    report.notes.push_back("");
    report.notes.push_back(name + ":");
    for (const auto& r : rows) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "  %-8s R@1 %6.2f  queries %zu", level_label(r.noise).c_str(), 100 * r.r_at_1,
                    r.queries);
      report.notes.push_back(buf);
    }
  }
  emit(report, cfg);
  return 0;
}

// ---------------------------------------------------------------------------
// eval-fill

struct FillArgs {
  double mask_rate = 0.15;
  std::size_t sample = 0;  // 0: every record
  std::string predictions;
  std::string write_masked;
  std::string label;
};

int cmd_eval_fill(const RunConfig& cfg, const FillArgs& a) {
  const MappingTable table = cli::mapping_table(cfg);
  const Corpus corpus = cli::load_corpus(cfg, table);
  if (corpus.empty()) throw Error("corpus is empty");
  const auto records = a.sample ? sample_records(corpus, a.sample, derive_seed(cfg.seed, 1)) : corpus.records();
  std::vector<MaskedSentence> masked;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const TokenSequence tokens = tokenize(records[i].question);
    if (tokens.empty()) continue;
    masked.push_back(mask_tokens(tokens, a.mask_rate, derive_seed(cfg.seed, 3, i), records[i].id));
  }
  if (masked.empty()) throw Error("no sentences to mask");
  if (!a.write_masked.empty()) {
    std::string out;
    for (const auto& m : masked) out += to_json(m).dump() + "\n";
    io::write_file(a.write_masked, out);
  }

  std::unique_ptr<MlmPredictor> predictor;
  std::string label = a.label;
  if (!a.predictions.empty()) {
    predictor = std::make_unique<ExternalPredictions>(load_external_predictions(a.predictions));
    if (label.empty()) label = fs::path(a.predictions).stem().string();
  } else {
    predictor = std::make_unique<FrequencyBaseline>(FrequencyBaseline::from_sequences(tokenize_corpus(corpus)));
    if (label.empty()) label = "frequency";
  }
  std::vector<std::vector<Prediction>> preds;
  for (const auto& m : masked) preds.push_back(mlm_predict(*predictor, m));
  std::size_t masks = 0;
  for (const auto& m : masked) masks += m.mask_count();

  EvalReport report = new_report("Fill-in-the-blank", cfg);
  report.columns = {"Accuracy"};
  report.config = report_config(cfg, {{"mask_rate", a.mask_rate}, {"sample", a.sample}, {"predictions", a.predictions}});
  report.add_row(label, {fill_blank_accuracy(preds, masked, table)});
  report.notes.push_back("sentences: " + std::to_string(masked.size()) + ", masks: " + std::to_string(masks));
  emit(report, cfg);
  return 0;
}

// ---------------------------------------------------------------------------
// eval-judgment

struct JudgmentArgs {
  std::vector<std::string> files;
};

int cmd_eval_judgment(const RunConfig& cfg, const JudgmentArgs& a) {
  EvalReport report = new_report("Expert judgments", cfg);
  report.columns = {"Graded", "Rigid"};
  report.config = report_config(cfg, {{"judgments", a.files}});
  for (const auto& f : a.files) {
    const auto labels = load_judgments(f);
    const auto acc = judgment_accuracy(labels);
    report.add_row(fs::path(f).stem().string(), {acc.graded, acc.rigid});
  }
  emit(report, cfg);
  return 0;
}

// ---------------------------------------------------------------------------
// train-classifier / eval-classifier

struct DatasetArgs {
  std::string dataset;
  std::string category;
  std::size_t n_pos = 1200;
  std::size_t n_neg = 1200;
};

struct TrainArgs {
  DatasetArgs data;
  std::string head = "linear";
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<double> dropout;
  std::vector<double> split = {0.85, 0.10, 0.05};
  std::vector<std::size_t> widths = {2, 3, 4, 5, 6};
  std::size_t filters = 100;
  std::string report;
};

struct EvalClassifierArgs {
  DatasetArgs data;
  std::string checkpoint;
};

std::vector<LabeledExample> load_examples(const RunConfig& cfg, const DatasetArgs& d, const MappingTable& table) {
  std::vector<LabeledExample> out;
  if (!d.dataset.empty()) {
    out = load_labeled_examples(d.dataset);
  } else {
    if (d.category.empty()) throw Error("give --dataset or --corpus with --category");
    out = build_qc_dataset(cli::load_corpus(cfg, table), d.category, d.n_pos, d.n_neg, cfg.seed);
  }
  for (auto& ex : out) ex.text = clean_and_normalize(ex.text, table).text;
  if (out.empty()) throw Error("dataset is empty");
  return out;
}

/// Token statistics for keyphrase pooling: the corpus when one is given,
/// otherwise the dataset texts themselves.
TfIdfStats feature_stats(const RunConfig& cfg, const std::vector<LabeledExample>& examples, const MappingTable& table) {
  if (!cfg.corpus.empty()) return corpus_stats(cli::load_corpus(cfg, table));
  std::vector<TokenSequence> docs;
  for (const auto& ex : examples) docs.push_back(tokenize(ex.text));
  return TfIdfStats(docs);
}

TokenSequence example_tokens(const LabeledExample& ex) {
  TokenSequence t = tokenize(ex.text);
  if (t.empty()) throw Error("example \"" + ex.origin_id + "\" has no tokens");
  return t;
}

struct Featurizer {
  const PoolingSpec& spec;
  const EmbeddingBackend& backend;
  const TfIdfStats& stats;

  LinearExample linear(const LabeledExample& ex) const {
    const auto rep = represent(example_tokens(ex), spec, backend, stats, ex.origin_id);
    return {rep.vector, static_cast<std::size_t>(ex.label)};
  }
  SequenceExample sequence(const LabeledExample& ex) const {
    return {backend.embed(example_tokens(ex), ex.origin_id), static_cast<std::size_t>(ex.label)};
  }
};

ClassificationMetrics evaluate(const AnyHead& head, const Featurizer& f, const std::vector<LabeledExample>& examples,
                               std::size_t classes) {
  std::vector<std::size_t> pred, gold;
  for (const auto& ex : examples) {
    if (static_cast<std::size_t>(ex.label) >= classes) throw Error("label out of range for the model");
    gold.push_back(static_cast<std::size_t>(ex.label));
    if (const auto* lin = std::get_if<LinearHead>(&head)) {
      pred.push_back(lin->predict(f.linear(ex).x));
    } else {
      pred.push_back(std::get<CnnHead>(head).predict(f.sequence(ex).x));
    }
  }
  return classification_metrics(pred, gold, classes);
}

std::vector<double> metric_row(const ClassificationMetrics& m) {
  return {100 * m.precision, 100 * m.recall, 100 * m.macro_f1, 100 * m.accuracy};
}

const std::vector<std::string> kClassifierColumns = {"Prec.", "Rec.", "Macro F1", "Accu."};

int cmd_train_classifier(const RunConfig& cfg, cli::BackendFlags given, const TrainArgs& a) {
  if (cfg.out.empty()) throw Error("--out (checkpoint path) is required");
  if (a.split.size() != 3) throw Error("--split needs three fractions: train,valid,test");
  if (a.head != "linear" && a.head != "cnn") throw Error("--head must be linear or cnn");
  const MappingTable table = cli::mapping_table(cfg);
  auto examples = load_examples(cfg, a.data, table);
  std::size_t classes = 0;
  for (const auto& ex : examples) classes = std::max(classes, static_cast<std::size_t>(ex.label) + 1);
  if (classes < 2) throw Error("dataset needs at least two classes");

  const PoolingSpec spec = cli::pooling_spec(cfg, table);
  auto backend = cli::make_backend(cfg, given);
  const TfIdfStats stats = feature_stats(cfg, examples, table);
  const Featurizer f{spec, *backend, stats};
  auto splits = split_dataset(std::move(examples), {a.split[0], a.split[1], a.split[2]}, derive_seed(cfg.seed, 4));

  TrainConfig tc = a.head == "linear" ? TrainConfig::linear_defaults() : TrainConfig::cnn_defaults();
  if (a.epochs) tc.epochs = *a.epochs;
  if (a.batch_size) tc.batch_size = *a.batch_size;
  if (a.lr) tc.learning_rate = *a.lr;
  if (a.dropout) tc.dropout = *a.dropout;
  tc.seed = cfg.seed;

  AnyHead head;
  std::vector<double> losses;
  if (a.head == "linear") {
    std::vector<LinearExample> data;
    for (const auto& ex : splits.train) data.push_back(f.linear(ex));
    auto res = train_linear(LinearHead(backend->dim(), classes, derive_seed(cfg.seed, 5), tc.dropout), data, tc);
    head = std::move(res.head);
    losses = std::move(res.epoch_loss);
  } else {
    if (tc.dropout != 0.0) throw Error("the cnn head does not use dropout");
    std::vector<SequenceExample> data;
    for (const auto& ex : splits.train) data.push_back(f.sequence(ex));
    auto res = train_cnn(CnnHead(backend->dim(), classes, derive_seed(cfg.seed, 5), a.widths, a.filters), data, tc);
    head = std::move(res.head);
    losses = std::move(res.epoch_loss);
  }
  const nlohmann::json meta = {{"pooling", to_json(spec)}, {"backend", backend->describe()}, {"classes", classes}};
  save_head(head, tc, cfg.out, meta);

  EvalReport report = new_report("Classifier (" + a.head + ")", cfg);
  report.row_header = "Split";
  report.columns = kClassifierColumns;
  report.config = report_config(cfg, {{"head", a.head}, {"train", to_json(tc)}, {"dataset", a.data.dataset},
                                      {"category", a.data.category}, {"split", a.split}});
  const std::pair<const char*, const std::vector<LabeledExample>*> parts[] = {
      {"train", &splits.train}, {"valid", &splits.valid}, {"test", &splits.test}};
  for (const auto& [name, part] : parts) {
    if (!part->empty()) report.add_row(name, metric_row(evaluate(head, f, *part, classes)));
  }
  for (std::size_t e = 0; e < losses.size(); ++e) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "epoch %zu loss %.6f", e + 1, losses[e]);
    report.notes.push_back(buf);
  }
  std::cout << report.to_text();
  if (!a.report.empty()) io::write_file(a.report, report.to_json().dump(2) + "\n");
  return 0;
}

int cmd_eval_classifier(const RunConfig& cfg, cli::BackendFlags given, const EvalClassifierArgs& a) {
  const Checkpoint ck = load_head(a.checkpoint);
  const nlohmann::json& meta = ck.header.at("meta");
  const MappingTable table = cli::mapping_table(cfg);
  const auto examples = load_examples(cfg, a.data, table);
  const PoolingSpec spec = pooling_spec_from_json(meta.at("pooling"));
  auto backend = cli::make_backend(cfg, given, meta.at("backend"));
  const TfIdfStats stats = feature_stats(cfg, examples, table);
  const Featurizer f{spec, *backend, stats};
  const std::size_t classes = meta.at("classes").get<std::size_t>();

  EvalReport report = new_report("Classifier evaluation", cfg);
  report.columns = kClassifierColumns;
  report.config = report_config(cfg, {{"checkpoint", a.checkpoint}, {"dataset", a.data.dataset},
                                      {"category", a.data.category}});
  const std::string label = a.data.dataset.empty() ? a.data.category : fs::path(a.data.dataset).stem().string();
  report.add_row(label, metric_row(evaluate(ck.head, f, examples, classes)));
  emit(report, cfg);
  return 0;
}

// ---------------------------------------------------------------------------
// Argument plumbing

void add_shared(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--corpus", cfg.corpus, "QA corpus (JSON-Lines)");
  sub->add_option("--embeddings", cfg.embeddings, "static table or precomputed vectors");
  sub->add_option("--backend", cfg.backend, "static | hash | precomputed")
      ->check(CLI::IsMember({"static", "hash", "precomputed"}));
  sub->add_option("--dim", cfg.dim, "hash backend dimension");
  sub->add_option("--hash-seed", cfg.hash_seed, "hash backend seed");
  sub->add_option("--strategy", cfg.strategy, "all | rsw | kw | kw_rcnt")
      ->check(CLI::IsMember({"all", "rsw", "kw", "kw_rcnt"}));
  sub->add_option("--n-keyphrases", cfg.n_keyphrases);
  sub->add_option("--window", cfg.window, "keyphrase context window");
  sub->add_flag("--bigrams", cfg.bigrams, "allow bigram keyphrases");
  sub->add_option("--stopwords", cfg.stopwords);
  sub->add_option("--mapping-table", cfg.mapping_table);
  sub->add_option("--index", cfg.index, "binary index from build-index");
  sub->add_option("--k", cfg.k);
  sub->add_option("--k1", cfg.k1);
  sub->add_option("--b", cfg.b);
  sub->add_option("--first-stage-k", cfg.first_stage_k);
  sub->add_option("--noise-grid", cfg.noise_grid)->delimiter(',');
  sub->add_option("--seed", cfg.seed);
  sub->add_option("--out", cfg.out);
  sub->add_flag("--timestamp", cfg.timestamp, "record wall-clock time in the report");
  sub->add_option("--config", cfg.config_file, "key=value file; command-line flags win");
}

void add_dataset(CLI::App* sub, DatasetArgs& d) {
  sub->add_option("--dataset", d.dataset, "labeled JSON-Lines {text, label[, id]}");
  sub->add_option("--category", d.category, "positive category for a question-classification set");
  sub->add_option("--n-pos", d.n_pos);
  sub->add_option("--n-neg", d.n_neg);
}

/// Lines `key=value` (blank lines and `#` comments skipped).
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::vector<std::pair<std::string, std::string>> out;
  const std::string content = io::read_file(path);
  const auto lines = io::split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string_view line = io::trim_ascii(lines[i]);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(path, i + 1, "expected key=value");
    std::string key(io::trim_ascii(line.substr(0, eq)));
    if (key.rfind("--", 0) == 0) key.erase(0, 2);
    if (key.empty()) throw ParseError(path, i + 1, "empty key");
    out.emplace_back(std::move(key), std::string(io::trim_ascii(line.substr(eq + 1))));
  }
  return out;
}

bool flag_present(const std::vector<std::string>& args, const std::string& name) {
  for (const auto& a : args) {
    if (a == name || a.rfind(name + "=", 0) == 0) return true;
  }
  return false;
}

/// Appends config-file settings that the command line does not already set.
std::vector<std::string> expand_config(std::vector<std::string> args, const CLI::App& app) {
  std::optional<std::string> path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (!path || args.empty()) return args;
  const CLI::App* sub = app.get_subcommand_no_throw(args.front());
  if (!sub) return args;
  std::vector<std::string> extra;
  for (const auto& [key, value] : read_config_file(*path)) {
    const std::string name = "--" + key;
    if (key == "config" || !sub->get_option_no_throw(name) || flag_present(args, name)) continue;
    extra.push_back(name + "=" + value);
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Medical question retrieval toolkit"};
  app.require_subcommand(1);
  RunConfig cfg;

  NormalizeArgs norm;
  auto* normalize = app.add_subcommand("normalize", "clean and normalize a QA corpus");
  add_shared(normalize, cfg);
  normalize->add_option("--in", norm.in, "input JSON-Lines")->required();

  auto* build = app.add_subcommand("build-index", "embed every question and write a dense index");
  add_shared(build, cfg);

  QueryArgs query;
  auto* q = app.add_subcommand("query", "rank indexed questions against a query");
  add_shared(q, cfg);
  q->add_option("text", query.text, "query text")->required();
  q->add_option("--method", query.method, "dense | bm25 | tfidf | two-stage");
  q->add_option("--query-id", query.query_id, "sequence id for precomputed backends");

  ParaphraseArgs para;
  auto* ep = app.add_subcommand("eval-paraphrase", "recall of prime questions from their paraphrases");
  add_shared(ep, cfg);
  ep->add_option("--pairs", para.pairs, "JSON-Lines {prime_id, paraphrase}")->required();
  ep->add_option("--methods", para.methods, "dense, bm25, tfidf, two-stage")->delimiter(',');
  ep->add_flag("--mrr", para.with_mrr, "always add the MRR column");

  NoiseArgs noise;
  auto* en = app.add_subcommand("eval-noise", "R@1 of corrupted questions across noise levels");
  add_shared(en, cfg);
  en->add_option("--sample", noise.sample, "number of sampled questions");
  en->add_option("--methods", noise.methods, "dense, bm25, tfidf, two-stage")->delimiter(',');

  FillArgs fill;
  auto* ef = app.add_subcommand("eval-fill", "masked-token exact-match accuracy");
  add_shared(ef, cfg);
  ef->add_option("--mask-rate", fill.mask_rate);
  ef->add_option("--sample", fill.sample, "number of sampled sentences (0: all)");
  ef->add_option("--predictions", fill.predictions, "external predictions JSON-Lines");
  ef->add_option("--write-masked", fill.write_masked, "write the masked set as JSON-Lines");
  ef->add_option("--label", fill.label, "row label");

  JudgmentArgs judg;
  auto* ej = app.add_subcommand("eval-judgment", "graded and rigid accuracy from expert labels");
  add_shared(ej, cfg);
  ej->add_option("judgments", judg.files, "one JSON-Lines file per system")->required();

  TrainArgs train;
  auto* tr = app.add_subcommand("train-classifier", "train a linear or CNN head on frozen embeddings");
  add_shared(tr, cfg);
  add_dataset(tr, train.data);
  tr->add_option("--head", train.head, "linear | cnn");
  tr->add_option("--epochs", train.epochs);
  tr->add_option("--batch-size", train.batch_size);
  tr->add_option("--lr", train.lr);
  tr->add_option("--dropout", train.dropout);
  tr->add_option("--split", train.split, "train,valid,test fractions")->delimiter(',');
  tr->add_option("--widths", train.widths, "CNN filter widths")->delimiter(',');
  tr->add_option("--filters", train.filters, "CNN filters per width");
  tr->add_option("--report", train.report, "write the metrics report JSON here");

  EvalClassifierArgs evc;
  auto* ec = app.add_subcommand("eval-classifier", "score a saved classifier checkpoint");
  add_shared(ec, cfg);
  add_dataset(ec, evc.data);
  ec->add_option("--checkpoint", evc.checkpoint)->required();

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(std::move(args), app);
    std::reverse(args.begin(), args.end());
    app.parse(args);

    CLI::App* sub = app.get_subcommands().front();
    const cli::BackendFlags given{sub->count("--backend") > 0, sub->count("--dim") > 0,
                                  sub->count("--hash-seed") > 0};
    cfg.validate_paths();
    if (sub == normalize) return cmd_normalize(cfg, norm);
    if (sub == build) return cmd_build_index(cfg, given);
    if (sub == q) return cmd_query(cfg, given, query);
    if (sub == ep) return cmd_eval_paraphrase(cfg, given, para);
    if (sub == en) return cmd_eval_noise(cfg, given, noise);
    if (sub == ef) return cmd_eval_fill(cfg, fill);
    if (sub == ej) return cmd_eval_judgment(cfg, judg);
    if (sub == tr) return cmd_train_classifier(cfg, given, train);
    if (sub == ec) return cmd_eval_classifier(cfg, given, evc);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return e.get_exit_code() ? e.get_exit_code() : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 1;
}
