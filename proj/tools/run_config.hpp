#pragma once

// Shared configuration and loaders for the medqr command-line tool.

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "medqr/medqr.hpp"

namespace medqr::cli {

struct RunConfig {
  std::string corpus;
  std::string embeddings;
  std::string backend = "hash";
  std::size_t dim = 64;
  std::uint64_t hash_seed = 0;
  std::string strategy = "all";
  std::size_t n_keyphrases = 5;
  std::size_t window = 2;
  bool bigrams = false;
  std::string stopwords;
  std::string mapping_table;
  std::string index;
  std::size_t k = 10;
  double k1 = 1.2;
  double b = 0.75;
  std::size_t first_stage_k = 100;
  std::vector<double> noise_grid = {0.1, 0.2, 0.3, 0.4, 0.5};
  std::uint64_t seed = 0;
  std::string out;
  bool timestamp = false;
  std::string config_file;

  /// Fails fast on paths that were given but do not exist.
  void validate_paths() const {
    for (const auto* p : {&corpus, &embeddings, &stopwords, &mapping_table, &index, &config_file}) {
      if (!p->empty() && !std::filesystem::exists(*p)) throw Error("no such file: " + *p);
    }
  }

  nlohmann::json to_json() const {
    return {{"corpus", corpus},
            {"embeddings", embeddings},
            {"backend", backend},
            {"dim", dim},
            {"hash_seed", hash_seed},
            {"strategy", strategy},
            {"n_keyphrases", n_keyphrases},
            {"window", window},
            {"bigrams", bigrams},
            {"stopwords", stopwords},
            {"mapping_table", mapping_table},
            {"index", index},
            {"k", k},
            {"k1", k1},
            {"b", b},
            {"first_stage_k", first_stage_k},
            {"noise_grid", noise_grid},
            {"seed", seed}};
  }

  Bm25Params bm25() const { return {k1, b}; }
};

inline MappingTable mapping_table(const RunConfig& cfg) {
  return cfg.mapping_table.empty() ? MappingTable{} : load_mapping_table(cfg.mapping_table);
}

/// Corpus with questions normalized by the configured mapping table.
inline Corpus load_corpus(const RunConfig& cfg, const MappingTable& table) {
  if (cfg.corpus.empty()) throw Error("--corpus is required");
  Corpus raw = load_qa_corpus(cfg.corpus);
  if (table.empty()) return raw;
  Corpus out;
  for (QARecord r : raw) {
    r.question = normalize(r.question, table);
    if (r.question.empty()) throw Error("record \"" + r.id + "\" is empty after normalization");
    out.add(std::move(r));
  }
  return out;
}

inline PoolingSpec pooling_spec(const RunConfig& cfg, const MappingTable& table) {
  PoolingSpec spec;
  auto strategy = parse_strategy(cfg.strategy);
  if (!strategy) throw Error("unknown strategy \"" + cfg.strategy + "\"");
  spec.strategy = *strategy;
  spec.n_keyphrases = cfg.n_keyphrases;
  spec.context_window = cfg.window;
  spec.bigrams = cfg.bigrams;
  if (!cfg.stopwords.empty()) spec.stopwords = load_stopwords(cfg.stopwords, table);
  spec.validate();
  return spec;
}

/// Which backend flags were set explicitly.
struct BackendFlags {
  bool backend = false;
  bool dim = false;
  bool hash_seed = false;
};

/// Backend from flags. Settings recorded in an index or checkpoint fill in
/// whatever the flags leave unset, so queries embed like the indexed data.
inline std::unique_ptr<EmbeddingBackend> make_backend(const RunConfig& cfg, BackendFlags given = {},
                                                      const nlohmann::json& recorded = {}) {
  const bool has_record = recorded.is_object() && recorded.contains("kind");
  std::string kind = cfg.backend;
  if (!given.backend && has_record) kind = recorded.at("kind").get<std::string>();
  std::unique_ptr<EmbeddingBackend> backend;
  if (kind == "hash") {
    std::size_t dim = cfg.dim;
    std::uint64_t seed = cfg.hash_seed;
    if (has_record && recorded.at("kind") == "hash") {
      if (!given.dim) dim = recorded.at("dim").get<std::size_t>();
      if (!given.hash_seed) seed = recorded.value("seed", std::uint64_t{0});
    }
    backend = std::make_unique<HashBackend>(dim, seed);
  } else if (kind == "static") {
    if (cfg.embeddings.empty()) throw Error("--embeddings is required for the static backend");
    backend = std::make_unique<StaticBackend>(static_backend_load(cfg.embeddings));
  } else if (kind == "precomputed") {
    if (cfg.embeddings.empty()) throw Error("--embeddings is required for the precomputed backend");
    backend = std::make_unique<PrecomputedBackend>(precomputed_backend_load(cfg.embeddings));
  } else {
    throw Error("unknown backend \"" + kind + "\"");
  }
  if (recorded.is_object() && recorded.contains("dim") && recorded.at("dim").get<std::size_t>() != backend->dim()) {
    throw Error("backend dim " + std::to_string(backend->dim()) + " differs from recorded dim " +
                std::to_string(recorded.at("dim").get<std::size_t>()));
  }
  return backend;
}

inline void write_report(const EvalReport& report, const RunConfig& cfg) {
  if (cfg.out.empty()) return;
  io::write_file(cfg.out, report.to_json().dump(2) + "\n");
}

}  // namespace medqr::cli
