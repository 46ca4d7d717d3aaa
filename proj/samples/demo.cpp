// Builds a dense index over a small corpus and compares the four pooling
// strategies on one query.

#include <iostream>

#include "medqr/medqr.hpp"

int main(int argc, char** argv) {
  using namespace medqr;
  const std::string path = argc > 1 ? argv[1] : "samples/data/toy_corpus.jsonl";
  const std::string text = argc > 2 ? argv[2] : "how much ibuprofen for a headache";
  try {
    const Corpus corpus = load_qa_corpus(path);
    const TfIdfStats stats = corpus_stats(corpus);
    const HashBackend backend(64, 0);
    const TokenSequence query = tokenize(text);
    for (Strategy s : {Strategy::all, Strategy::rsw, Strategy::kw, Strategy::kw_rcnt}) {
      PoolingSpec spec;
      spec.strategy = s;
      spec.stopwords = StopwordSet({"a", "for", "how", "the", "what", "is"});
      const DenseIndex index = build_dense_index(corpus, spec, backend, stats);
      const auto rep = represent(query, spec, backend, stats);
      const RankedList hits = dense_search(index, rep.vector, 3);
      std::cout << to_string(s) << ":";
      for (const auto& h : hits.hits) std::cout << ' ' << h.id << " (" << h.score << ")";
      std::cout << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
