#include "cdistill/chain.hpp"

#include <algorithm>
#include <stdexcept>

namespace cdistill {

std::vector<TokenSequence> SelectionInferenceChain::prior_rollout() const {
  std::vector<TokenSequence> out;
  for (std::size_t i = 0; i < split && i < hops.size(); ++i) {
    out.push_back(hops[i].retrieval.assembled_prefix);
    out.push_back(hops[i].inference);
  }
  return out;
}

std::vector<TokenSequence> SelectionInferenceChain::posterior_rollout() const {
  std::vector<TokenSequence> out;
  for (std::size_t i = split; i < hops.size(); ++i) out.push_back(hops[i].inference);
  return out;
}

SolverInput solver_input(const RetrievalBundle& bundle) {
  SolverInput input(bundle.assembled_prefix);
  for (const auto& r : bundle.retrieved) input.passages.push_back(r.passage);
  return input;
}

SelectionInferenceChain selection_inference_chain(const Solver& solver, const TokenSequence& x,
                                                  const MemoryStore* store, const EmbeddingTable& table,
                                                  const ChainConfig& config) {
  if (config.hops != 1) throw std::invalid_argument("only single-hop chains are supported");
  if (config.prediction_index >= config.hops) throw std::invalid_argument("prediction index outside the chain");

  SelectionInferenceChain chain;
  chain.prediction_index = config.prediction_index;

  SelectionInferenceChain::Hop hop;
  if (store != nullptr && !store->empty() && !x.empty()) {
    const auto queries = select_queries(x, table, config.mode, config.retrieval.k_q, config.retrieval.k_pca,
                                        config.seed, config.retrieval.sample_with_replacement,
                                        config.retrieval.pca);
    hop.retrieval = retrieve_and_assemble(*store, queries, x, config.retrieval.inject_context);
    if (config.reverse_passages) {
      std::reverse(hop.retrieval.retrieved.begin(), hop.retrieval.retrieved.end());
      TokenSequence prefix;
      for (const auto& r : hop.retrieval.retrieved) prefix = concat(prefix, r.passage);
      hop.retrieval.assembled_prefix = concat(prefix, x);
    }
  } else {
    hop.retrieval.assembled_prefix = x;
  }
  hop.inference = solver.generate(solver_input(hop.retrieval), config.max_tokens);
  chain.hops.push_back(std::move(hop));
  return chain;
}

}  // namespace cdistill
