#pragma once

#include <cstdint>
#include <vector>

#include "cdistill/retrieval.hpp"
#include "cdistill/solver.hpp"

namespace cdistill {

// Alternating selection (retrieval) and inference (generation) steps. Only
// single-hop chains are built: r_0 then f_0.
struct SelectionInferenceChain {
  struct Hop {
    RetrievalBundle retrieval;  // r_i
    TokenSequence inference;    // f_i
  };

  std::vector<Hop> hops;
  std::size_t prediction_index = 0;  // j: f_j is the prediction

  std::size_t length() const noexcept { return hops.size(); }
  const TokenSequence& prediction() const { return hops.at(prediction_index).inference; }

  // The chain up to (not including) r_split is the prior rollout; from there
  // on it is the posterior.
  std::size_t split = 0;
  std::vector<TokenSequence> prior_rollout() const;
  std::vector<TokenSequence> posterior_rollout() const;
};

struct ChainConfig {
  RetrievalOptions retrieval;
  RetrievalMode mode = RetrievalMode::eval;
  std::uint64_t seed = 0;
  std::size_t max_tokens = 32;
  std::size_t hops = 1;
  std::size_t prediction_index = 0;
  bool reverse_passages = false;  // position-sensitivity probe
};

// store may be null, which behaves like an empty store.
SelectionInferenceChain selection_inference_chain(const Solver& solver, const TokenSequence& x,
                                                  const MemoryStore* store, const EmbeddingTable& table,
                                                  const ChainConfig& config);

// Input the solver sees for a retrieval bundle: prefix plus passages.
SolverInput solver_input(const RetrievalBundle& bundle);

}  // namespace cdistill
