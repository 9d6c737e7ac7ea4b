#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdistill/tokenizer.hpp"

namespace cdistill {

// What a solver reads: the assembled prefix r_0 ⊕ ... ⊕ x, plus the retrieved
// passages on their own for solvers that attend to evidence separately.
struct SolverInput {
  TokenSequence prefix;
  std::vector<TokenSequence> passages;

  SolverInput() = default;
  SolverInput(TokenSequence p) : prefix(std::move(p)) {}  // NOLINT: implicit on purpose
  SolverInput(TokenSequence p, std::vector<TokenSequence> evidence)
      : prefix(std::move(p)), passages(std::move(evidence)) {}
};

class SelfIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Solver {
 public:
  virtual ~Solver() = default;

  // Per-token negative log-likelihood of target given the input.
  virtual std::vector<double> score(const SolverInput& input, const TokenSequence& target) const = 0;

  // Greedy decoding; the stop token is not included in the result.
  virtual TokenSequence generate(const SolverInput& input, std::size_t max_tokens, TokenId stop = kEosId) const = 0;

  virtual void train_step(const SolverInput& input, const TokenSequence& target, std::span<const double> weights) = 0;

  virtual std::size_t input_limit() const = 0;
  virtual std::size_t vocabulary_size() const = 0;

  // Content digest of the learned state; equal digests mean equal models.
  virtual std::string state_digest() const = 0;
};

// Throws SelfIoError unless every token is in the solver's vocabulary and the
// sequence fits its input limit.
void audit_self_io(const Solver& solver, const TokenSequence& seq);

}  // namespace cdistill
