#pragma once

#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <vector>

#include "cdistill/solver.hpp"

namespace cdistill {

struct NgramOptions {
  std::size_t order = 3;          // 3 is a trigram: two tokens of context
  double smoothing = 0.1;         // add-alpha
  double learning_rate = 1.0;     // count increment per unit weight
  // Mixing weight for the evidence-copy distribution. 0 disables it.
  double fusion_weight = 0.0;
  std::size_t input_limit = 512;
};

// Pads histories shorter than the context width.
inline constexpr TokenId kBosPad = std::numeric_limits<TokenId>::max();

// Add-alpha smoothed n-gram model with weighted count updates.
//
// With fusion_weight > 0 the next-token distribution is mixed with an
// evidence-copy distribution: the longest suffix of the history (up to
// order - 1 tokens) that occurs inside a retrieved passage votes for the
// passage tokens that follow it there.
class NgramSolver final : public Solver {
 public:
  using Context = std::vector<TokenId>;
  struct Row {
    double total = 0.0;
    std::map<TokenId, double> next;
    friend bool operator==(const Row&, const Row&) = default;
  };
  using Counts = std::map<Context, Row>;

  explicit NgramSolver(std::shared_ptr<const Vocabulary> vocabulary, NgramOptions options = {});

  std::vector<double> score(const SolverInput& input, const TokenSequence& target) const override;
  TokenSequence generate(const SolverInput& input, std::size_t max_tokens, TokenId stop = kEosId) const override;
  void train_step(const SolverInput& input, const TokenSequence& target, std::span<const double> weights) override;

  std::size_t input_limit() const override { return options_.input_limit; }
  std::size_t vocabulary_size() const override { return vocabulary_->size(); }
  std::string state_digest() const override;

  // Smoothed next-token probability given the full history.
  double probability(std::span<const TokenId> history, TokenId next,
                     std::span<const TokenSequence> passages = {}) const;

  const NgramOptions& options() const noexcept { return options_; }
  const Counts& counts() const noexcept { return counts_; }

  // First line is a header with the options; then one {t1..tn, weight} per count.
  void save(const std::filesystem::path& path) const;
  static NgramSolver load(const std::filesystem::path& path, std::shared_ptr<const Vocabulary> vocabulary);

  friend bool operator==(const NgramSolver& a, const NgramSolver& b) { return a.counts_ == b.counts_; }

 private:
  Context context_of(std::span<const TokenId> history) const;
  std::map<TokenId, double> copy_votes(std::span<const TokenId> history,
                                       std::span<const TokenSequence> passages) const;

  std::shared_ptr<const Vocabulary> vocabulary_;
  NgramOptions options_;
  Counts counts_;
};

}  // namespace cdistill
