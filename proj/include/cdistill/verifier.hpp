#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "cdistill/chain.hpp"
#include "cdistill/oracle.hpp"

namespace cdistill {

// Lowercase, punctuation replaced by spaces, whitespace collapsed.
std::string normalize_answer(std::string_view s);

// 1 iff the normalized strings are equal.
double exact_match(std::string_view prediction, std::string_view label);

// Harmonic mean of token precision and recall over normalized tokens, with
// multiset overlap.
double token_f1(std::string_view prediction, std::string_view label);

// Judges a prediction with a score in [0,1].
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual double score(std::string_view x, const SelectionInferenceChain* chain, std::string_view prediction,
                       std::string_view label) = 0;
  virtual std::string name() const = 0;
};

class ExactMatchScorer final : public Scorer {
 public:
  double score(std::string_view, const SelectionInferenceChain*, std::string_view prediction,
               std::string_view label) override {
    return exact_match(prediction, label);
  }
  std::string name() const override { return "exact-match"; }
};

class TokenF1Scorer final : public Scorer {
 public:
  double score(std::string_view, const SelectionInferenceChain*, std::string_view prediction,
               std::string_view label) override {
    return token_f1(prediction, label);
  }
  std::string name() const override { return "token-f1"; }
};

// Asks a remote judge through the oracle client (and its retry policy) and
// reads the first number in the reply, clamped to [0,1]. A reply without a
// number is a ProtocolError.
class WireScorer final : public Scorer {
 public:
  explicit WireScorer(std::shared_ptr<Oracle> judge, std::string oracle_id = "verifier")
      : judge_(std::move(judge)), oracle_id_(std::move(oracle_id)) {}

  double score(std::string_view x, const SelectionInferenceChain* chain, std::string_view prediction,
               std::string_view label) override;
  std::string name() const override { return "wire"; }

  static std::string render_prompt(std::string_view x, std::string_view prediction, std::string_view label);

 private:
  std::shared_ptr<Oracle> judge_;
  std::string oracle_id_;
};

// "exact-match", "token-f1"; "wire" needs a judge.
std::unique_ptr<Scorer> make_scorer(const std::string& name, std::shared_ptr<Oracle> judge = nullptr);

// The scorer's judgement, checked to lie in [0,1].
double verify(std::string_view x, const SelectionInferenceChain* chain, std::string_view prediction,
              std::string_view label, Scorer& scorer);

}  // namespace cdistill
