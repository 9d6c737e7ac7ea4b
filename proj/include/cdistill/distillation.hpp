#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cdistill/oracle.hpp"
#include "cdistill/tokenizer.hpp"

namespace cdistill {

// Separator placed between an update and the answer it supports.
inline constexpr std::string_view kAnswerSeparator = "Answer:";
// Tokens at the end of a training target that carry the answer weight.
inline constexpr std::size_t kTailTokens = 5;
inline constexpr double kHeadWeight = 0.1;
inline constexpr double kTailWeight = 0.9;

// "Context: <m>\nQuestion: <q>\nWhy?"
std::string render_prior_prompt(std::string_view context, std::string_view question);
// "Context: <m>\nQuestion: <q>\nAnswer: <a>\nWhy?"
std::string render_posterior_prompt(std::string_view context, std::string_view question, std::string_view answer);
// Prior template when the answer is empty, posterior template otherwise.
std::string render_teacher_prompt(std::string_view context, std::string_view question, std::string_view answer);

struct TeacherOptions {
  std::size_t max_tokens = 256;
  double temperature = 0.7;
  std::string oracle_id = "default";
};

// One teacher rollout u ~ cd(m, q, a). The completion is tokenized with the
// shared tokenizer so that it is a valid solver input.
TokenSequence contrastive_distill(Oracle& oracle, Tokenizer& tokenizer, const TokenSequence& context,
                                  const TokenSequence& question, const TokenSequence& answer,
                                  const TeacherOptions& options = {});

struct UpdatePair {
  TokenSequence context;   // m
  TokenSequence question;  // q
  TokenSequence y_hat;     // the prediction the prior was conditioned on (may be empty)
  TokenSequence evidence;  // y
  TokenSequence prior;
  TokenSequence posterior;
  std::string prior_prompt;
  std::string posterior_prompt;
  std::optional<TokenSequence> meta;

  TokenSequence source_task() const { return concat(context, question); }
};

class EvidenceLeakError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Tokens of y that occur neither in the task nor in y_hat. If any of them
// shows up in the prior prompt, the prior saw the evidence.
std::vector<std::string> leaked_evidence_tokens(std::string_view prior_prompt, const UpdatePair& pair);

// Emits (u_prior, u_posterior): the prior is conditioned on (x, y_hat), the
// posterior on (x, y). Throws std::invalid_argument for empty evidence and
// EvidenceLeakError if the rendered prior prompt contains evidence tokens.
UpdatePair bayesian_contrastive_distill(Oracle& oracle, Tokenizer& tokenizer, const TokenSequence& context,
                                        const TokenSequence& question, const TokenSequence& y_hat,
                                        const TokenSequence& y, const TeacherOptions& options = {});

// u_meta ~ cd(u_prior, u_posterior): the prior becomes the context and the
// posterior takes the answer slot. The result is meant for memory storage.
TokenSequence meta_distill(Oracle& oracle, Tokenizer& tokenizer, const UpdatePair& pair,
                           const TeacherOptions& options = {});

struct DistillationTarget {
  TokenSequence full_sequence;  // u ⊕ "Answer:" ⊕ y
  TokenSequence head;
  TokenSequence tail;
};

// Throws std::invalid_argument when y is empty.
DistillationTarget build_target(Tokenizer& tokenizer, const TokenSequence& update, const TokenSequence& y,
                                std::size_t tail_tokens = kTailTokens);

// Per-token weights for a target of length n: head tokens get head_weight,
// the last tail_tokens get tail_weight.
std::vector<double> segment_weights(std::size_t n, std::size_t tail_tokens = kTailTokens,
                                    double head_weight = kHeadWeight, double tail_weight = kTailWeight);

// 0.1 * mean(head) + 0.9 * mean(tail). An empty head contributes nothing.
double weighted_loss(std::span<const double> per_token_losses, std::size_t tail_tokens = kTailTokens);

// Order-insensitive hash of the token multiset, reduced to a cluster id.
std::size_t token_bag_cluster(const TokenSequence& seq, std::size_t clusters = 64);

// Score in [0,1] to one of `buckets` equal-width bins.
std::size_t score_bucket(double score, std::size_t buckets = 4);

// Plug-in mutual information of the empirical joint histogram, in bits.
// Needs at least two samples.
double estimate_mutual_information(std::span<const std::pair<std::size_t, std::size_t>> samples);

}  // namespace cdistill
