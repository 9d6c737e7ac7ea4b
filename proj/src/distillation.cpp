#include "cdistill/distillation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include "cdistill/random.hpp"

namespace cdistill {

std::string render_prior_prompt(std::string_view context, std::string_view question) {
  std::string out;
  out.append("Context: ").append(context);
  out.append("\nQuestion: ").append(question);
  out.append("\nWhy?");
  return out;
}

std::string render_posterior_prompt(std::string_view context, std::string_view question, std::string_view answer) {
  std::string out;
  out.append("Context: ").append(context);
  out.append("\nQuestion: ").append(question);
  out.append("\nAnswer: ").append(answer);
  out.append("\nWhy?");
  return out;
}

std::string render_teacher_prompt(std::string_view context, std::string_view question, std::string_view answer) {
  return answer.empty() ? render_prior_prompt(context, question) : render_posterior_prompt(context, question, answer);
}

namespace {

TokenSequence ask(Oracle& oracle, Tokenizer& tokenizer, std::string prompt, const TeacherOptions& options) {
  OracleRequest request{std::move(prompt), options.max_tokens, options.temperature, options.oracle_id};
  return tokenizer.encode(oracle.complete(request));
}

}  // namespace

TokenSequence contrastive_distill(Oracle& oracle, Tokenizer& tokenizer, const TokenSequence& context,
                                  const TokenSequence& question, const TokenSequence& answer,
                                  const TeacherOptions& options) {
  if (question.empty() && question.text.empty()) throw std::invalid_argument("contrastive_distill: empty question");
  return ask(oracle, tokenizer, render_teacher_prompt(context.text, question.text, answer.text), options);
}

std::vector<std::string> leaked_evidence_tokens(std::string_view prior_prompt, const UpdatePair& pair) {
  std::set<std::string> allowed;
  for (const auto* seq : {&pair.context, &pair.question, &pair.y_hat}) {
    for (auto& t : split_tokens(seq->text)) allowed.insert(std::move(t));
  }
  for (const auto& t : split_tokens(render_prior_prompt("", ""))) allowed.insert(t);

  std::set<std::string> in_prompt;
  for (auto& t : split_tokens(prior_prompt)) in_prompt.insert(std::move(t));

  std::vector<std::string> leaked;
  for (auto& t : split_tokens(pair.evidence.text)) {
    if (!allowed.contains(t) && in_prompt.contains(t) &&
        std::find(leaked.begin(), leaked.end(), t) == leaked.end()) {
      leaked.push_back(std::move(t));
    }
  }
  return leaked;
}

UpdatePair bayesian_contrastive_distill(Oracle& oracle, Tokenizer& tokenizer, const TokenSequence& context,
                                        const TokenSequence& question, const TokenSequence& y_hat,
                                        const TokenSequence& y, const TeacherOptions& options) {
  if (y.empty() && y.text.empty()) throw std::invalid_argument("bayesian_contrastive_distill: evidence y is empty");

  UpdatePair pair;
  pair.context = context;
  pair.question = question;
  pair.y_hat = y_hat;
  pair.evidence = y;
  pair.prior_prompt = render_teacher_prompt(context.text, question.text, y_hat.text);
  pair.posterior_prompt = render_posterior_prompt(context.text, question.text, y.text);

  if (const auto leaked = leaked_evidence_tokens(pair.prior_prompt, pair); !leaked.empty()) {
    throw EvidenceLeakError("prior prompt contains evidence token '" + leaked.front() + "'");
  }

  pair.prior = ask(oracle, tokenizer, pair.prior_prompt, options);
  pair.posterior = ask(oracle, tokenizer, pair.posterior_prompt, options);
  return pair;
}

TokenSequence meta_distill(Oracle& oracle, Tokenizer& tokenizer, const UpdatePair& pair,
                           const TeacherOptions& options) {
  return ask(oracle, tokenizer, render_posterior_prompt(pair.prior.text, pair.question.text, pair.posterior.text),
             options);
}

DistillationTarget build_target(Tokenizer& tokenizer, const TokenSequence& update, const TokenSequence& y,
                                std::size_t tail_tokens) {
  if (y.empty()) throw std::invalid_argument("build_target: empty answer");
  DistillationTarget target;
  target.full_sequence = concat(concat(update, tokenizer.encode(kAnswerSeparator)), y);

  const auto& tokens = target.full_sequence.tokens;
  const auto split = tokens.size() > tail_tokens ? tokens.size() - tail_tokens : 0;
  target.head = tokenizer.from_tokens({tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(split)});
  target.tail = tokenizer.from_tokens({tokens.begin() + static_cast<std::ptrdiff_t>(split), tokens.end()});
  return target;
}

std::vector<double> segment_weights(std::size_t n, std::size_t tail_tokens, double head_weight, double tail_weight) {
  std::vector<double> w(n, tail_weight);
  const auto split = n > tail_tokens ? n - tail_tokens : 0;
  std::fill(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(split), head_weight);
  return w;
}

double weighted_loss(std::span<const double> losses, std::size_t tail_tokens) {
  if (losses.empty()) throw std::invalid_argument("weighted_loss: empty loss vector");
  const auto split = losses.size() > tail_tokens ? losses.size() - tail_tokens : 0;
  const auto head = losses.first(split);
  const auto tail = losses.subspan(split);

  double total = kTailWeight * std::accumulate(tail.begin(), tail.end(), 0.0) / static_cast<double>(tail.size());
  if (!head.empty()) {
    total += kHeadWeight * std::accumulate(head.begin(), head.end(), 0.0) / static_cast<double>(head.size());
  }
  return total;
}

std::size_t token_bag_cluster(const TokenSequence& seq, std::size_t clusters) {
  if (clusters == 0) throw std::invalid_argument("token_bag_cluster: zero clusters");
  std::uint64_t h = 0;
  for (auto t : seq.tokens) h += mix64(0x626167ULL ^ t);  // addition keeps it order-free
  return static_cast<std::size_t>(mix64(h) % clusters);
}

std::size_t score_bucket(double score, std::size_t buckets) {
  if (buckets == 0) throw std::invalid_argument("score_bucket: zero buckets");
  const double clamped = std::clamp(score, 0.0, 1.0);
  return std::min(buckets - 1, static_cast<std::size_t>(clamped * static_cast<double>(buckets)));
}

double estimate_mutual_information(std::span<const std::pair<std::size_t, std::size_t>> samples) {
  if (samples.size() < 2) throw std::invalid_argument("estimate_mutual_information: need at least two samples");
  std::map<std::pair<std::size_t, std::size_t>, double> joint;
  std::map<std::size_t, double> px;
  std::map<std::size_t, double> py;
  for (const auto& s : samples) {
    joint[s] += 1.0;
    px[s.first] += 1.0;
    py[s.second] += 1.0;
  }
  if (px.size() < 2 || py.size() < 2) return 0.0;

  const double n = static_cast<double>(samples.size());
  double mi = 0.0;
  for (const auto& [xy, c] : joint) {
    mi += (c / n) * std::log2((c * n) / (px[xy.first] * py[xy.second]));
  }
  return std::max(0.0, mi);
}

}  // namespace cdistill
