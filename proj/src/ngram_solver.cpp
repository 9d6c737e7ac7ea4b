#include "cdistill/ngram_solver.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cdistill/digest.hpp"
#include "json.hpp"

namespace cdistill {

namespace {

constexpr const char* kFormat = "cdistill-ngram";

void write_state(std::ostream& out, const NgramOptions& options, const NgramSolver::Counts& counts) {
  const nlohmann::json header = {{"format", kFormat},
                                 {"version", 1},
                                 {"order", options.order},
                                 {"smoothing", options.smoothing},
                                 {"learning_rate", options.learning_rate},
                                 {"fusion_weight", options.fusion_weight},
                                 {"input_limit", options.input_limit}};
  out << header.dump() << '\n';
  for (const auto& [context, row] : counts) {
    for (const auto& [next, weight] : row.next) {
      nlohmann::json line;
      for (std::size_t i = 0; i < context.size(); ++i) line["t" + std::to_string(i + 1)] = context[i];
      line["t" + std::to_string(context.size() + 1)] = next;
      line["weight"] = weight;
      out << line.dump() << '\n';
    }
  }
}

double row_total(const NgramSolver::Row& row) {
  double total = 0.0;
  for (const auto& [next, weight] : row.next) total += weight;
  return total;
}

}  // namespace

void audit_self_io(const Solver& solver, const TokenSequence& seq) {
  if (seq.size() > solver.input_limit()) {
    throw SelfIoError("update of " + std::to_string(seq.size()) + " tokens exceeds the solver input limit " +
                      std::to_string(solver.input_limit()));
  }
  const auto v = solver.vocabulary_size();
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq.tokens[i] >= v) {
      throw SelfIoError("update token " + std::to_string(seq.tokens[i]) + " at position " + std::to_string(i) +
                        " is outside the solver vocabulary");
    }
  }
}

NgramSolver::NgramSolver(std::shared_ptr<const Vocabulary> vocabulary, NgramOptions options)
    : vocabulary_(std::move(vocabulary)), options_(options) {
  if (!vocabulary_) throw std::invalid_argument("NgramSolver needs a vocabulary");
  if (options_.order < 1) throw std::invalid_argument("n-gram order must be >= 1");
  if (!(options_.smoothing > 0.0)) throw std::invalid_argument("smoothing must be positive");
  if (options_.fusion_weight < 0.0 || options_.fusion_weight > 1.0) {
    throw std::invalid_argument("fusion_weight must lie in [0, 1]");
  }
}

NgramSolver::Context NgramSolver::context_of(std::span<const TokenId> history) const {
  const auto width = options_.order - 1;
  Context ctx(width, kBosPad);
  const auto take = std::min(width, history.size());
  std::copy(history.end() - static_cast<std::ptrdiff_t>(take), history.end(),
            ctx.end() - static_cast<std::ptrdiff_t>(take));
  return ctx;
}

std::map<TokenId, double> NgramSolver::copy_votes(std::span<const TokenId> history,
                                                  std::span<const TokenSequence> passages) const {
  std::map<TokenId, double> votes;
  if (passages.empty() || history.empty() || options_.fusion_weight == 0.0) return votes;
  const auto longest = std::min(options_.order > 1 ? options_.order - 1 : 1, history.size());
  for (auto len = longest; len >= 1; --len) {
    const auto suffix = history.last(len);
    double n = 0.0;
    for (const auto& passage : passages) {
      const auto& p = passage.tokens;
      for (std::size_t j = 0; j + len < p.size(); ++j) {
        if (std::equal(suffix.begin(), suffix.end(), p.begin() + static_cast<std::ptrdiff_t>(j))) {
          votes[p[j + len]] += 1.0;
          n += 1.0;
        }
      }
    }
    if (n > 0.0) {
      for (auto& [t, v] : votes) v /= n;
      return votes;
    }
  }
  return votes;
}

double NgramSolver::probability(std::span<const TokenId> history, TokenId next,
                                std::span<const TokenSequence> passages) const {
  const double v = static_cast<double>(std::max<std::size_t>(1, vocabulary_->size()));
  const double alpha = options_.smoothing;
  double count = 0.0;
  double total = 0.0;
  if (auto it = counts_.find(context_of(history)); it != counts_.end()) {
    total = it->second.total;
    if (auto n = it->second.next.find(next); n != it->second.next.end()) count = n->second;
  }
  const double p = (count + alpha) / (total + alpha * v);

  const auto votes = copy_votes(history, passages);
  if (votes.empty()) return p;
  const auto vote = votes.find(next);
  const double lambda = options_.fusion_weight;
  return (1.0 - lambda) * p + lambda * (vote == votes.end() ? 0.0 : vote->second);
}

std::vector<double> NgramSolver::score(const SolverInput& input, const TokenSequence& target) const {
  std::vector<TokenId> history = input.prefix.tokens;
  std::vector<double> losses;
  losses.reserve(target.size());
  for (auto t : target.tokens) {
    losses.push_back(-std::log(probability(history, t, input.passages)));
    history.push_back(t);
  }
  return losses;
}

TokenSequence NgramSolver::generate(const SolverInput& input, std::size_t max_tokens, TokenId stop) const {
  if (max_tokens == 0) throw std::invalid_argument("generate: max_tokens must be >= 1");
  const auto v = static_cast<TokenId>(std::max<std::size_t>(1, vocabulary_->size()));
  const double alpha = options_.smoothing;
  const double lambda = options_.fusion_weight;

  std::vector<TokenId> history = input.prefix.tokens;
  std::vector<TokenId> out;
  for (std::size_t step = 0; step < max_tokens; ++step) {
    const Row* row = nullptr;
    if (auto it = counts_.find(context_of(history)); it != counts_.end()) row = &it->second;
    const auto votes = copy_votes(history, input.passages);
    const double total = row ? row->total : 0.0;
    const double mix = votes.empty() ? 0.0 : lambda;
    const auto prob = [&](TokenId t) {
      double c = 0.0;
      if (row) {
        if (auto n = row->next.find(t); n != row->next.end()) c = n->second;
      }
      double p = (1.0 - mix) * (c + alpha) / (total + alpha * static_cast<double>(v));
      if (mix > 0.0) {
        if (auto n = votes.find(t); n != votes.end()) p += mix * n->second;
      }
      return p;
    };

    // Tokens without counts or votes all share the base probability, so the
    // lowest such id stands in for them.
    std::vector<TokenId> candidates;
    if (row) {
      for (const auto& [t, w] : row->next) candidates.push_back(t);
    }
    for (const auto& [t, w] : votes) candidates.push_back(t);
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    TokenId filler = 0;
    for (auto t : candidates) {
      if (t != filler) break;
      ++filler;
    }
    if (filler < v) candidates.insert(std::lower_bound(candidates.begin(), candidates.end(), filler), filler);

    TokenId best = candidates.front();
    double best_p = prob(best);
    for (auto t : candidates) {
      if (t >= v) continue;
      const double p = prob(t);
      if (p > best_p || (p == best_p && t < best)) {
        best = t;
        best_p = p;
      }
    }
    if (best == stop) break;
    out.push_back(best);
    history.push_back(best);
  }

  TokenSequence seq;
  std::vector<std::string> words;
  words.reserve(out.size());
  for (auto t : out) words.push_back(vocabulary_->token(t));
  seq.text = join_tokens(words);
  seq.tokens = std::move(out);
  return seq;
}

void NgramSolver::train_step(const SolverInput& input, const TokenSequence& target, std::span<const double> weights) {
  if (weights.size() != target.size()) {
    throw std::invalid_argument("train_step: " + std::to_string(weights.size()) + " weights for " +
                                std::to_string(target.size()) + " target tokens");
  }
  for (auto w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("train_step: weights must be finite and >= 0");
  }
  std::vector<TokenId> history = input.prefix.tokens;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double inc = options_.learning_rate * weights[i];
    if (inc > 0.0) {
      auto& row = counts_[context_of(history)];
      row.next[target.tokens[i]] += inc;
      row.total = row_total(row);
    }
    history.push_back(target.tokens[i]);
  }
}

std::string NgramSolver::state_digest() const {
  std::ostringstream out;
  write_state(out, options_, counts_);
  return sha256_hex(out.str());
}

void NgramSolver::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write solver state " + path.string());
  write_state(out, options_, counts_);
  if (!out) throw std::runtime_error("error writing solver state " + path.string());
}

NgramSolver NgramSolver::load(const std::filesystem::path& path, std::shared_ptr<const Vocabulary> vocabulary) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read solver state " + path.string());
  std::string line;
  std::size_t line_no = 0;
  const auto fail = [&](const std::string& why) {
    return std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + why);
  };

  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty solver state");
  ++line_no;
  NgramOptions options;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.at("format") != kFormat) throw fail("not an n-gram solver state");
    options.order = header.at("order").get<std::size_t>();
    options.smoothing = header.at("smoothing").get<double>();
    options.learning_rate = header.at("learning_rate").get<double>();
    options.fusion_weight = header.at("fusion_weight").get<double>();
    options.input_limit = header.at("input_limit").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("bad header: ") + e.what());
  }

  NgramSolver solver(std::move(vocabulary), options);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Context ctx(options.order - 1);
      for (std::size_t i = 0; i < ctx.size(); ++i) ctx[i] = j.at("t" + std::to_string(i + 1)).get<TokenId>();
      const auto next = j.at("t" + std::to_string(options.order)).get<TokenId>();
      const auto weight = j.at("weight").get<double>();
      if (!(weight >= 0.0)) throw fail("negative weight");
      solver.counts_[ctx].next[next] = weight;
    } catch (const nlohmann::json::exception& e) {
      throw fail(e.what());
    }
  }
  for (auto& [ctx, row] : solver.counts_) row.total = row_total(row);
  return solver;
}

}  // namespace cdistill
