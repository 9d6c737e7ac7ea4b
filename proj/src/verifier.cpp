#include "cdistill/verifier.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <regex>
#include <sstream>
#include <stdexcept>

namespace cdistill {

namespace {

std::vector<std::string> answer_tokens(std::string_view s) {
  std::istringstream in(normalize_answer(s));
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(std::move(w));
  return out;
}

}  // namespace

std::string normalize_answer(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    const bool word = std::isalnum(u) || u >= 0x80;
    if (!word) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(u)));
  }
  return out;
}

double exact_match(std::string_view prediction, std::string_view label) {
  return normalize_answer(prediction) == normalize_answer(label) ? 1.0 : 0.0;
}

double token_f1(std::string_view prediction, std::string_view label) {
  const auto p = answer_tokens(prediction);
  const auto l = answer_tokens(label);
  if (p.empty() && l.empty()) return 1.0;
  if (p.empty() || l.empty()) return 0.0;
  std::map<std::string, int> counts;
  for (const auto& w : l) ++counts[w];
  double overlap = 0.0;
  for (const auto& w : p) {
    if (auto it = counts.find(w); it != counts.end() && it->second > 0) {
      --it->second;
      overlap += 1.0;
    }
  }
  if (overlap == 0.0) return 0.0;
  const double precision = overlap / static_cast<double>(p.size());
  const double recall = overlap / static_cast<double>(l.size());
  return 2.0 * precision * recall / (precision + recall);
}

std::string WireScorer::render_prompt(std::string_view x, std::string_view prediction, std::string_view label) {
  std::string out("Question: ");
  out.append(x).append("\nPrediction: ").append(prediction).append("\nReference: ").append(label);
  out.append("\nScore:");
  return out;
}

double WireScorer::score(std::string_view x, const SelectionInferenceChain*, std::string_view prediction,
                         std::string_view label) {
  const auto reply = judge_->complete({render_prompt(x, prediction, label), 16, 0.0, oracle_id_});
  static const std::regex number(R"([-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?)");
  std::smatch m;
  if (!std::regex_search(reply, m, number)) throw ProtocolError("judge reply carries no score: " + reply);
  const double v = std::stod(m.str());
  return std::clamp(v, 0.0, 1.0);
}

std::unique_ptr<Scorer> make_scorer(const std::string& name, std::shared_ptr<Oracle> judge) {
  if (name == "exact-match") return std::make_unique<ExactMatchScorer>();
  if (name == "token-f1") return std::make_unique<TokenF1Scorer>();
  if (name == "wire") {
    if (!judge) throw std::invalid_argument("the wire scorer needs a judge endpoint");
    return std::make_unique<WireScorer>(std::move(judge));
  }
  throw std::invalid_argument("unknown scorer '" + name + "' (expected exact-match, token-f1 or wire)");
}

double verify(std::string_view x, const SelectionInferenceChain* chain, std::string_view prediction,
              std::string_view label, Scorer& scorer) {
  const double v = scorer.score(x, chain, prediction, label);
  if (!(v >= 0.0 && v <= 1.0)) throw std::logic_error(scorer.name() + " returned a score outside [0,1]");
  return v;
}

}  // namespace cdistill
