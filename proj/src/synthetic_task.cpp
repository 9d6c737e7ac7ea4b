#include "cdistill/synthetic_task.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include "cdistill/random.hpp"
#include "cdistill/tokenizer.hpp"

namespace cdistill {

namespace {

constexpr const char* kSourceCarriers[] = {
    "the courier left a parcel at the gate.",
    "a clerk sorted the letters by the window.",
    "the archive keeps an old ledger of names.",
    "two scribes copied the register at dawn.",
    "the keeper wrote a note in the margin.",
    "a traveller asked the guide for directions.",
};
constexpr const char* kSourceFrames[] = {
    "what is the partner of {}",
    "name the match for {}",
    "which word is paired with {}",
};
constexpr const char* kTargetCarriers[] = {
    "the harbour bell rang twice before noon.",
    "a gardener planted beans along the wall.",
    "the mill wheel turned slowly in the rain.",
    "three children painted the fence blue.",
    "a baker sold warm bread at the market.",
    "the lamp on the desk flickered at night.",
};
constexpr const char* kTargetFrames[] = {
    "tell me what corresponds to {}",
    "recall the counterpart belonging to {}",
    "supply the entry linked to {}",
};

std::string fill(std::string_view frame, const std::string& symbol) {
  std::string out(frame);
  out.replace(out.find("{}"), 2, symbol);
  return out;
}

std::string pseudo_word(Rng& rng, std::string_view consonants, std::string_view vowels) {
  std::string w;
  for (int s = 0; s < 3; ++s) {
    w.push_back(consonants[uniform_index(rng, consonants.size())]);
    w.push_back(vowels[uniform_index(rng, vowels.size())]);
  }
  return w;
}

template <std::size_t NC, std::size_t NF>
std::vector<QADatapoint> make_split(Rng& rng, const std::vector<std::string>& symbols,
                                    const std::map<std::string, std::string>& mapping, std::size_t count,
                                    const char* const (&carriers)[NC], const char* const (&frames)[NF],
                                    const std::string& task_id) {
  const std::size_t n = symbols.size();
  const std::size_t combos = NC * NF;
  if (count > n * combos) {
    throw std::invalid_argument(task_id + ": " + std::to_string(count) + " items requested but only " +
                                std::to_string(n * combos) + " distinct combinations exist");
  }
  const auto symbol_order = sample_without_replacement(rng, n, n);
  std::vector<std::vector<std::size_t>> combo_order(n);
  for (auto& order : combo_order) order = sample_without_replacement(rng, combos, combos);

  std::vector<QADatapoint> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto s = symbol_order[i % n];
    const auto combo = combo_order[s][i / n];
    const auto& symbol = symbols[s];
    out.push_back({task_id, carriers[combo / NF], fill(frames[combo % NF], symbol), mapping.at(symbol)});
  }
  return out;
}

template <std::size_t N>
std::set<std::string> words_of(const char* const (&lines)[N]) {
  std::set<std::string> out;
  for (const auto* line : lines) {
    for (auto& t : split_tokens(line)) out.insert(std::move(t));
  }
  return out;
}

std::set<std::string> token_set(std::string_view text) {
  std::set<std::string> out;
  for (auto& t : split_tokens(text)) out.insert(std::move(t));
  return out;
}

}  // namespace

SyntheticDictionaryTask generate_dictionary_task(std::size_t n_symbols, std::size_t n_source, std::size_t n_target,
                                                 std::uint64_t seed) {
  if (n_symbols < 4) throw std::invalid_argument("dictionary task needs at least 4 symbols");

  auto reserved = words_of(kSourceCarriers);
  reserved.merge(words_of(kSourceFrames));
  reserved.merge(words_of(kTargetCarriers));
  reserved.merge(words_of(kTargetFrames));
  for (const auto* w : {"maps", "to", "the", "question", "asks", "about", "context", "answer", "t"}) {
    reserved.insert(w);
  }

  SyntheticDictionaryTask task;
  task.seed = seed;
  Rng rng(derive_seed({seed, 0x64696374ULL}));
  std::set<std::string> used = reserved;
  const auto draw = [&](std::string_view consonants, std::string_view vowels) {
    for (;;) {
      auto w = pseudo_word(rng, consonants, vowels);
      if (used.insert(w).second) return w;
    }
  };
  for (std::size_t i = 0; i < n_symbols; ++i) task.sources.push_back(draw("bdgkpt", "aou"));
  std::vector<std::string> pool;
  for (std::size_t i = 0; i < n_symbols; ++i) pool.push_back(draw("lmnrsv", "ei"));
  const auto perm = sample_without_replacement(rng, n_symbols, n_symbols);
  for (std::size_t i = 0; i < n_symbols; ++i) {
    task.targets.push_back(pool[perm[i]]);
    task.mapping.emplace(task.sources[i], task.targets[i]);
  }

  task.source_split = make_split(rng, task.sources, task.mapping, n_source, kSourceCarriers, kSourceFrames,
                                 "dictionary-source");
  task.target_split = make_split(rng, task.sources, task.mapping, n_target, kTargetCarriers, kTargetFrames,
                                 "dictionary-target");
  return task;
}

TaskAudit audit_task(const SyntheticDictionaryTask& task) {
  TaskAudit audit;
  const auto fail = [&](std::string why) {
    audit.ok = false;
    audit.violations.push_back(std::move(why));
  };

  std::set<std::string> sources(task.sources.begin(), task.sources.end());
  std::set<std::string> targets(task.targets.begin(), task.targets.end());
  if (sources.size() != task.sources.size()) fail("duplicate source symbol");
  if (targets.size() != task.targets.size()) fail("duplicate target symbol");
  for (const auto& s : sources) {
    if (targets.contains(s)) fail("symbol '" + s + "' is both a source and a target");
  }
  std::set<std::string> images;
  for (const auto& [a, b] : task.mapping) {
    if (!sources.contains(a)) fail("mapping key '" + a + "' is not a source symbol");
    if (!targets.contains(b)) fail("mapping value '" + b + "' is not a target symbol");
    images.insert(b);
  }
  if (task.mapping.size() != sources.size() || images.size() != targets.size()) fail("mapping is not a bijection");

  std::set<std::string> source_contexts;
  std::set<std::string> source_frames;
  for (const auto& dp : task.source_split) {
    source_contexts.insert(dp.context);
    auto tokens = split_tokens(dp.question);
    if (tokens.size() >= 3) source_frames.insert(tokens[tokens.size() - 3] + " " + tokens[tokens.size() - 2]);
  }

  for (std::size_t i = 0; i < task.target_split.size(); ++i) {
    const auto& dp = task.target_split[i];
    const auto where = "target item " + std::to_string(i);
    const auto answer = token_set(dp.answer);
    for (const auto* text : {&dp.context, &dp.question}) {
      for (const auto& t : token_set(*text)) {
        if (answer.contains(t)) fail(where + ": answer token '" + t + "' appears in its input");
        if (targets.contains(t)) fail(where + ": target symbol '" + t + "' appears in its input");
      }
    }
    if (source_contexts.contains(dp.context)) fail(where + ": carrier sentence also occurs in the source split");
    auto tokens = split_tokens(dp.question);
    if (tokens.size() >= 3 && source_frames.contains(tokens[tokens.size() - 3] + " " + tokens[tokens.size() - 2])) {
      fail(where + ": question frame also occurs in the source split");
    }
    if (!tokens.empty() && task.mapping.contains(tokens.back()) && task.mapping.at(tokens.back()) != dp.answer) {
      fail(where + ": answer disagrees with the mapping");
    }
  }
  return audit;
}

std::string dictionary_teacher_reply(const SyntheticDictionaryTask& task, const std::string& prompt) {
  std::string_view question;
  if (const auto q = prompt.find("Question: "); q != std::string::npos) {
    question = std::string_view(prompt).substr(q + 10);
    question = question.substr(0, question.find('\n'));
  }
  std::string symbol;
  for (const auto& t : split_tokens(question)) {
    if (task.mapping.contains(t)) symbol = t;
  }
  if (symbol.empty()) return "no mapping is known";
  if (prompt.find("\nAnswer:") != std::string::npos) return symbol + " maps to " + task.mapping.at(symbol);
  return "the question asks about " + symbol;
}

std::unique_ptr<Oracle> make_dictionary_teacher(const SyntheticDictionaryTask& task) {
  return std::make_unique<FunctionOracle>(
      [task](const OracleRequest& request) { return dictionary_teacher_reply(task, request.prompt); });
}

void write_task(const SyntheticDictionaryTask& task, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_qa_jsonl(dir / "source.jsonl", task.source_split);
  write_qa_jsonl(dir / "target.jsonl", task.target_split);
  std::ofstream out(dir / "mapping.tsv");
  if (!out) throw std::runtime_error("cannot write " + (dir / "mapping.tsv").string());
  for (std::size_t i = 0; i < task.sources.size(); ++i) out << task.sources[i] << '\t' << task.targets[i] << '\n';
}

SyntheticDictionaryTask read_task(const std::filesystem::path& dir) {
  SyntheticDictionaryTask task;
  task.source_split = read_qa_jsonl(dir / "source.jsonl");
  task.target_split = read_qa_jsonl(dir / "target.jsonl");
  std::ifstream in(dir / "mapping.tsv");
  if (!in) throw std::runtime_error("cannot read " + (dir / "mapping.tsv").string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError((dir / "mapping.tsv").string(), line_no, "expected A<TAB>B");
    task.sources.push_back(line.substr(0, tab));
    task.targets.push_back(line.substr(tab + 1));
    task.mapping.emplace(task.sources.back(), task.targets.back());
  }
  return task;
}

}  // namespace cdistill
