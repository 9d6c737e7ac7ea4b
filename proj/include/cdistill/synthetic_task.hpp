#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cdistill/dataset.hpp"
#include "cdistill/oracle.hpp"

namespace cdistill {

// A hidden bijection between two disjoint sets of pseudo-words. Source items
// ask about a symbol with one family of question frames; target items use
// unseen carrier sentences and a different family of frames, so the only
// route from question to answer is the mapping itself.
struct SyntheticDictionaryTask {
  std::uint64_t seed = 0;
  std::vector<std::string> sources;        // A
  std::vector<std::string> targets;        // B
  std::map<std::string, std::string> mapping;  // A -> B
  std::vector<QADatapoint> source_split;
  std::vector<QADatapoint> target_split;

  double chance_accuracy() const { return sources.empty() ? 0.0 : 1.0 / static_cast<double>(sources.size()); }
};

// Throws std::invalid_argument if n_symbols < 4 or a split asks for more items
// than there are distinct (symbol, carrier, frame) combinations.
SyntheticDictionaryTask generate_dictionary_task(std::size_t n_symbols, std::size_t n_source, std::size_t n_target,
                                                 std::uint64_t seed);

struct TaskAudit {
  bool ok = true;
  std::vector<std::string> violations;
};

// Mapping is a bijection over disjoint sets, no target answer occurs in a
// target context or question, and target carriers and frames are unseen in
// the source split.
TaskAudit audit_task(const SyntheticDictionaryTask& task);

// "X maps to Y" for prompts with an Answer line, "the question asks about X"
// otherwise. X is the last source symbol found in the Question line.
std::string dictionary_teacher_reply(const SyntheticDictionaryTask& task, const std::string& prompt);
std::unique_ptr<Oracle> make_dictionary_teacher(const SyntheticDictionaryTask& task);

// source.jsonl, target.jsonl and mapping.tsv under dir.
void write_task(const SyntheticDictionaryTask& task, const std::filesystem::path& dir);
SyntheticDictionaryTask read_task(const std::filesystem::path& dir);

}  // namespace cdistill
