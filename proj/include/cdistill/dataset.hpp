#pragma once

#include <filesystem>
#include <istream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cdistill {

struct QADatapoint {
  std::string task_id;
  std::string context;   // m
  std::string question;  // q
  std::string answer;    // a

  friend bool operator==(const QADatapoint&, const QADatapoint&) = default;
};

// Carries "file:line: message".
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& message);

  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string source_;
  std::size_t line_;
};

// Numbered story format. Statement lines accumulate into the context; a
// question line ("id question<TAB>answer<TAB>supporting ids") yields a
// datapoint. An id of 1 starts a new story.
std::vector<QADatapoint> parse_babi(std::istream& in, const std::string& source, const std::string& task_id);
std::vector<QADatapoint> parse_babi(const std::filesystem::path& path);  // task id = file stem

// First `per_task` datapoints of every task, in input order.
std::vector<QADatapoint> take_per_task(std::span<const QADatapoint> data, std::size_t per_task);

// One JSON object per line: {task_id, context, question, answer}.
std::vector<QADatapoint> read_qa_jsonl(const std::filesystem::path& path);
std::vector<QADatapoint> read_qa_jsonl(std::istream& in, const std::string& source);
void write_qa_jsonl(const std::filesystem::path& path, std::span<const QADatapoint> data);

// Reads bAbI text files (.txt) or QA records (.jsonl) by extension.
std::vector<QADatapoint> load_dataset(const std::filesystem::path& path);

// "Context: <m> Question: <q>"
std::string render_task_prompt(std::string_view context, std::string_view question);

// Text after the last "Answer:" on its line, trimmed, with trailing "</s>"
// markers removed. Without a separator the generation is returned verbatim.
// Matching ignores ASCII case.
std::string extract_answer(std::string_view generation);

}  // namespace cdistill
