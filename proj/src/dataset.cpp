#include "cdistill/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>

#include "json.hpp"

namespace cdistill {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_tabs(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = s.find('\t', start);
    out.push_back(s.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

}  // namespace

ParseError::ParseError(const std::string& source, std::size_t line, const std::string& message)
    : std::runtime_error(source + ":" + std::to_string(line) + ": " + message), source_(source), line_(line) {}

std::vector<QADatapoint> parse_babi(std::istream& in, const std::string& source, const std::string& task_id) {
  std::vector<QADatapoint> out;
  std::vector<std::string> story;
  std::string raw;
  std::size_t line_no = 0;
  long previous_id = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = std::string_view(raw);
    if (trim(line).empty()) continue;

    const auto body_start = line.find(' ');
    if (body_start == std::string_view::npos) throw ParseError(source, line_no, "expected '<id> <text>'");
    long id = 0;
    const auto id_text = line.substr(0, body_start);
    const auto [ptr, ec] = std::from_chars(id_text.data(), id_text.data() + id_text.size(), id);
    if (ec != std::errc() || ptr != id_text.data() + id_text.size() || id < 1) {
      throw ParseError(source, line_no, "line does not start with a positive line id");
    }
    if (id == 1) {
      story.clear();
    } else if (id != previous_id + 1) {
      throw ParseError(source, line_no, "line id " + std::to_string(id) + " does not follow " +
                                            std::to_string(previous_id));
    }
    previous_id = id;

    const auto body = line.substr(body_start + 1);
    if (body.find('\t') == std::string_view::npos) {
      if (trim(body).empty()) throw ParseError(source, line_no, "empty statement");
      story.emplace_back(trim(body));
      continue;
    }

    const auto fields = split_tabs(body);
    if (fields.size() < 2) throw ParseError(source, line_no, "question line needs a tab-separated answer");
    const auto question = trim(fields[0]);
    const auto answer = trim(fields[1]);
    if (question.empty()) throw ParseError(source, line_no, "empty question");
    if (answer.empty()) throw ParseError(source, line_no, "empty answer");
    if (fields.size() > 2) {
      for (char c : trim(fields[2])) {
        if (!(c == ' ' || (c >= '0' && c <= '9'))) throw ParseError(source, line_no, "bad supporting fact ids");
      }
    }

    QADatapoint dp;
    dp.task_id = task_id;
    for (const auto& s : story) {
      if (!dp.context.empty()) dp.context.push_back(' ');
      dp.context += s;
    }
    dp.question = std::string(question);
    dp.answer = std::string(answer);
    out.push_back(std::move(dp));
  }
  return out;
}

std::vector<QADatapoint> parse_babi(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  return parse_babi(in, path.string(), path.stem().string());
}

std::vector<QADatapoint> take_per_task(std::span<const QADatapoint> data, std::size_t per_task) {
  std::map<std::string, std::size_t> seen;
  std::vector<QADatapoint> out;
  for (const auto& dp : data) {
    if (seen[dp.task_id]++ < per_task) out.push_back(dp);
  }
  return out;
}

std::vector<QADatapoint> read_qa_jsonl(std::istream& in, const std::string& source) {
  std::vector<QADatapoint> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      QADatapoint dp{j.value("task_id", std::string()), j.value("context", std::string()),
                     j.at("question").get<std::string>(), j.at("answer").get<std::string>()};
      if (dp.question.empty()) throw ParseError(source, line_no, "empty question");
      out.push_back(std::move(dp));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  return out;
}

std::vector<QADatapoint> read_qa_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  return read_qa_jsonl(in, path.string());
}

void write_qa_jsonl(const std::filesystem::path& path, std::span<const QADatapoint> data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& dp : data) {
    const nlohmann::json j = {
        {"task_id", dp.task_id}, {"context", dp.context}, {"question", dp.question}, {"answer", dp.answer}};
    out << j.dump() << '\n';
  }
}

std::vector<QADatapoint> load_dataset(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".jsonl" || ext == ".json") return read_qa_jsonl(path);
  return parse_babi(path);
}

std::string render_task_prompt(std::string_view context, std::string_view question) {
  std::string out("Context: ");
  out.append(context).append(" Question: ").append(question);
  return out;
}

std::string extract_answer(std::string_view generation) {
  static constexpr std::string_view kSeparator = "answer:";
  std::size_t hit = std::string_view::npos;
  for (std::size_t i = 0; i + kSeparator.size() <= generation.size(); ++i) {
    bool match = true;
    for (std::size_t k = 0; k < kSeparator.size() && match; ++k) match = lower(generation[i + k]) == kSeparator[k];
    if (match) hit = i;
  }
  if (hit == std::string_view::npos) return std::string(generation);

  auto rest = generation.substr(hit + kSeparator.size());
  rest = rest.substr(0, rest.find('\n'));
  rest = trim(rest);
  static constexpr std::string_view kEos = "</s>";
  while (rest.size() >= kEos.size() && rest.substr(rest.size() - kEos.size()) == kEos) {
    rest = trim(rest.substr(0, rest.size() - kEos.size()));
  }
  return std::string(rest);
}

}  // namespace cdistill
