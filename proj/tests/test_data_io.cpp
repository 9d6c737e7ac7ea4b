#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "cdistill/dataset.hpp"
#include "cdistill/records.hpp"
#include "cdistill/synthetic_task.hpp"
#include "json.hpp"
#include "support.hpp"

namespace cdistill {
namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

TEST(ParseBabi, KitchenSample) {
  std::istringstream in(
      "1 The kitchen is south of the bathroom.\n"
      "2 The bedroom is south of the kitchen.\n"
      "3 What is south of the kitchen?\tbedroom\t2\n");
  const auto data = parse_babi(in, "qa4.txt", "qa4");
  ASSERT_EQ(data.size(), 1u);
  EXPECT_EQ(data[0].context, "The kitchen is south of the bathroom. The bedroom is south of the kitchen.");
  EXPECT_EQ(data[0].question, "What is south of the kitchen?");
  EXPECT_EQ(data[0].answer, "bedroom");
  EXPECT_EQ(render_task_prompt(data[0].context, data[0].question),
            "Context: The kitchen is south of the bathroom. The bedroom is south of the kitchen. Question: What is "
            "south of the kitchen?");
}

TEST(ParseBabi, IdResetClearsStory) {
  std::istringstream in(
      "1 Mary went home.\n"
      "2 Where is Mary?\thome\t1\n"
      "1 John got the milk.\n"
      "2 What does John have?\tmilk\t1\n");
  const auto data = parse_babi(in, "s", "t");
  ASSERT_EQ(data.size(), 2u);
  EXPECT_EQ(data[1].context, "John got the milk.");
}

TEST(ParseBabi, MalformedLineReportsLocation) {
  std::istringstream in("1 Mary went home.\n2 Where is Mary?\t\t1\n");
  try {
    parse_babi(in, "broken.txt", "t");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_EQ(std::string(e.what()).rfind("broken.txt:2:", 0), 0u);
  }
  std::istringstream skip("1 a.\n3 b.\n");
  EXPECT_THROW(parse_babi(skip, "s", "t"), ParseError);
}

TEST(ParseBabi, TwentyTasksLowData) {
  testing::TempDir dir("babi");
  std::vector<QADatapoint> all;
  for (int t = 1; t <= 20; ++t) {
    const auto path = dir / ("qa" + std::to_string(t) + ".txt");
    std::ofstream out(path);
    for (int s = 0; s < 8; ++s) out << "1 Sam is in room " << s << ".\n2 Where is Sam?\troom\t1\n";
    out.close();
    const auto data = parse_babi(path);
    EXPECT_EQ(data.front().task_id, "qa" + std::to_string(t));
    all.insert(all.end(), data.begin(), data.end());
  }
  EXPECT_EQ(take_per_task(all, 5).size(), 100u);
}

TEST(QaJsonl, RoundTrip) {
  testing::TempDir dir("qa");
  const std::vector<QADatapoint> data{{"com2sense", "", "Is this plausible?", "True"},
                                      {"x", "a \"quoted\"\nline", "q", "a"}};
  write_qa_jsonl(dir / "d.jsonl", data);
  EXPECT_EQ(read_qa_jsonl(dir / "d.jsonl"), data);
  EXPECT_EQ(load_dataset(dir / "d.jsonl"), data);
  std::istringstream bad("{\"task_id\":\"t\",\"question\":\"\",\"answer\":\"a\"}\n");
  EXPECT_THROW(read_qa_jsonl(bad, "bad.jsonl"), ParseError);
}

TEST(ExtractAnswer, Examples) {
  EXPECT_EQ(extract_answer("Rationale: Yes, because he had to get up early on Saturday. Answer: yes"), "yes");
  EXPECT_EQ(extract_answer("Mary got the milk there."), "Mary got the milk there.");
  EXPECT_EQ(extract_answer("Answer: a Answer: b"), "b");
}

TEST(ExtractAnswer, Markers) {
  EXPECT_EQ(extract_answer("Answer: yes</s>"), "yes");
  EXPECT_EQ(extract_answer("Answer: True</s>"), "True");
  EXPECT_EQ(extract_answer("answer: kitchen </s></s>"), "kitchen");
  EXPECT_EQ(extract_answer(""), "");
  EXPECT_EQ(extract_answer("Answer:"), "");
}

TEST(ExtractAnswer, FuzzNeverThrows) {
  std::mt19937_64 rng(5);
  const std::string alphabet = "Answer: </s>\n\tabc\x01\xff";
  std::uniform_int_distribution<std::size_t> len(0, 40), pick(0, alphabet.size() - 1);
  for (int i = 0; i < 2000; ++i) {
    std::string s;
    for (std::size_t n = len(rng); n > 0; --n) s.push_back(alphabet[pick(rng)]);
    EXPECT_NO_THROW(extract_answer(s));
  }
}

TEST(DictionaryTask, ChanceAndAudit) {
  const auto task = generate_dictionary_task(10, 50, 50, 1);
  EXPECT_DOUBLE_EQ(task.chance_accuracy(), 0.1);
  EXPECT_EQ(task.source_split.size(), 50u);
  EXPECT_EQ(task.target_split.size(), 50u);
  const auto audit = audit_task(task);
  EXPECT_TRUE(audit.ok) << (audit.violations.empty() ? "" : audit.violations.front());
}

TEST(DictionaryTask, NoAnswerInTargetInputs) {
  const auto task = generate_dictionary_task(10, 50, 50, 2);
  for (const auto& dp : task.target_split) {
    const auto words = split_tokens(dp.context + " " + dp.question);
    for (const auto& [a, b] : task.mapping) {
      EXPECT_EQ(std::count(words.begin(), words.end(), b), 0) << dp.question;
    }
    EXPECT_EQ(task.mapping.count(split_tokens(dp.question).back()), 1u);
  }
}

TEST(DictionaryTask, AuditCatchesLeak) {
  auto task = generate_dictionary_task(6, 10, 10, 3);
  task.target_split[0].context += " " + task.target_split[0].answer;
  EXPECT_FALSE(audit_task(task).ok);
}

TEST(DictionaryTask, ByteIdenticalFiles) {
  testing::TempDir a("task"), b("task");
  write_task(generate_dictionary_task(10, 50, 50, 11), a.path());
  write_task(generate_dictionary_task(10, 50, 50, 11), b.path());
  for (const char* f : {"source.jsonl", "target.jsonl", "mapping.tsv"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  const auto back = read_task(a.path());
  EXPECT_EQ(back.mapping, generate_dictionary_task(10, 50, 50, 11).mapping);
}

TEST(DictionaryTask, Errors) {
  EXPECT_THROW(generate_dictionary_task(3, 10, 10, 0), std::invalid_argument);
  EXPECT_THROW(generate_dictionary_task(4, 10, 100000, 0), std::invalid_argument);
}

TEST(DictionaryTask, TeacherReplies) {
  const auto task = generate_dictionary_task(6, 10, 10, 4);
  const auto& dp = task.source_split[0];
  const auto& x = split_tokens(dp.question).back();
  EXPECT_EQ(dictionary_teacher_reply(task, render_posterior_prompt(dp.context, dp.question, dp.answer)),
            x + " maps to " + dp.answer);
  EXPECT_EQ(dictionary_teacher_reply(task, render_prior_prompt(dp.context, dp.question)),
            "the question asks about " + x);
}

TEST(Records, RoundTrips) {
  const UpdatePairRecord pair{"x", "yh", "y", "up", "upost", std::string("meta"), "o", "ts"};
  EXPECT_EQ(parse_pair_record(to_json_line(pair)), pair);
  UpdatePairRecord no_meta = pair;
  no_meta.u_meta.reset();
  EXPECT_EQ(parse_pair_record(to_json_line(no_meta)), no_meta);

  const EpisodeLogRecord ep{3, "q", "gen", "lab", "pred", 0.5, {{"t=1. a", 0.75, 0}, {"t=2. b", 0.5, 1}}};
  const auto line = to_json_line(ep);
  EXPECT_EQ(parse_episode_record(line), ep);
  const auto j = nlohmann::json::parse(line);
  EXPECT_EQ(j["retrievals"][1][2], "retrieval_order_1");
  EXPECT_EQ(j["retrievals"][0][0], "t=1. a");
}

TEST(Records, BadLineHasLocation) {
  testing::TempDir dir("rec");
  std::ofstream(dir / "c.jsonl") << to_json_line(UpdateCorpusEntry{}) << "\n{\"broken\": true}\n";
  try {
    read_corpus(dir / "c.jsonl");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

}  // namespace
}  // namespace cdistill
