#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cdistill/cli.hpp"
#include "cdistill/records.hpp"
#include "json.hpp"
#include "support.hpp"

namespace cdistill {
namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

nlohmann::json read_json(const std::filesystem::path& p) { return nlohmann::json::parse(slurp(p)); }

TEST(Cli, ConfigErrors) {
  EXPECT_EQ(cli({}).code, kExitConfig);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitConfig);
  EXPECT_EQ(cli({"train", "--mode", "sideways", "--source", "x", "--out", "y"}).code, kExitConfig);
  const auto missing = cli({"train", "--source", "/nonexistent/source.jsonl", "--out", "/tmp/x"});
  EXPECT_EQ(missing.code, kExitConfig);
  EXPECT_NE(missing.err.find("no such file"), std::string::npos);
  EXPECT_EQ(cli({"validate", "/nonexistent/file.jsonl"}).code, kExitConfig);
  EXPECT_EQ(cli({"bench-synthetic", "--k-q", "9"}).code, kExitConfig);
}

TEST(Cli, HelpExitsZero) {
  const auto r = cli({"--help"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("bench-synthetic"), std::string::npos);
}

TEST(Cli, BenchIsDeterministic) {
  testing::TempDir a("bench"), b("bench");
  const auto r1 = cli({"bench-synthetic", "--seed", "7", "--seeds", "2", "--out", a.path().string()});
  const auto r2 = cli({"bench-synthetic", "--seed", "7", "--seeds", "2", "--out", b.path().string()});
  ASSERT_EQ(r1.code, kExitOk) << r1.err;
  EXPECT_EQ(r1.out, r2.out);
  EXPECT_EQ(slurp(a / "bench.jsonl"), slurp(b / "bench.jsonl"));
  EXPECT_NE(r1.out.find("cd-memory"), std::string::npos);
  const auto manifest = read_json(a / "manifest.json");
  EXPECT_EQ(manifest["config"]["k_q"], 4);
  EXPECT_EQ(manifest["config"]["k_pca"], 6);
  EXPECT_EQ(manifest["config"]["update_cap"], 200);
  EXPECT_EQ(manifest["config"]["loss_weights"], nlohmann::json({0.1, 0.9}));
}

TEST(Cli, Pipeline) {
  testing::TempDir dir("pipeline");
  const auto task = dir / "task";
  ASSERT_EQ(cli({"bench-synthetic", "--seeds", "1", "--seed", "3", "--out", dir.path().string()}).code, kExitOk);
  const auto task_dir = dir / "task-3";
  ASSERT_TRUE(std::filesystem::exists(task_dir / "source.jsonl"));

  const auto corpus = (dir / "corpus.jsonl").string();
  const auto gen = cli({"generate-updates", "--dataset", (task_dir / "source.jsonl").string(), "--out", corpus,
                        "--pairs", (dir / "pairs.jsonl").string(), "--oracle", "dictionary", "--task-dir",
                        task_dir.string(), "--temperature", "0"});
  ASSERT_EQ(gen.code, kExitOk) << gen.err;
  EXPECT_EQ(read_corpus(corpus).size(), 100u);

  const std::vector<std::string> common{"--seed", "3", "--order", "4", "--fusion", "0.5", "--epochs", "6"};
  auto with = [&](std::vector<std::string> args) {
    args.insert(args.end(), common.begin(), common.end());
    return args;
  };
  const auto base_dir = (dir / "base").string(), mem_dir = (dir / "mem").string();
  ASSERT_EQ(cli(with({"train", "--mode", "baseline", "--source", (task_dir / "source.jsonl").string(), "--out",
                      base_dir}))
                .code,
            kExitOk);
  const auto train = cli(with({"train", "--mode", "cd-memory", "--source", (task_dir / "source.jsonl").string(),
                               "--corpus", corpus, "--out", mem_dir}));
  ASSERT_EQ(train.code, kExitOk) << train.err;
  EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(mem_dir) / "train_report.jsonl"));

  const auto base_eval = (dir / "base-eval").string(), mem_eval = (dir / "mem-eval").string();
  const auto target = (task_dir / "target.jsonl").string();
  ASSERT_EQ(cli({"eval", "--model", base_dir, "--target", target, "--out", base_eval}).code, kExitOk);
  const auto ev = cli({"eval", "--model", mem_dir, "--target", target, "--out", mem_eval, "--workers", "3"});
  ASSERT_EQ(ev.code, kExitOk) << ev.err;

  auto base_cfg = read_json(std::filesystem::path(base_eval) / "summary.json")["config"];
  auto mem_cfg = read_json(std::filesystem::path(mem_eval) / "summary.json")["config"];
  EXPECT_EQ(base_cfg["mode"], "baseline");
  EXPECT_EQ(mem_cfg["mode"], "cd-memory");
  base_cfg.erase("mode");
  mem_cfg.erase("mode");
  EXPECT_EQ(base_cfg, mem_cfg);

  const auto episodes = slurp(std::filesystem::path(mem_eval) / "episodes.jsonl");
  EXPECT_NE(episodes.find("retrieval_order_0"), std::string::npos);
  EXPECT_EQ(read_episodes(std::filesystem::path(mem_eval) / "episodes.jsonl").size(), 50u);

  const auto inspect = cli({"memory-inspect", "--model", mem_dir});
  EXPECT_EQ(inspect.code, kExitOk);
  EXPECT_NE(inspect.out.find("records 50"), std::string::npos);
  EXPECT_NE(inspect.out.find("audit ok"), std::string::npos);

  for (const auto& f : {corpus, (dir / "pairs.jsonl").string(), target,
                        (std::filesystem::path(mem_eval) / "episodes.jsonl").string(),
                        (std::filesystem::path(mem_dir) / "memory.jsonl").string(),
                        (std::filesystem::path(mem_dir) / "solver.jsonl").string()}) {
    const auto v = cli({"validate", f});
    EXPECT_EQ(v.code, kExitOk) << f << ": " << v.err;
  }

  const auto build = cli({"build-memory", "--corpus", corpus, "--out", (dir / "built").string()});
  EXPECT_EQ(build.code, kExitOk) << build.err;
  EXPECT_NE(build.out.find("memory: 50 records"), std::string::npos);
  (void)task;
}

TEST(Cli, ValidateReportsFirstViolation) {
  testing::TempDir dir("validate");
  std::ofstream(dir / "bad.jsonl") << R"({"task_id":"t","context":"","question":"q","answer":"a"})" << "\n"
                                   << R"({"task_id":"t","context":"","question":"q"})" << "\n";
  const auto r = cli({"validate", "--kind", "qa", (dir / "bad.jsonl").string()});
  EXPECT_EQ(r.code, kExitPartial);
  EXPECT_NE(r.err.find("bad.jsonl:2"), std::string::npos);
}

TEST(Cli, ConfigFileAndFlagPrecedence) {
  testing::TempDir dir("toml");
  std::ofstream(dir / "run.toml") << "seed = 5\nk-pca = 7\norder = 2\n\n[bench-synthetic]\nseeds = 1\n";
  const auto out = (dir / "bench").string();
  const auto r = cli({"--config", (dir / "run.toml").string(), "--order", "4", "bench-synthetic", "--out", out});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto cfg = read_json(std::filesystem::path(out) / "manifest.json")["config"];
  EXPECT_EQ(cfg["seed"], 5);
  EXPECT_EQ(cfg["k_pca"], 7);
  EXPECT_EQ(cfg["order"], 4);
}

TEST(Cli, CredentialNeverEchoed) {
  testing::TempDir dir("secret");
  ::setenv("CD_ORACLE_API_KEY", "do-not-print-me", 1);
  std::ofstream(dir / "d.jsonl") << R"({"task_id":"t","context":"c","question":"q","answer":"a"})" << "\n";
  const auto r = cli({"generate-updates", "--dataset", (dir / "d.jsonl").string(), "--out",
                      (dir / "c.jsonl").string(), "--oracle", "http", "--oracle-url", "http://127.0.0.1:9/v1",
                      "--retries", "0"});
  ::unsetenv("CD_ORACLE_API_KEY");
  EXPECT_EQ(r.code, kExitPartial);
  EXPECT_EQ(r.out.find("do-not-print-me"), std::string::npos);
  EXPECT_EQ(r.err.find("do-not-print-me"), std::string::npos);
  EXPECT_EQ(slurp(dir / "manifest.json").find("do-not-print-me"), std::string::npos);
}

}  // namespace
}  // namespace cdistill
