#include "cdistill/cli.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <spdlog/spdlog.h>

#include <Eigen/Core>

#include "CLI11.hpp"
#include "cdistill/agent.hpp"
#include "cdistill/digest.hpp"
#include "cdistill/synthetic_task.hpp"
#include "json.hpp"

namespace cdistill {

namespace {

using nlohmann::json;

// Raised for anything the operator has to fix before a rerun.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  // experiment
  std::string mode = "baseline";
  std::uint64_t seed = 0;
  std::size_t dimension = 64;
  std::size_t k_q = 4;
  std::size_t k_pca = 6;
  bool with_replacement = false;
  bool inject_context = false;
  std::size_t order = 3;
  double smoothing = 0.1;
  double learning_rate = 1.0;
  double fusion = 0.0;
  std::size_t input_limit = 512;
  std::size_t tail = kTailTokens;
  std::size_t max_epochs = 50;
  std::size_t patience = 3;
  double min_delta = 1e-4;
  double validation_fraction = 0.1;
  bool no_refresh = false;
  std::size_t window = 2;
  std::string update_source = "posterior";
  double filter_threshold = -1.0;
  std::string scorer = "exact-match";
  std::size_t eval_limit = 200;
  std::size_t workers = 1;
  std::size_t max_generation_tokens = 32;
  std::size_t per_task = 0;

  // oracle
  std::string oracle = "echo";
  std::string oracle_url;
  std::string oracle_model;
  std::string oracle_id = "default";
  std::string oracle_key_env = "CD_ORACLE_API_KEY";
  std::string oracle_cache;
  std::size_t retries = 3;
  std::size_t max_in_flight = 4;
  double temperature = 0.7;
  std::size_t max_tokens = 256;
  std::string task_dir;

  bool verbose = false;

  AgentConfig agent() const {
    AgentConfig c;
    c.mode = mode_from_string(mode);
    c.seed = seed;
    c.dimension = dimension;
    c.max_epochs = max_epochs;
    c.patience = patience;
    c.min_delta = min_delta;
    c.validation_fraction = validation_fraction;
    c.retrieval.k_q = k_q;
    c.retrieval.k_pca = k_pca;
    c.retrieval.sample_with_replacement = with_replacement;
    c.retrieval.inject_context = inject_context;
    c.solver.order = order;
    c.solver.smoothing = smoothing;
    c.solver.learning_rate = learning_rate;
    c.solver.fusion_weight = fusion;
    c.solver.input_limit = input_limit;
    c.tail_tokens = tail;
    c.max_generation_tokens = max_generation_tokens;
    c.refresh_embeddings = !no_refresh;
    c.refresh_window = window;
    c.update_source = update_source_from_string(update_source);
    if (filter_threshold >= 0.0) c.update_filter_threshold = filter_threshold;
    c.scorer = scorer;
    c.eval_limit = eval_limit;
    c.workers = workers;
    return c;
  }

  void check() const {
    try {
      (void)agent();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (dimension < 2) throw ConfigError("dim must be >= 2");
    if (k_q == 0 || k_q > k_pca + 1) throw ConfigError("k-q must lie in [1, k-pca + 1]");
    if (k_pca > dimension) throw ConfigError("k-pca must not exceed dim");
    if (order < 1) throw ConfigError("order must be >= 1");
    if (!(smoothing > 0.0)) throw ConfigError("alpha must be positive");
    if (fusion < 0.0 || fusion > 1.0) throw ConfigError("fusion must lie in [0, 1]");
    if (validation_fraction < 0.0 || validation_fraction >= 1.0) throw ConfigError("val-fraction must lie in [0, 1)");
    if (max_epochs == 0) throw ConfigError("epochs must be >= 1");
    if (window == 0) throw ConfigError("window must be >= 1");
    if (scorer != "exact-match" && scorer != "token-f1" && scorer != "wire") {
      throw ConfigError("scorer must be exact-match, token-f1 or wire");
    }
  }
};

json config_echo(const AgentConfig& c) {
  return {{"mode", to_string(c.mode)},
          {"seed", c.seed},
          {"dim", c.dimension},
          {"k_q", c.retrieval.k_q},
          {"k_pca", c.retrieval.k_pca},
          {"train_sampling", c.retrieval.sample_with_replacement ? "with-replacement" : "without-replacement"},
          {"inject_context", c.retrieval.inject_context},
          {"order", c.solver.order},
          {"alpha", c.solver.smoothing},
          {"learning_rate", c.solver.learning_rate},
          {"fusion", c.solver.fusion_weight},
          {"input_limit", c.solver.input_limit},
          {"update_cap", kMaxUpdateTokens},
          {"loss_weights", {kHeadWeight, kTailWeight}},
          {"tail_tokens", c.tail_tokens},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"min_delta", c.min_delta},
          {"val_fraction", c.validation_fraction},
          {"refresh_embeddings", c.refresh_embeddings},
          {"window", c.refresh_window},
          {"update_source", to_string(c.update_source)},
          {"filter_threshold", c.update_filter_threshold ? json(*c.update_filter_threshold) : json(nullptr)},
          {"scorer", c.scorer},
          {"eval_limit", c.eval_limit},
          {"max_generation_tokens", c.max_generation_tokens}};
}

AgentConfig config_from_echo(const json& j) {
  AgentConfig c;
  c.mode = mode_from_string(j.at("mode").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  c.dimension = j.at("dim").get<std::size_t>();
  c.retrieval.k_q = j.at("k_q").get<std::size_t>();
  c.retrieval.k_pca = j.at("k_pca").get<std::size_t>();
  c.retrieval.sample_with_replacement = j.at("train_sampling") == "with-replacement";
  c.retrieval.inject_context = j.at("inject_context").get<bool>();
  c.solver.order = j.at("order").get<std::size_t>();
  c.solver.smoothing = j.at("alpha").get<double>();
  c.solver.learning_rate = j.at("learning_rate").get<double>();
  c.solver.fusion_weight = j.at("fusion").get<double>();
  c.solver.input_limit = j.at("input_limit").get<std::size_t>();
  c.tail_tokens = j.at("tail_tokens").get<std::size_t>();
  c.max_epochs = j.at("max_epochs").get<std::size_t>();
  c.patience = j.at("patience").get<std::size_t>();
  c.min_delta = j.at("min_delta").get<double>();
  c.validation_fraction = j.at("val_fraction").get<double>();
  c.refresh_embeddings = j.at("refresh_embeddings").get<bool>();
  c.refresh_window = j.at("window").get<std::size_t>();
  c.update_source = update_source_from_string(j.at("update_source").get<std::string>());
  if (!j.at("filter_threshold").is_null()) c.update_filter_threshold = j.at("filter_threshold").get<double>();
  c.scorer = j.at("scorer").get<std::string>();
  c.eval_limit = j.at("eval_limit").get<std::size_t>();
  c.max_generation_tokens = j.at("max_generation_tokens").get<std::size_t>();
  return c;
}

void require_file(const std::string& path, const std::string& flag) {
  if (path.empty()) throw ConfigError(flag + " is required");
  if (!std::filesystem::exists(path)) throw ConfigError(flag + ": no such file: " + path);
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

void write_manifest(const std::filesystem::path& dir, const std::string& command, const json& config,
                    const std::vector<std::string>& inputs) {
  json manifest;
  manifest["command"] = command;
  manifest["config"] = config;
  manifest["versions"] = {{"cdistill", kLibraryVersion},
                          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                        "." + std::to_string(EIGEN_MINOR_VERSION)},
                          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                          {"cli11", CLI11_VERSION}};
  json digests = json::object();
  for (const auto& p : inputs) {
    if (!p.empty() && std::filesystem::is_regular_file(p)) digests[p] = file_digest(p);
  }
  manifest["inputs"] = digests;
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
}

std::vector<QADatapoint> load_data(const std::string& path, const std::string& flag, std::size_t per_task) {
  require_file(path, flag);
  auto data = load_dataset(path);
  if (per_task > 0) data = take_per_task(data, per_task);
  return data;
}

std::shared_ptr<Oracle> make_oracle(const RunConfig& rc) {
  if (rc.oracle == "echo") return std::make_shared<EchoOracle>();
  if (rc.oracle == "dictionary") {
    if (rc.task_dir.empty()) throw ConfigError("--oracle dictionary needs --task-dir");
    require_file((std::filesystem::path(rc.task_dir) / "mapping.tsv").string(), "--task-dir");
    return std::shared_ptr<Oracle>(make_dictionary_teacher(read_task(rc.task_dir)));
  }
  if (rc.oracle == "http") {
    if (rc.oracle_url.empty()) throw ConfigError("--oracle http needs --oracle-url");
    HttpEndpoint endpoint;
    endpoint.url = rc.oracle_url;
    endpoint.model = rc.oracle_model;
    endpoint.api_key_env = rc.oracle_key_env;
    std::shared_ptr<Transport> transport;
    try {
      transport = make_http_transport(endpoint);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    ClientOptions options;
    options.retries = rc.retries;
    options.max_in_flight = rc.max_in_flight;
    if (!rc.oracle_cache.empty()) options.cache_path = rc.oracle_cache;
    return std::make_shared<OracleClient>(std::move(transport), std::move(options));
  }
  throw ConfigError("--oracle must be echo, dictionary or http");
}

TeacherOptions teacher_options(const RunConfig& rc) {
  return {rc.max_tokens, rc.temperature, rc.oracle_id};
}

std::unique_ptr<Scorer> scorer_for(const RunConfig& rc, const std::string& name) {
  if (name != "wire") return make_scorer(name);
  if (rc.oracle != "http") throw ConfigError("--scorer wire needs --oracle http");
  return make_scorer(name, make_oracle(rc));
}

std::string fixed(double v, int digits = 3) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

int cmd_generate_updates(const RunConfig& rc, const std::string& dataset, const std::string& out_path,
                         const std::string& pairs_path, bool meta, std::ostream& out, std::ostream& err) {
  const auto data = load_data(dataset, "--dataset", rc.per_task);
  if (out_path.empty()) throw ConfigError("--out is required");
  auto oracle = make_oracle(rc);

  BatchOptions options;
  options.teacher = teacher_options(rc);
  options.meta = meta;
  options.workers = rc.max_in_flight;
  const auto result = batch_generate_updates(data, *oracle, options);

  write_lines<UpdateCorpusEntry>(out_path, result.corpus);
  if (!pairs_path.empty()) write_lines<UpdatePairRecord>(pairs_path, result.pairs);
  const auto dir = std::filesystem::path(out_path).parent_path();
  write_manifest(dir.empty() ? "." : dir, "generate-updates",
                 {{"oracle", rc.oracle}, {"oracle_id", rc.oracle_id}, {"temperature", rc.temperature},
                  {"max_tokens", rc.max_tokens}, {"meta", meta}, {"per_task", rc.per_task}},
                 {dataset});

  out << data.size() << " datapoints, " << result.corpus.size() << " updates written to " << out_path << '\n';
  if (result.partial()) {
    err << result.failures.size() << " datapoints failed; first: " << result.failures.front() << '\n';
    if (result.corpus.empty()) err << "no updates were produced; is the oracle reachable?\n";
    return kExitPartial;
  }
  return kExitOk;
}

int cmd_build_memory(const RunConfig& rc, const std::string& corpus_path, const std::string& out_dir,
                     std::ostream& out) {
  require_file(corpus_path, "--corpus");
  if (out_dir.empty()) throw ConfigError("--out is required");
  auto config = rc.agent();
  config.mode = Mode::cd_memory;
  auto state = AgentState::fresh(config);
  UpdateProvider provider(read_corpus(corpus_path), config.update_source, nullptr);
  const auto inserted = index_corpus(state, provider);
  state.save(out_dir);
  std::ofstream(std::filesystem::path(out_dir) / "config.json") << config_echo(config).dump(2) << '\n';
  write_manifest(out_dir, "build-memory", config_echo(config), {corpus_path});
  out << "memory: " << inserted << " records, d=" << state.store.dimension()
      << ", epoch=" << state.store.embedding_epoch() << '\n';
  return provider.usable().size() == inserted ? kExitOk : kExitPartial;
}

int cmd_train(const RunConfig& rc, const std::string& source_path, const std::string& corpus_path,
              const std::string& out_dir, std::ostream& out) {
  const auto config = rc.agent();
  const auto data = load_data(source_path, "--source", rc.per_task);
  if (out_dir.empty()) throw ConfigError("--out is required");
  std::vector<UpdateCorpusEntry> corpus;
  if (!corpus_path.empty()) {
    require_file(corpus_path, "--corpus");
    corpus = read_corpus(corpus_path);
  }
  std::shared_ptr<Oracle> teacher;
  if (config.mode != Mode::baseline && corpus.empty()) {
    if (rc.oracle == "echo") throw ConfigError("mode " + rc.mode + " needs --corpus or a teacher --oracle");
    teacher = make_oracle(rc);
  }
  auto scorer = scorer_for(rc, config.scorer);
  const auto result = run_source_training(config, data, std::move(corpus), teacher.get(), scorer.get());

  result.state.save(out_dir);
  const std::filesystem::path dir(out_dir);
  std::ofstream(dir / "config.json") << config_echo(config).dump(2) << '\n';
  {
    std::ofstream report(dir / "train_report.jsonl");
    for (const auto& e : result.epochs) {
      report << json{{"epoch", e.epoch},
                     {"mean_train_loss", e.mean_train_loss},
                     {"validation_score", e.validation_score},
                     {"memory_size", e.memory_size},
                     {"memory_epoch", e.memory_epoch}}
                    .dump()
             << '\n';
    }
  }
  write_manifest(dir, "train", config_echo(config), {source_path, corpus_path});

  out << "mode " << rc.mode << ": " << result.train_items << " train / " << result.validation_items
      << " validation items\n";
  out << "epoch  train-loss  validation  memory\n";
  for (const auto& e : result.epochs) {
    out << std::setw(5) << e.epoch << "  " << std::setw(10) << fixed(e.mean_train_loss, 4) << "  " << std::setw(10)
        << fixed(e.validation_score) << "  " << std::setw(6) << e.memory_size << '\n';
  }
  out << "stopped: " << result.stop_reason << '\n';
  return kExitOk;
}

int cmd_eval(const RunConfig& rc, const CLI::App& app, const std::string& model_dir, const std::string& target_path,
             const std::string& out_dir, std::ostream& out) {
  require_file((std::filesystem::path(model_dir) / "config.json").string(), "--model");
  const auto data = load_data(target_path, "--target", rc.per_task);
  if (out_dir.empty()) throw ConfigError("--out is required");

  json saved;
  std::ifstream(std::filesystem::path(model_dir) / "config.json") >> saved;
  auto config = config_from_echo(saved);
  if (app.count("--eval-limit") > 0) config.eval_limit = rc.eval_limit;
  if (app.count("--workers") > 0) config.workers = rc.workers;
  if (app.count("--scorer") > 0) config.scorer = rc.scorer;
  if (app.count("--max-gen-tokens") > 0) config.max_generation_tokens = rc.max_generation_tokens;
  config.workers = std::max<std::size_t>(1, config.workers);

  auto state = AgentState::load(model_dir, config);
  const auto digest_before = state.solver.state_digest();
  auto scorer = scorer_for(rc, config.scorer);
  const auto report = run_target_eval(config, state, data, *scorer);
  if (state.solver.state_digest() != digest_before) throw std::logic_error("evaluation modified the solver");

  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  write_lines<EpisodeLogRecord>(dir / "episodes.jsonl", report.episodes);
  const json summary = {{"config", config_echo(config)},
                        {"count", report.count},
                        {"mean_score", report.mean_score},
                        {"position_churn", report.position_churn},
                        {"churn_probed", report.churn_probed},
                        {"update_score_mi_bits", report.update_score_mi},
                        {"solver_digest", digest_before}};
  std::ofstream(dir / "summary.json") << summary.dump(2) << '\n';
  write_manifest(dir, "eval", config_echo(config), {target_path, (std::filesystem::path(model_dir) / "solver.jsonl").string()});

  out << "mode " << to_string(config.mode) << ": " << report.count << " examples, mean " << config.scorer << " "
      << fixed(report.mean_score) << '\n';
  if (report.churn_probed > 0) {
    out << "position churn " << fixed(report.position_churn) << " over " << report.churn_probed << " examples\n";
  }
  return kExitOk;
}

int cmd_bench(RunConfig rc, const CLI::App& app, std::size_t seeds, std::size_t symbols, std::size_t n_source,
              std::size_t n_target, const std::string& out_dir, std::ostream& out) {
  if (seeds == 0) throw ConfigError("--seeds must be >= 1");
  if (app.count("--order") == 0) rc.order = 4;
  if (app.count("--fusion") == 0) rc.fusion = 0.5;
  if (app.count("--epochs") == 0) rc.max_epochs = 8;
  rc.check();

  struct Row {
    std::uint64_t seed;
    Mode mode;
    double target_em;
    double source_val;
    std::size_t epochs;
    std::string stop;
    std::size_t memory;
    double churn;
    double mi;
  };
  std::vector<Row> rows;
  double chance = 0.0;
  const Mode modes[] = {Mode::baseline, Mode::cd, Mode::cd_memory};
  for (std::size_t s = 0; s < seeds; ++s) {
    const auto seed = rc.seed + s;
    SyntheticDictionaryTask task;
    try {
      task = generate_dictionary_task(symbols, n_source, n_target, seed);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (const auto audit = audit_task(task); !audit.ok) {
      throw std::runtime_error("synthetic task failed its audit: " + audit.violations.front());
    }
    chance = task.chance_accuracy();
    if (!out_dir.empty()) write_task(task, std::filesystem::path(out_dir) / ("task-" + std::to_string(seed)));

    auto teacher = make_dictionary_teacher(task);
    BatchOptions batch;
    batch.teacher = {rc.max_tokens, 0.0, "dictionary"};
    batch.workers = 1;
    const auto updates = batch_generate_updates(task.source_split, *teacher, batch, [] { return std::string(); });

    for (auto mode : modes) {
      auto config = rc.agent();
      config.mode = mode;
      config.seed = seed;
      config.scorer = "exact-match";
      ExactMatchScorer scorer;
      auto result = run_source_training(config, task.source_split, updates.corpus, nullptr, &scorer);
      const auto report = run_target_eval(config, result.state, task.target_split, scorer);
      rows.push_back({seed, mode, report.mean_score,
                      result.epochs.empty() ? 0.0 : result.epochs.back().validation_score, result.epochs.size(),
                      result.stop_reason, result.state.store.size(), report.position_churn, report.update_score_mi});
    }
  }

  std::ostringstream machine;
  for (const auto& r : rows) {
    machine << json{{"seed", r.seed},
                    {"mode", to_string(r.mode)},
                    {"target_exact_match", r.target_em},
                    {"source_validation", r.source_val},
                    {"epochs", r.epochs},
                    {"stop", r.stop},
                    {"memory_size", r.memory},
                    {"position_churn", r.churn},
                    {"update_score_mi_bits", r.mi}}
                   .dump()
            << '\n';
  }
  std::map<Mode, double> means;
  for (const auto& r : rows) means[r.mode] += r.target_em / static_cast<double>(seeds);
  for (auto mode : modes) {
    machine << json{{"summary", to_string(mode)}, {"mean_target_exact_match", means[mode]}, {"chance", chance},
                    {"seeds", seeds}}
                   .dump()
            << '\n';
  }

  if (!out_dir.empty()) {
    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "bench.jsonl") << machine.str();
    auto echo = config_echo(rc.agent());
    echo["seeds"] = seeds;
    echo["symbols"] = symbols;
    echo["source_items"] = n_source;
    echo["target_items"] = n_target;
    write_manifest(dir, "bench-synthetic", echo, {});
  }

  out << "mode        ";
  for (std::size_t s = 0; s < seeds; ++s) out << "  seed " << std::setw(3) << rc.seed + s;
  out << "    mean\n";
  for (auto mode : modes) {
    out << std::left << std::setw(12) << to_string(mode) << std::right;
    for (const auto& r : rows) {
      if (r.mode == mode) out << "  " << std::setw(8) << fixed(r.target_em);
    }
    out << "  " << std::setw(6) << fixed(means[mode]) << '\n';
  }
  out << "chance level " << fixed(chance) << '\n';
  return kExitOk;
}

int cmd_memory_inspect(const RunConfig& rc, const std::string& model_dir, std::ostream& out) {
  require_file((std::filesystem::path(model_dir) / "memory.jsonl").string(), "--model");
  AgentConfig config = rc.agent();
  const auto config_path = std::filesystem::path(model_dir) / "config.json";
  if (std::filesystem::exists(config_path)) {
    json saved;
    std::ifstream(config_path) >> saved;
    config = config_from_echo(saved);
  }
  const auto state = AgentState::load(model_dir, config);
  const auto audit = state.store.audit(state.table);
  out << "records " << state.store.size() << '\n'
      << "dimension " << state.store.dimension() << '\n'
      << "embedding epoch " << state.store.embedding_epoch() << '\n'
      << "max |norm - 1| " << audit.max_norm_error << '\n'
      << "max key error " << audit.max_key_error << '\n'
      << "audit " << (audit.ok ? "ok" : "FAILED") << '\n';
  for (const auto& v : audit.violations) out << "  " << v << '\n';
  return audit.ok ? kExitOk : kExitPartial;
}

std::string detect_kind(const std::filesystem::path& path) {
  const auto name = path.filename().string();
  if (name == "vocab.tsv") return "vocab";
  if (path.extension() == ".cdem") return "embeddings";
  if (path.extension() == ".txt") return "babi";
  if (path.extension() != ".jsonl") return "unknown";
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line) && line.empty()) {
  }
  if (line.empty()) return "unknown";
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception&) {
    return "unknown";
  }
  if (j.contains("format") && j["format"] == "cdistill-ngram") return "solver";
  if (j.contains("update_text")) return "memory";
  if (j.contains("u_posterior")) return "pairs";
  if (j.contains("retrievals")) return "episodes";
  if (j.contains("role") && j.contains("update")) return "corpus";
  if (j.contains("question") && j.contains("answer")) return "qa";
  return "unknown";
}

int cmd_validate(const std::string& kind_flag, const std::string& file, std::ostream& out, std::ostream& err) {
  require_file(file, "FILE");
  const std::filesystem::path path(file);
  const auto kind = kind_flag == "auto" ? detect_kind(path) : kind_flag;
  std::size_t records = 0;
  try {
    if (kind == "babi") {
      records = parse_babi(path).size();
    } else if (kind == "qa") {
      records = read_qa_jsonl(path).size();
    } else if (kind == "corpus") {
      records = read_corpus(path).size();
    } else if (kind == "pairs") {
      records = read_pairs(path).size();
    } else if (kind == "episodes") {
      records = read_episodes(path).size();
    } else if (kind == "memory") {
      auto vocab = std::make_shared<Vocabulary>();
      Tokenizer tokenizer(vocab);
      const auto table = EmbeddingTable::from_hash(hash_embedder(8, 0), 1);
      const auto store = MemoryStore::load(path, tokenizer, table);
      const auto audit = store.audit(table);
      if (!audit.ok) throw std::runtime_error(audit.violations.front());
      records = store.size();
    } else if (kind == "solver") {
      records = NgramSolver::load(path, std::make_shared<Vocabulary>()).counts().size();
    } else if (kind == "vocab") {
      records = Vocabulary::load(path).size();
    } else if (kind == "embeddings") {
      records = EmbeddingTable::load(path).vocabulary_size();
    } else {
      throw ConfigError("cannot tell what kind of file " + file + " is; pass --kind");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    err << "invalid " << kind << ": " << e.what() << '\n';
    return kExitPartial;
  }
  out << "ok: " << kind << ", " << records << " records\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Contrastive distillation engine: teacher updates, episodic memory, training and transfer evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML config file; command-line flags take precedence");

  RunConfig rc;
  app.add_option("--mode", rc.mode, "baseline | cd | cd-memory")->capture_default_str();
  app.add_option("--seed", rc.seed, "Base random seed")->capture_default_str();
  app.add_option("--dim", rc.dimension, "Embedding dimension d")->capture_default_str();
  app.add_option("--k-q", rc.k_q, "Queries per retrieval")->capture_default_str();
  app.add_option("--k-pca", rc.k_pca, "Principal components per input")->capture_default_str();
  app.add_flag("--with-replacement", rc.with_replacement, "Train-mode query sampling with replacement");
  app.add_flag("--inject-context", rc.inject_context, "Inject context ⊕ update instead of the update alone");
  app.add_option("--order", rc.order, "n-gram order of the built-in solver")->capture_default_str();
  app.add_option("--alpha", rc.smoothing, "Add-alpha smoothing")->capture_default_str();
  app.add_option("--learning-rate", rc.learning_rate, "Count increment per unit weight")->capture_default_str();
  app.add_option("--fusion", rc.fusion, "Evidence-copy mixing weight")->capture_default_str();
  app.add_option("--input-limit", rc.input_limit, "Solver input limit n")->capture_default_str();
  app.add_option("--tail", rc.tail, "Answer tail length in tokens")->capture_default_str();
  app.add_option("--epochs", rc.max_epochs, "Maximum training epochs")->capture_default_str();
  app.add_option("--patience", rc.patience, "Plateau patience in epochs")->capture_default_str();
  app.add_option("--min-delta", rc.min_delta, "Minimum validation improvement")->capture_default_str();
  app.add_option("--val-fraction", rc.validation_fraction, "Held-out share of the source data")
      ->capture_default_str();
  app.add_flag("--no-refresh", rc.no_refresh, "Keep embeddings fixed across epochs");
  app.add_option("--window", rc.window, "Co-occurrence window for embedding refresh")->capture_default_str();
  app.add_option("--update-source", rc.update_source, "posterior | prior | both")->capture_default_str();
  app.add_option("--filter-threshold", rc.filter_threshold, "Drop updates whose answer scores below this");
  app.add_option("--scorer", rc.scorer, "exact-match | token-f1 | wire")->capture_default_str();
  app.add_option("--eval-limit", rc.eval_limit, "Evaluate at most this many examples")->capture_default_str();
  app.add_option("--workers", rc.workers, "Parallel evaluation workers")->capture_default_str();
  app.add_option("--max-gen-tokens", rc.max_generation_tokens, "Greedy decoding budget")->capture_default_str();
  app.add_option("--per-task", rc.per_task, "Keep only the first N datapoints per task (0 keeps all)");
  app.add_option("--oracle", rc.oracle, "echo | dictionary | http")->capture_default_str();
  app.add_option("--oracle-url", rc.oracle_url, "Completion endpoint URL");
  app.add_option("--oracle-model", rc.oracle_model, "Model name sent to the endpoint");
  app.add_option("--oracle-id", rc.oracle_id, "Oracle id recorded with each completion")->capture_default_str();
  app.add_option("--oracle-key-env", rc.oracle_key_env, "Environment variable holding the credential")
      ->capture_default_str();
  app.add_option("--oracle-cache", rc.oracle_cache, "Completion cache file (JSON lines)");
  app.add_option("--retries", rc.retries, "Retries after a failed wire call")->capture_default_str();
  app.add_option("--max-in-flight", rc.max_in_flight, "Concurrent oracle requests")->capture_default_str();
  app.add_option("--temperature", rc.temperature, "Teacher sampling temperature")->capture_default_str();
  app.add_option("--max-tokens", rc.max_tokens, "Teacher completion budget")->capture_default_str();
  app.add_option("--task-dir", rc.task_dir, "Synthetic task directory for the dictionary teacher");
  app.add_flag("-v,--verbose", rc.verbose, "Log progress");

  std::string dataset, out_path, pairs_path, corpus_path, source_path, target_path, model_dir, kind = "auto", file;
  bool meta = false;
  std::size_t seeds = 5, symbols = 10, n_source = 50, n_target = 50;

  auto* gen = app.add_subcommand("generate-updates", "Sample prior and posterior teacher updates per datapoint");
  gen->add_option("--dataset", dataset, "bAbI text file or QA JSON lines");
  gen->add_option("--out", out_path, "Update corpus to write");
  gen->add_option("--pairs", pairs_path, "Also write update pairs here");
  gen->add_flag("--meta", meta, "Also sample a meta update per pair");

  auto* build = app.add_subcommand("build-memory", "Index an update corpus into a memory store");
  build->add_option("--corpus", corpus_path, "Update corpus");
  build->add_option("--out", out_path, "Model directory to write");

  auto* train = app.add_subcommand("train", "Train on the source task");
  train->add_option("--source", source_path, "Source dataset");
  train->add_option("--corpus", corpus_path, "Update corpus (cd modes)");
  train->add_option("--out", out_path, "Model directory to write");

  auto* eval = app.add_subcommand("eval", "Zero-shot evaluation on a target task");
  eval->add_option("--model", model_dir, "Trained model directory");
  eval->add_option("--target", target_path, "Target dataset");
  eval->add_option("--out", out_path, "Report directory");

  auto* bench = app.add_subcommand("bench-synthetic", "Compare baseline, cd and cd-memory on the dictionary task");
  bench->add_option("--seeds", seeds, "Number of seeds, starting at --seed")->capture_default_str();
  bench->add_option("--symbols", symbols, "Symbols in the hidden mapping")->capture_default_str();
  bench->add_option("--source-items", n_source, "Source items per seed")->capture_default_str();
  bench->add_option("--target-items", n_target, "Target items per seed")->capture_default_str();
  bench->add_option("--out", out_path, "Report directory");

  auto* inspect = app.add_subcommand("memory-inspect", "Print memory statistics and the key audit");
  inspect->add_option("--model", model_dir, "Model directory");

  auto* validate = app.add_subcommand("validate", "Check a data file and print the first violation");
  validate->add_option("--kind", kind, "auto | babi | qa | corpus | pairs | episodes | memory | solver | vocab | embeddings")
      ->capture_default_str();
  validate->add_option("file", file, "File to check")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  spdlog::set_level(rc.verbose ? spdlog::level::debug : spdlog::level::warn);

  try {
    rc.check();
    if (gen->parsed()) return cmd_generate_updates(rc, dataset, out_path, pairs_path, meta, out, err);
    if (build->parsed()) return cmd_build_memory(rc, corpus_path, out_path, out);
    if (train->parsed()) return cmd_train(rc, source_path, corpus_path, out_path, out);
    if (eval->parsed()) return cmd_eval(rc, app, model_dir, target_path, out_path, out);
    if (bench->parsed()) return cmd_bench(rc, app, seeds, symbols, n_source, n_target, out_path, out);
    if (inspect->parsed()) return cmd_memory_inspect(rc, model_dir, out);
    if (validate->parsed()) return cmd_validate(kind, file, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    err << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const TransportError& e) {
    err << "oracle unreachable: " << e.what() << '\n';
    return kExitPartial;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitPartial;
  }
  return kExitConfig;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("cdistill");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace cdistill
