#include "cdistill/records.hpp"

#include <atomic>
#include <fstream>
#include <mutex>
#include <thread>

#include <spdlog/spdlog.h>

#include "json.hpp"

namespace cdistill {

namespace {

using nlohmann::json;

template <typename Record, typename Parse>
std::vector<Record> read_lines(const std::filesystem::path& path, Parse parse) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<Record> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(parse(line));
    } catch (const std::exception& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
  return out;
}

}  // namespace

std::string to_string(UpdateRole role) {
  switch (role) {
    case UpdateRole::prior: return "prior";
    case UpdateRole::posterior: return "posterior";
    case UpdateRole::meta: return "meta";
  }
  return "posterior";
}

UpdateRole update_role_from_string(const std::string& name) {
  if (name == "prior") return UpdateRole::prior;
  if (name == "posterior") return UpdateRole::posterior;
  if (name == "meta") return UpdateRole::meta;
  throw std::invalid_argument("unknown update role '" + name + "'");
}

std::string to_json_line(const UpdateCorpusEntry& e) {
  const json j = {{"datapoint", e.datapoint}, {"role", to_string(e.role)}, {"task_id", e.task_id},
                  {"context", e.context},     {"question", e.question},    {"answer", e.answer},
                  {"update", e.update},       {"oracle_id", e.oracle_id},  {"timestamp", e.timestamp}};
  return j.dump();
}

std::string to_json_line(const UpdatePairRecord& r) {
  json j = {{"x", r.x},
            {"y_hat", r.y_hat},
            {"y", r.y},
            {"u_prior", r.u_prior},
            {"u_posterior", r.u_posterior},
            {"oracle_id", r.oracle_id},
            {"timestamp", r.timestamp}};
  if (r.u_meta) j["u_meta"] = *r.u_meta;
  return j.dump();
}

std::string to_json_line(const EpisodeLogRecord& r) {
  json retrievals = json::array();
  for (const auto& tr : r.retrievals) {
    retrievals.push_back(json::array({tr.text, tr.score, "retrieval_order_" + std::to_string(tr.order)}));
  }
  const json j = {{"t", r.t},
                  {"question", r.question},
                  {"generation", r.generation},
                  {"label", r.label},
                  {"prediction", r.prediction},
                  {"score", r.score},
                  {"retrievals", retrievals}};
  return j.dump();
}

UpdateCorpusEntry parse_corpus_entry(const std::string& line) {
  const auto j = json::parse(line);
  UpdateCorpusEntry e;
  e.datapoint = j.at("datapoint").get<std::size_t>();
  e.role = update_role_from_string(j.at("role").get<std::string>());
  e.task_id = j.value("task_id", "");
  e.context = j.at("context").get<std::string>();
  e.question = j.at("question").get<std::string>();
  e.answer = j.at("answer").get<std::string>();
  e.update = j.at("update").get<std::string>();
  e.oracle_id = j.value("oracle_id", "");
  e.timestamp = j.value("timestamp", "");
  return e;
}

UpdatePairRecord parse_pair_record(const std::string& line) {
  const auto j = json::parse(line);
  UpdatePairRecord r;
  r.x = j.at("x").get<std::string>();
  r.y_hat = j.at("y_hat").get<std::string>();
  r.y = j.at("y").get<std::string>();
  r.u_prior = j.at("u_prior").get<std::string>();
  r.u_posterior = j.at("u_posterior").get<std::string>();
  if (j.contains("u_meta") && !j["u_meta"].is_null()) r.u_meta = j["u_meta"].get<std::string>();
  r.oracle_id = j.value("oracle_id", "");
  r.timestamp = j.value("timestamp", "");
  return r;
}

EpisodeLogRecord parse_episode_record(const std::string& line) {
  const auto j = json::parse(line);
  EpisodeLogRecord r;
  r.t = j.value("t", std::size_t{0});
  r.question = j.at("question").get<std::string>();
  r.generation = j.at("generation").get<std::string>();
  r.label = j.at("label").get<std::string>();
  r.prediction = j.value("prediction", "");
  r.score = j.value("score", 0.0);
  for (const auto& item : j.at("retrievals")) {
    if (!item.is_array() || item.size() != 3) throw std::invalid_argument("retrieval entry must be [text, score, tag]");
    RetrievalTrace tr;
    tr.text = item[0].get<std::string>();
    tr.score = item[1].get<double>();
    const auto tag = item[2].get<std::string>();
    static constexpr std::string_view kPrefix = "retrieval_order_";
    if (tag.rfind(kPrefix, 0) != 0) throw std::invalid_argument("bad retrieval tag '" + tag + "'");
    tr.order = std::stoul(tag.substr(kPrefix.size()));
    r.retrievals.push_back(std::move(tr));
  }
  return r;
}

std::vector<UpdateCorpusEntry> read_corpus(const std::filesystem::path& path) {
  return read_lines<UpdateCorpusEntry>(path, parse_corpus_entry);
}

std::vector<UpdatePairRecord> read_pairs(const std::filesystem::path& path) {
  return read_lines<UpdatePairRecord>(path, parse_pair_record);
}

std::vector<EpisodeLogRecord> read_episodes(const std::filesystem::path& path) {
  return read_lines<EpisodeLogRecord>(path, parse_episode_record);
}

template <typename Record>
void write_lines(const std::filesystem::path& path, std::span<const Record> records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : records) out << to_json_line(r) << '\n';
  if (!out) throw std::runtime_error("error writing " + path.string());
}

template void write_lines<UpdateCorpusEntry>(const std::filesystem::path&, std::span<const UpdateCorpusEntry>);
template void write_lines<UpdatePairRecord>(const std::filesystem::path&, std::span<const UpdatePairRecord>);
template void write_lines<EpisodeLogRecord>(const std::filesystem::path&, std::span<const EpisodeLogRecord>);

BatchResult batch_generate_updates(std::span<const QADatapoint> dataset, Oracle& oracle, const BatchOptions& options,
                                   const std::function<std::string()>& clock) {
  struct Slot {
    bool ok = false;
    std::string prior, posterior, meta, error, timestamp;
  };
  std::vector<Slot> slots(dataset.size());
  const auto now = clock ? clock : utc_timestamp;

  const auto request = [&](std::string prompt) {
    return oracle.complete(
        {std::move(prompt), options.teacher.max_tokens, options.teacher.temperature, options.teacher.oracle_id});
  };

  std::atomic<std::size_t> next{0};
  std::mutex clock_mutex;
  const auto work = [&] {
    for (auto i = next++; i < dataset.size(); i = next++) {
      const auto& dp = dataset[i];
      auto& slot = slots[i];
      try {
        if (dp.question.empty()) throw std::invalid_argument("empty question");
        if (dp.answer.empty()) throw std::invalid_argument("empty answer");
        UpdatePair probe;
        probe.context.text = dp.context;
        probe.question.text = dp.question;
        probe.evidence.text = dp.answer;
        const auto prior_prompt = render_prior_prompt(dp.context, dp.question);
        if (const auto leaked = leaked_evidence_tokens(prior_prompt, probe); !leaked.empty()) {
          throw EvidenceLeakError("prior prompt contains evidence token '" + leaked.front() + "'");
        }
        slot.prior = request(prior_prompt);
        slot.posterior = request(render_posterior_prompt(dp.context, dp.question, dp.answer));
        if (options.meta) slot.meta = request(render_posterior_prompt(slot.prior, dp.question, slot.posterior));
        {
          std::lock_guard lock(clock_mutex);
          slot.timestamp = now();
        }
        slot.ok = true;
      } catch (const std::exception& e) {
        slot.error = e.what();
      }
    }
  };

  const auto workers = std::max<std::size_t>(1, std::min(options.workers, dataset.size()));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }

  BatchResult result;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& dp = dataset[i];
    const auto& slot = slots[i];
    if (!slot.ok) {
      const auto message = "datapoint " + std::to_string(i) + ": " + slot.error;
      spdlog::warn("skipping {}", message);
      result.failures.push_back(message);
      continue;
    }
    const auto entry = [&](UpdateRole role, const std::string& text) {
      return UpdateCorpusEntry{i,           role,      dp.task_id, dp.context, dp.question, dp.answer, text,
                               options.teacher.oracle_id, slot.timestamp};
    };
    result.corpus.push_back(entry(UpdateRole::prior, slot.prior));
    result.corpus.push_back(entry(UpdateRole::posterior, slot.posterior));
    if (options.meta) result.corpus.push_back(entry(UpdateRole::meta, slot.meta));

    UpdatePairRecord pair;
    pair.x = render_task_prompt(dp.context, dp.question);
    pair.y = dp.answer;
    pair.u_prior = slot.prior;
    pair.u_posterior = slot.posterior;
    if (options.meta) pair.u_meta = slot.meta;
    pair.oracle_id = options.teacher.oracle_id;
    pair.timestamp = slot.timestamp;
    result.pairs.push_back(std::move(pair));
  }
  return result;
}

}  // namespace cdistill
