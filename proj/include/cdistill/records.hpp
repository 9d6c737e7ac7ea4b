#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "cdistill/dataset.hpp"
#include "cdistill/distillation.hpp"
#include "cdistill/oracle.hpp"

namespace cdistill {

enum class UpdateRole { prior, posterior, meta };

std::string to_string(UpdateRole role);
UpdateRole update_role_from_string(const std::string& name);

// One teacher completion in the update corpus.
struct UpdateCorpusEntry {
  std::size_t datapoint = 0;  // index into the dataset it was generated from
  UpdateRole role = UpdateRole::posterior;
  std::string task_id;
  std::string context;
  std::string question;
  std::string answer;
  std::string update;
  std::string oracle_id;
  std::string timestamp;

  friend bool operator==(const UpdateCorpusEntry&, const UpdateCorpusEntry&) = default;
};

// {x, y_hat, y, u_prior, u_posterior, u_meta?, oracle_id, timestamp}
struct UpdatePairRecord {
  std::string x;
  std::string y_hat;
  std::string y;
  std::string u_prior;
  std::string u_posterior;
  std::optional<std::string> u_meta;
  std::string oracle_id;
  std::string timestamp;

  friend bool operator==(const UpdatePairRecord&, const UpdatePairRecord&) = default;
};

struct RetrievalTrace {
  std::string text;
  double score = 0.0;
  std::size_t order = 0;  // serialized as "retrieval_order_<order>"

  friend bool operator==(const RetrievalTrace&, const RetrievalTrace&) = default;
};

struct EpisodeLogRecord {
  std::size_t t = 0;
  std::string question;
  std::string generation;
  std::string label;
  std::string prediction;
  double score = 0.0;
  std::vector<RetrievalTrace> retrievals;

  friend bool operator==(const EpisodeLogRecord&, const EpisodeLogRecord&) = default;
};

std::string to_json_line(const UpdateCorpusEntry& e);
std::string to_json_line(const UpdatePairRecord& r);
std::string to_json_line(const EpisodeLogRecord& r);

UpdateCorpusEntry parse_corpus_entry(const std::string& line);
UpdatePairRecord parse_pair_record(const std::string& line);
EpisodeLogRecord parse_episode_record(const std::string& line);

// Line readers report failures as ParseError with file:line.
std::vector<UpdateCorpusEntry> read_corpus(const std::filesystem::path& path);
std::vector<UpdatePairRecord> read_pairs(const std::filesystem::path& path);
std::vector<EpisodeLogRecord> read_episodes(const std::filesystem::path& path);

template <typename Record>
void write_lines(const std::filesystem::path& path, std::span<const Record> records);

struct BatchOptions {
  TeacherOptions teacher;
  bool meta = false;           // also sample u_meta per pair
  std::size_t workers = 4;     // concurrent oracle calls
};

struct BatchResult {
  std::vector<UpdateCorpusEntry> corpus;  // prior then posterior (then meta) per datapoint
  std::vector<UpdatePairRecord> pairs;
  std::vector<std::string> failures;      // one message per skipped datapoint

  bool partial() const noexcept { return !failures.empty(); }
};

// One prior and one posterior completion per datapoint. Failed datapoints are
// logged and skipped. Output order follows the dataset regardless of workers.
BatchResult batch_generate_updates(std::span<const QADatapoint> dataset, Oracle& oracle,
                                   const BatchOptions& options = {},
                                   const std::function<std::string()>& clock = {});

}  // namespace cdistill
