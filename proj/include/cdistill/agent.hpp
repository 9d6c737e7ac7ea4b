#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdistill/chain.hpp"
#include "cdistill/dataset.hpp"
#include "cdistill/embedding.hpp"
#include "cdistill/memory.hpp"
#include "cdistill/ngram_solver.hpp"
#include "cdistill/records.hpp"
#include "cdistill/verifier.hpp"

namespace cdistill {

enum class Mode { baseline, cd, cd_memory };

std::string to_string(Mode mode);  // "baseline", "cd", "cd-memory"
Mode mode_from_string(const std::string& name);

// Which teacher completions count as updates.
enum class UpdateSource { posterior, prior, both };

std::string to_string(UpdateSource source);
UpdateSource update_source_from_string(const std::string& name);

struct AgentConfig {
  Mode mode = Mode::baseline;
  std::uint64_t seed = 0;
  std::size_t dimension = 64;

  std::size_t max_epochs = 50;
  std::size_t patience = 3;
  double min_delta = 1e-4;
  double validation_fraction = 0.1;

  RetrievalOptions retrieval;
  NgramOptions solver;
  std::size_t tail_tokens = kTailTokens;
  std::size_t max_generation_tokens = 32;

  bool refresh_embeddings = true;
  std::size_t refresh_window = 2;

  UpdateSource update_source = UpdateSource::posterior;
  // Drop corpus updates whose extracted answer scores below this against the label.
  std::optional<double> update_filter_threshold;

  std::string scorer = "exact-match";
  std::size_t eval_limit = 200;
  std::size_t workers = 1;
  bool position_probe = true;
};

// Everything a trained agent consists of. The tokenizer, table, store and
// solver share one vocabulary.
struct AgentState {
  std::shared_ptr<Vocabulary> vocabulary;
  Tokenizer tokenizer;
  EmbeddingTable table;
  MemoryStore store;
  NgramSolver solver;

  static AgentState fresh(const AgentConfig& config);

  // vocab.tsv, embeddings.cdem, memory.jsonl, solver.jsonl
  void save(const std::filesystem::path& dir) const;
  static AgentState load(const std::filesystem::path& dir, const AgentConfig& config);
};

struct Proposal {
  std::size_t index = 0;
  const QADatapoint* datapoint = nullptr;
  TokenSequence x;  // rendered task prompt
  TokenSequence y;
};

// Yields the dataset in its fixed linear order, then nullopt at the end of
// the epoch.
class ProposalIterator {
 public:
  ProposalIterator(std::span<const QADatapoint> data, Tokenizer& tokenizer) : data_(data), tokenizer_(&tokenizer) {}

  std::optional<Proposal> next();
  void reset() noexcept { cursor_ = 0; }
  std::size_t cursor() const noexcept { return cursor_; }

 private:
  std::span<const QADatapoint> data_;
  Tokenizer* tokenizer_;
  std::size_t cursor_ = 0;
};

// Single proposal at a cursor; nullopt once the cursor is past the end.
std::optional<Proposal> propose(std::span<const QADatapoint> data, std::size_t cursor, Tokenizer& tokenizer);

// Stops once the best score has not improved by min_delta for `patience`
// consecutive epochs, or at max_epochs.
class PlateauDetector {
 public:
  PlateauDetector(std::size_t patience, double min_delta, std::size_t max_epochs)
      : patience_(patience), min_delta_(min_delta), max_epochs_(max_epochs) {}

  // Feed one epoch's validation score; true means stop now.
  bool update(double score);

  std::optional<double> best() const noexcept { return best_; }
  std::size_t epochs() const noexcept { return epochs_; }
  std::size_t stale() const noexcept { return stale_; }
  bool plateaued() const noexcept { return stale_ >= patience_; }

 private:
  std::size_t patience_;
  double min_delta_;
  std::size_t max_epochs_;
  std::optional<double> best_;
  std::size_t epochs_ = 0;
  std::size_t stale_ = 0;
};

struct EpisodeOutcome {
  std::size_t t = 0;
  TokenSequence x;
  TokenSequence y;
  SelectionInferenceChain chain;
  TokenSequence y_hat;
  double v_hat = 0.0;
  TokenSequence u;  // self-training update
  TokenSequence m;  // memory write (empty unless cd-memory)
  TokenSequence a;  // environment action
  TokenSequence target;
  std::vector<double> weights;
  double loss = 0.0;
  std::optional<std::size_t> update_ordinal;
};

// Training target and per-token weights for one episode. An empty update
// yields y ⊕ </s> with unit weights, which is plain cross-entropy training.
struct TrainingTarget {
  TokenSequence target;
  std::vector<double> weights;
};
TrainingTarget episode_target(Tokenizer& tokenizer, Mode mode, const TokenSequence& u, const TokenSequence& y,
                              std::size_t tail_tokens = kTailTokens);

// Supplies u_t for an episode: corpus entries for the same datapoint first,
// then a live teacher call, then any corpus entry.
class UpdateProvider {
 public:
  UpdateProvider(std::vector<UpdateCorpusEntry> corpus, UpdateSource source, Oracle* teacher,
                 TeacherOptions teacher_options = {});

  struct Choice {
    std::size_t ordinal;  // index into corpus()
    const UpdateCorpusEntry* entry;
  };
  Choice sample(const QADatapoint& dp, std::uint64_t seed);

  const std::vector<UpdateCorpusEntry>& corpus() const noexcept { return corpus_; }
  std::size_t teacher_calls() const noexcept { return teacher_calls_; }
  // Corpus indices usable as updates under the configured source.
  const std::vector<std::size_t>& usable() const noexcept { return usable_; }

 private:
  std::vector<UpdateCorpusEntry> corpus_;
  UpdateSource source_;
  Oracle* teacher_;
  TeacherOptions teacher_options_;
  std::vector<std::size_t> usable_;
  std::map<std::string, std::vector<std::size_t>> by_datapoint_;
  std::size_t teacher_calls_ = 0;
};

// Removes entries whose extracted answer scores below threshold against the
// datapoint label.
std::vector<UpdateCorpusEntry> filter_updates(std::span<const UpdateCorpusEntry> corpus, Scorer& scorer,
                                              double threshold);

// Memory context for a corpus entry: its tokenized task prompt.
TokenSequence corpus_context(Tokenizer& tokenizer, const UpdateCorpusEntry& entry);

// Indexes every usable corpus update into the store; existing ordinals are
// skipped. Returns the number inserted.
std::size_t index_corpus(AgentState& state, const UpdateProvider& provider);

// (u_t, m_t, a_t) for an episode whose u has been sampled. Inserts m_t into
// the store in cd-memory mode.
struct UpdateTriple {
  TokenSequence u;
  TokenSequence m;
  TokenSequence a;
};
UpdateTriple update_policy(AgentState& state, Mode mode, const Proposal& proposal,
                           const std::optional<UpdateProvider::Choice>& choice, const TokenSequence& y_hat);

// One training episode: retrieval (cd-memory), greedy prediction and its
// verification, target construction, weighted loss and the solver update.
// v_hat uses exact match when scorer is null.
EpisodeOutcome train_episode(AgentState& state, const AgentConfig& config, const Proposal& proposal,
                             UpdateProvider* provider, std::size_t epoch, Scorer* scorer = nullptr);

struct EpochStats {
  std::size_t epoch = 0;
  double mean_train_loss = 0.0;
  double validation_score = 0.0;
  std::size_t memory_size = 0;
  std::uint64_t memory_epoch = 0;
};

struct TrainingResult {
  AgentState state;
  std::vector<EpochStats> epochs;
  std::string stop_reason;  // "plateau" or "max-epochs"
  std::size_t teacher_calls = 0;
  std::size_t train_items = 0;
  std::size_t validation_items = 0;
};

// Deterministic train/validation split by seeded shuffle.
std::pair<std::vector<QADatapoint>, std::vector<QADatapoint>> split_validation(std::span<const QADatapoint> data,
                                                                               double fraction,
                                                                               std::uint64_t seed);

// Validation and update filtering use `scorer`, or one built from
// config.scorer when null.
TrainingResult run_source_training(const AgentConfig& config, std::span<const QADatapoint> source,
                                   std::vector<UpdateCorpusEntry> corpus, Oracle* teacher = nullptr,
                                   Scorer* scorer = nullptr);

struct EvalReport {
  std::vector<EpisodeLogRecord> episodes;
  double mean_score = 0.0;
  std::size_t count = 0;
  // Fraction of probed examples whose answer changed when the retrieved
  // passages were injected in reverse order.
  double position_churn = 0.0;
  std::size_t churn_probed = 0;
  // Plug-in MI (bits) between retrieved-update clusters and score buckets.
  double update_score_mi = 0.0;
};

// Greedy zero-shot evaluation. The solver is never modified; the vocabulary
// may grow to cover unseen target words.
EvalReport run_target_eval(const AgentConfig& config, AgentState& state, std::span<const QADatapoint> target,
                           Scorer& scorer);

}  // namespace cdistill
