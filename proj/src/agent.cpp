#include "cdistill/agent.hpp"

#include <algorithm>
#include <atomic>
#include <numeric>
#include <thread>

#include <spdlog/spdlog.h>

#include "cdistill/random.hpp"

namespace cdistill {

namespace {

constexpr std::uint64_t kEmbeddingStream = 0x656d62ULL;
constexpr std::uint64_t kUpdateStream = 0x757064ULL;
constexpr std::uint64_t kRetrievalStream = 0x726574ULL;
constexpr std::uint64_t kSplitStream = 0x73706cULL;

std::string datapoint_key(std::string_view context, std::string_view question) {
  std::string key(context);
  key.push_back('\x1f');
  key.append(question);
  return key;
}

bool role_allowed(UpdateSource source, UpdateRole role) {
  switch (source) {
    case UpdateSource::posterior: return role == UpdateRole::posterior;
    case UpdateSource::prior: return role == UpdateRole::prior;
    case UpdateSource::both: return true;
  }
  return false;
}

HashEmbedder embedder_for(const AgentConfig& config) {
  return hash_embedder(config.dimension, derive_seed({config.seed, kEmbeddingStream}));
}

// Tokenized update, cut to what memory and the solver input accept.
TokenSequence update_tokens(AgentState& state, const std::optional<UpdateProvider::Choice>& choice) {
  if (!choice) return {};
  auto u = state.tokenizer.encode(choice->entry->update);
  const auto limit = std::min(kMaxUpdateTokens, state.solver.input_limit());
  if (u.size() > limit) {
    u.tokens.resize(limit);
    u = state.tokenizer.from_tokens(std::move(u.tokens));
  }
  audit_self_io(state.solver, u);
  return u;
}

TokenSequence eos_sequence() { return TokenSequence{{kEosId}, std::string(kEosToken)}; }

}  // namespace

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::baseline: return "baseline";
    case Mode::cd: return "cd";
    case Mode::cd_memory: return "cd-memory";
  }
  return "baseline";
}

Mode mode_from_string(const std::string& name) {
  if (name == "baseline") return Mode::baseline;
  if (name == "cd") return Mode::cd;
  if (name == "cd-memory") return Mode::cd_memory;
  throw std::invalid_argument("unknown mode '" + name + "' (expected baseline, cd or cd-memory)");
}

std::string to_string(UpdateSource source) {
  switch (source) {
    case UpdateSource::posterior: return "posterior";
    case UpdateSource::prior: return "prior";
    case UpdateSource::both: return "both";
  }
  return "posterior";
}

UpdateSource update_source_from_string(const std::string& name) {
  if (name == "posterior") return UpdateSource::posterior;
  if (name == "prior") return UpdateSource::prior;
  if (name == "both") return UpdateSource::both;
  throw std::invalid_argument("unknown update source '" + name + "' (expected posterior, prior or both)");
}

AgentState AgentState::fresh(const AgentConfig& config) {
  auto vocabulary = std::make_shared<Vocabulary>();
  auto table = EmbeddingTable::from_hash(embedder_for(config), vocabulary->size());
  MemoryStore store(config.dimension, table.epoch());
  NgramSolver solver(vocabulary, config.solver);
  return AgentState{vocabulary, Tokenizer(vocabulary), std::move(table), std::move(store), std::move(solver)};
}

void AgentState::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  vocabulary->save(dir / "vocab.tsv");
  table.save(dir / "embeddings.cdem");
  store.save(dir / "memory.jsonl");
  solver.save(dir / "solver.jsonl");
}

AgentState AgentState::load(const std::filesystem::path& dir, const AgentConfig& config) {
  auto vocabulary = std::make_shared<Vocabulary>(Vocabulary::load(dir / "vocab.tsv"));
  Tokenizer tokenizer(vocabulary);
  auto table = EmbeddingTable::load(dir / "embeddings.cdem", embedder_for(config));
  auto store = MemoryStore::load(dir / "memory.jsonl", tokenizer, table);
  auto solver = NgramSolver::load(dir / "solver.jsonl", vocabulary);
  return AgentState{vocabulary, std::move(tokenizer), std::move(table), std::move(store), std::move(solver)};
}

std::optional<Proposal> ProposalIterator::next() {
  auto p = propose(data_, cursor_, *tokenizer_);
  if (p) ++cursor_;
  return p;
}

std::optional<Proposal> propose(std::span<const QADatapoint> data, std::size_t cursor, Tokenizer& tokenizer) {
  if (cursor >= data.size()) return std::nullopt;
  const auto& dp = data[cursor];
  return Proposal{cursor, &dp, tokenizer.encode(render_task_prompt(dp.context, dp.question)),
                  tokenizer.encode(dp.answer)};
}

bool PlateauDetector::update(double score) {
  ++epochs_;
  if (!best_ || score - *best_ >= min_delta_) {
    best_ = score;
    stale_ = 0;
  } else {
    ++stale_;
  }
  return stale_ >= patience_ || epochs_ >= max_epochs_;
}

TrainingTarget episode_target(Tokenizer& tokenizer, Mode mode, const TokenSequence& u, const TokenSequence& y,
                              std::size_t tail_tokens) {
  const auto y_eos = concat(y, eos_sequence());
  TrainingTarget out;
  if (mode == Mode::baseline || u.empty()) {
    out.target = y_eos;
    out.weights.assign(out.target.size(), 1.0);
    return out;
  }
  out.target = build_target(tokenizer, u, y_eos, tail_tokens).full_sequence;
  out.weights = segment_weights(out.target.size(), tail_tokens);
  return out;
}

UpdateProvider::UpdateProvider(std::vector<UpdateCorpusEntry> corpus, UpdateSource source, Oracle* teacher,
                               TeacherOptions teacher_options)
    : corpus_(std::move(corpus)), source_(source), teacher_(teacher), teacher_options_(std::move(teacher_options)) {
  for (std::size_t i = 0; i < corpus_.size(); ++i) {
    if (!role_allowed(source_, corpus_[i].role)) continue;
    usable_.push_back(i);
    by_datapoint_[datapoint_key(corpus_[i].context, corpus_[i].question)].push_back(i);
  }
}

UpdateProvider::Choice UpdateProvider::sample(const QADatapoint& dp, std::uint64_t seed) {
  Rng rng(seed);
  const auto key = datapoint_key(dp.context, dp.question);
  if (auto it = by_datapoint_.find(key); it != by_datapoint_.end() && !it->second.empty()) {
    const auto idx = it->second[uniform_index(rng, it->second.size())];
    return {idx, &corpus_[idx]};
  }
  if (teacher_ != nullptr) {
    const bool prior = source_ == UpdateSource::prior;
    const auto prompt =
        prior ? render_prior_prompt(dp.context, dp.question) : render_posterior_prompt(dp.context, dp.question, dp.answer);
    ++teacher_calls_;
    auto text = teacher_->complete(
        {prompt, teacher_options_.max_tokens, teacher_options_.temperature, teacher_options_.oracle_id});
    corpus_.push_back({0, prior ? UpdateRole::prior : UpdateRole::posterior, dp.task_id, dp.context, dp.question,
                       dp.answer, std::move(text), teacher_options_.oracle_id, ""});
    const auto idx = corpus_.size() - 1;
    usable_.push_back(idx);
    by_datapoint_[key].push_back(idx);
    return {idx, &corpus_[idx]};
  }
  if (usable_.empty()) throw std::runtime_error("no teacher updates available for '" + dp.question + "'");
  const auto idx = usable_[uniform_index(rng, usable_.size())];
  return {idx, &corpus_[idx]};
}

std::vector<UpdateCorpusEntry> filter_updates(std::span<const UpdateCorpusEntry> corpus, Scorer& scorer,
                                              double threshold) {
  std::vector<UpdateCorpusEntry> kept;
  for (const auto& e : corpus) {
    const auto x = render_task_prompt(e.context, e.question);
    if (verify(x, nullptr, extract_answer(e.update), e.answer, scorer) >= threshold) kept.push_back(e);
  }
  return kept;
}

TokenSequence corpus_context(Tokenizer& tokenizer, const UpdateCorpusEntry& entry) {
  return tokenizer.encode(render_task_prompt(entry.context, entry.question));
}

std::size_t index_corpus(AgentState& state, const UpdateProvider& provider) {
  std::size_t inserted = 0;
  for (auto idx : provider.usable()) {
    if (state.store.contains_ordinal(idx)) continue;
    const auto& entry = provider.corpus()[idx];
    try {
      state.store.insert(idx, corpus_context(state.tokenizer, entry), entry.update, state.tokenizer, state.table);
      ++inserted;
    } catch (const std::invalid_argument& e) {
      spdlog::warn("corpus update {} not indexed: {}", idx, e.what());
    }
  }
  return inserted;
}

UpdateTriple update_policy(AgentState& state, Mode mode, const Proposal& proposal,
                           const std::optional<UpdateProvider::Choice>& choice, const TokenSequence& y_hat) {
  UpdateTriple out;
  out.a = y_hat;
  if (mode == Mode::baseline) return out;
  out.u = update_tokens(state, choice);
  if (mode == Mode::cd_memory && !out.u.empty()) {
    out.m = out.u;
    if (!state.store.contains_ordinal(choice->ordinal)) {
      state.store.insert(choice->ordinal, proposal.x, choice->entry->update, state.tokenizer, state.table);
    }
  }
  return out;
}

EpisodeOutcome train_episode(AgentState& state, const AgentConfig& config, const Proposal& proposal,
                             UpdateProvider* provider, std::size_t epoch, Scorer* scorer) {
  EpisodeOutcome out;
  out.t = proposal.index;
  out.x = proposal.x;
  out.y = proposal.y;

  std::optional<UpdateProvider::Choice> choice;
  if (config.mode != Mode::baseline && provider != nullptr) {
    choice = provider->sample(*proposal.datapoint, derive_seed({config.seed, kUpdateStream, epoch, proposal.index}));
    out.update_ordinal = choice->ordinal;
  }
  const auto u = config.mode == Mode::baseline ? TokenSequence{} : update_tokens(state, choice);

  SelectionInferenceChain::Hop hop;
  hop.retrieval.assembled_prefix = proposal.x;
  if (config.mode == Mode::cd_memory && !state.store.empty() && !proposal.x.empty()) {
    const auto queries = select_queries(proposal.x, state.table, RetrievalMode::train, config.retrieval.k_q,
                                        config.retrieval.k_pca,
                                        derive_seed({config.seed, kRetrievalStream, epoch, proposal.index}),
                                        config.retrieval.sample_with_replacement, config.retrieval.pca);
    hop.retrieval = retrieve_and_assemble(state.store, queries, proposal.x, config.retrieval.inject_context);
  }
  const auto input = solver_input(hop.retrieval);
  hop.inference = state.solver.generate(input, config.max_generation_tokens);
  out.y_hat = hop.inference;
  const auto prediction = extract_answer(out.y_hat.text);
  out.chain.hops.push_back(std::move(hop));
  out.v_hat = scorer ? verify(proposal.x.text, &out.chain, prediction, proposal.datapoint->answer, *scorer)
                     : exact_match(prediction, proposal.datapoint->answer);

  auto target = episode_target(state.tokenizer, config.mode, u, proposal.y, config.tail_tokens);
  const auto losses = state.solver.score(input, target.target);
  if (config.mode == Mode::baseline || u.empty()) {
    out.loss = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
  } else {
    out.loss = weighted_loss(losses, config.tail_tokens);
  }
  state.solver.train_step(input, target.target, target.weights);
  out.target = std::move(target.target);
  out.weights = std::move(target.weights);

  const auto triple = update_policy(state, config.mode, proposal, choice, state.tokenizer.encode(prediction));
  out.u = triple.u;
  out.m = triple.m;
  out.a = triple.a;
  return out;
}

std::pair<std::vector<QADatapoint>, std::vector<QADatapoint>> split_validation(std::span<const QADatapoint> data,
                                                                               double fraction,
                                                                               std::uint64_t seed) {
  const auto n = data.size();
  std::size_t n_val = n < 2 ? 0 : static_cast<std::size_t>(std::floor(static_cast<double>(n) * fraction + 0.5));
  n_val = std::min(n_val, n > 0 ? n - 1 : 0);

  Rng rng(derive_seed({seed, kSplitStream}));
  const auto perm = sample_without_replacement(rng, n, n);
  std::vector<bool> held(n, false);
  for (std::size_t i = 0; i < n_val; ++i) held[perm[i]] = true;

  std::pair<std::vector<QADatapoint>, std::vector<QADatapoint>> out;
  for (std::size_t i = 0; i < n; ++i) (held[i] ? out.second : out.first).push_back(data[i]);
  return out;
}

TrainingResult run_source_training(const AgentConfig& config, std::span<const QADatapoint> source,
                                   std::vector<UpdateCorpusEntry> corpus, Oracle* teacher, Scorer* scorer) {
  if (config.max_epochs == 0) throw std::invalid_argument("max_epochs must be >= 1");
  TrainingResult result{AgentState::fresh(config), {}, "max-epochs", 0, 0, 0};
  auto& state = result.state;
  auto [train, validation] = split_validation(source, config.validation_fraction, config.seed);
  result.train_items = train.size();
  result.validation_items = validation.size();
  if (train.empty()) throw std::invalid_argument("no source training data");

  std::unique_ptr<Scorer> owned_scorer;
  if (scorer == nullptr) {
    owned_scorer = make_scorer(config.scorer);
    scorer = owned_scorer.get();
  }
  if (config.update_filter_threshold && config.mode != Mode::baseline) {
    corpus = filter_updates(corpus, *scorer, *config.update_filter_threshold);
  }
  std::optional<UpdateProvider> provider;
  if (config.mode != Mode::baseline) {
    provider.emplace(std::move(corpus), config.update_source, teacher);
    if (config.mode == Mode::cd_memory) index_corpus(state, *provider);
  }

  AgentConfig eval_config = config;
  eval_config.position_probe = false;
  eval_config.eval_limit = std::numeric_limits<std::size_t>::max();

  PlateauDetector plateau(config.patience, config.min_delta, config.max_epochs);
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::vector<TokenSequence> seen;
    double loss_sum = 0.0;
    ProposalIterator proposals(train, state.tokenizer);
    while (auto proposal = proposals.next()) {
      const auto outcome = train_episode(state, config, *proposal, provider ? &*provider : nullptr, epoch, scorer);
      loss_sum += outcome.loss;
      seen.push_back(outcome.chain.hops.front().retrieval.assembled_prefix);
      seen.push_back(outcome.target);
    }

    if (config.refresh_embeddings) {
      state.table = cooccurrence_refresh(seen, state.table, config.refresh_window);
      state.store.reencode(state.table);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_train_loss = loss_sum / static_cast<double>(train.size());
    const auto& held_out = validation.empty() ? train : validation;
    stats.validation_score = run_target_eval(eval_config, state, held_out, *scorer).mean_score;
    stats.memory_size = state.store.size();
    stats.memory_epoch = state.store.embedding_epoch();
    result.epochs.push_back(stats);
    spdlog::debug("epoch {} loss {:.4f} validation {:.4f} memory {}", epoch, stats.mean_train_loss,
                  stats.validation_score, stats.memory_size);

    if (plateau.update(stats.validation_score)) {
      result.stop_reason = plateau.plateaued() ? "plateau" : "max-epochs";
      break;
    }
  }
  if (provider) result.teacher_calls = provider->teacher_calls();
  return result;
}

EvalReport run_target_eval(const AgentConfig& config, AgentState& state, std::span<const QADatapoint> target,
                           Scorer& scorer) {
  const auto n = std::min(config.eval_limit, target.size());
  std::vector<TokenSequence> inputs;
  inputs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    inputs.push_back(state.tokenizer.encode(render_task_prompt(target[i].context, target[i].question)));
  }

  const bool use_memory = config.mode == Mode::cd_memory;
  struct Slot {
    SelectionInferenceChain chain;
    std::optional<std::string> reversed_prediction;
  };
  std::vector<Slot> slots(n);
  const AgentState& frozen = state;
  const auto run = [&](std::size_t i) {
    ChainConfig cc;
    cc.retrieval = config.retrieval;
    cc.mode = RetrievalMode::eval;
    cc.seed = config.seed;
    cc.max_tokens = config.max_generation_tokens;
    const MemoryStore* store = use_memory ? &frozen.store : nullptr;
    slots[i].chain = selection_inference_chain(frozen.solver, inputs[i], store, frozen.table, cc);
    if (config.position_probe && use_memory && slots[i].chain.hops.front().retrieval.retrieved.size() > 1) {
      cc.reverse_passages = true;
      const auto reversed = selection_inference_chain(frozen.solver, inputs[i], store, frozen.table, cc);
      slots[i].reversed_prediction = extract_answer(reversed.prediction().text);
    }
  };

  const auto workers = std::max<std::size_t>(1, std::min(config.workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (auto i = next++; i < n; i = next++) run(i);
      });
    }
  }

  EvalReport report;
  report.count = n;
  std::size_t churned = 0;
  std::vector<std::pair<std::size_t, std::size_t>> mi_samples;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& chain = slots[i].chain;
    const auto& hop = chain.hops.front();
    EpisodeLogRecord rec;
    rec.t = i;
    rec.question = inputs[i].text;
    rec.generation = chain.prediction().text;
    rec.label = target[i].answer;
    rec.prediction = extract_answer(rec.generation);
    rec.score = verify(rec.question, &chain, rec.prediction, rec.label, scorer);
    TokenSequence evidence;
    for (const auto& r : hop.retrieval.retrieved) {
      rec.retrievals.push_back({r.passage.text, r.score, r.retrieval_order});
      evidence = concat(evidence, r.passage);
    }
    if (slots[i].reversed_prediction) {
      ++report.churn_probed;
      if (*slots[i].reversed_prediction != rec.prediction) ++churned;
    }
    mi_samples.emplace_back(token_bag_cluster(evidence), score_bucket(rec.score));
    report.mean_score += rec.score;
    report.episodes.push_back(std::move(rec));
  }
  if (n > 0) report.mean_score /= static_cast<double>(n);
  if (report.churn_probed > 0) {
    report.position_churn = static_cast<double>(churned) / static_cast<double>(report.churn_probed);
  }
  if (mi_samples.size() >= 2) report.update_score_mi = estimate_mutual_information(mi_samples);
  return report;
}

}  // namespace cdistill
