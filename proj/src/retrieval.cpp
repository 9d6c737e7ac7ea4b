#include "cdistill/retrieval.hpp"

#include <stdexcept>
#include <unordered_set>

#include "cdistill/random.hpp"

namespace cdistill {

std::string to_string(RetrievalMode mode) { return mode == RetrievalMode::train ? "train" : "eval"; }

RetrievalMode retrieval_mode_from_string(const std::string& name) {
  if (name == "train") return RetrievalMode::train;
  if (name == "eval") return RetrievalMode::eval;
  throw std::invalid_argument("unknown retrieval mode '" + name + "' (expected train or eval)");
}

std::string QueryTag::label() const {
  return kind == Kind::key ? std::string("key") : "pca[" + std::to_string(index) + "]";
}

QuerySet select_queries(const TokenSequence& x, const EmbeddingTable& table, RetrievalMode mode, std::size_t k_q,
                        std::size_t k_pca, std::uint64_t rng_seed, bool with_replacement, const PcaOptions& pca) {
  if (x.empty()) throw std::invalid_argument("select_queries: empty task input, no key can be formed");
  if (k_q == 0) throw std::invalid_argument("select_queries: k_q must be >= 1");
  if (k_q > k_pca + 1) throw std::invalid_argument("select_queries: k_q must not exceed k_pca + 1");

  std::vector<Vector> candidates;
  std::vector<QueryTag> tags;
  candidates.reserve(k_pca + 1);
  candidates.push_back(compute_key_or_basis(x, TokenSequence{}, table));
  tags.push_back({QueryTag::Kind::key, 0});
  const Matrix components = pca_components(embed_sequence(x, table), k_pca, pca);
  for (std::size_t i = 0; i < k_pca; ++i) {
    candidates.push_back(components.row(static_cast<Eigen::Index>(i)).transpose());
    tags.push_back({QueryTag::Kind::pca, i});
  }

  QuerySet out;
  out.mode = mode;
  if (mode == RetrievalMode::eval) {
    for (std::size_t i = 0; i < k_q; ++i) {
      out.queries.push_back(candidates[i]);
      out.provenance.push_back(tags[i]);
    }
    return out;
  }

  Rng rng(rng_seed);
  std::vector<std::size_t> picks;
  if (with_replacement) {
    for (std::size_t i = 0; i < k_q; ++i) picks.push_back(uniform_index(rng, candidates.size()));
  } else {
    picks = sample_without_replacement(rng, candidates.size(), k_q);
  }
  for (auto p : picks) {
    out.queries.push_back(candidates[p]);
    out.provenance.push_back(tags[p]);
  }
  return out;
}

RetrievalBundle retrieve_and_assemble(const MemoryStore& store, const QuerySet& queries, const TokenSequence& x,
                                      bool inject_context) {
  RetrievalBundle bundle;
  std::unordered_set<std::string> seen;
  if (!store.empty()) {
    for (std::size_t qi = 0; qi < queries.queries.size(); ++qi) {
      const auto hits = store.nearest(queries.queries[qi], 1);
      if (hits.empty()) continue;
      const auto& rec = store.record(hits.front().record_id);
      if (!seen.insert(rec.update.text).second) continue;
      RetrievedUpdate r;
      r.record_id = hits.front().record_id;
      r.ordinal = rec.ordinal;
      r.score = hits.front().score;
      r.retrieval_order = qi;
      r.passage = inject_context ? concat(rec.context, rec.update) : rec.update;
      bundle.retrieved.push_back(std::move(r));
    }
  }
  for (const auto& r : bundle.retrieved) bundle.assembled_prefix = concat(bundle.assembled_prefix, r.passage);
  bundle.assembled_prefix = concat(bundle.assembled_prefix, x);
  return bundle;
}

}  // namespace cdistill
