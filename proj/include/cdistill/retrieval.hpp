#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cdistill/embedding.hpp"
#include "cdistill/memory.hpp"
#include "cdistill/pca.hpp"
#include "cdistill/tokenizer.hpp"

namespace cdistill {

enum class RetrievalMode { train, eval };

std::string to_string(RetrievalMode mode);
RetrievalMode retrieval_mode_from_string(const std::string& name);

// Where a query came from: the key embedding or the i-th principal component.
struct QueryTag {
  enum class Kind { key, pca } kind = Kind::key;
  std::size_t index = 0;

  std::string label() const;  // "key" or "pca[i]"
  friend bool operator==(const QueryTag&, const QueryTag&) = default;
};

struct QuerySet {
  std::vector<Vector> queries;
  RetrievalMode mode = RetrievalMode::eval;
  std::vector<QueryTag> provenance;
};

struct RetrievalOptions {
  std::size_t k_q = 4;
  std::size_t k_pca = 6;
  bool sample_with_replacement = false;  // train mode only
  bool inject_context = false;           // passages carry context ⊕ update instead of the update alone
  PcaOptions pca;
};

// Candidates are key(x, empty) followed by the k_pca principal components of
// x's token embeddings. Eval takes the key plus components 0..k_q-2; train
// draws k_q candidates at random (seeded).
QuerySet select_queries(const TokenSequence& x, const EmbeddingTable& table, RetrievalMode mode,
                        std::size_t k_q, std::size_t k_pca, std::uint64_t rng_seed,
                        bool with_replacement = false, const PcaOptions& pca = {});

struct RetrievedUpdate {
  std::size_t record_id = 0;
  std::uint64_t ordinal = 0;
  double score = 0.0;
  std::size_t retrieval_order = 0;  // index of the query that produced it
  TokenSequence passage;
};

struct RetrievalBundle {
  std::vector<RetrievedUpdate> retrieved;  // de-duplicated, in query order
  TokenSequence assembled_prefix;          // r_0 ⊕ r_1 ⊕ ... ⊕ x
};

// One nearest neighbour per query; exact-text duplicates are dropped, first
// occurrence kept.
RetrievalBundle retrieve_and_assemble(const MemoryStore& store, const QuerySet& queries, const TokenSequence& x,
                                      bool inject_context = false);

}  // namespace cdistill
