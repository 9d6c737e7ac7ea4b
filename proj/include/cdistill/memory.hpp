#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cdistill/embedding.hpp"
#include "cdistill/tokenizer.hpp"

namespace cdistill {

// Stored updates never exceed this many tokens, ordinal prefix included.
inline constexpr std::size_t kMaxUpdateTokens = 200;

class DegenerateKeyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// k = sum of the token embeddings of context ⊕ update, scaled to unit L2 norm.
// Throws std::invalid_argument if both are empty, DegenerateKeyError if the
// sum is the zero vector.
Vector compute_key(const TokenSequence& context, const TokenSequence& update, const EmbeddingTable& table);

// Same as compute_key but substitutes e_0 for a zero sum (logged).
Vector compute_key_or_basis(const TokenSequence& context, const TokenSequence& update,
                            const EmbeddingTable& table);

// "t=<ordinal>. " prefixed onto stored updates.
std::string ordinal_prefix(std::uint64_t ordinal);

// Drops any leading "t=<digits>." stamps so an update is never prefixed twice.
std::string_view strip_ordinal_prefix(std::string_view text);

struct MemoryRecord {
  std::uint64_t ordinal = 0;
  TokenSequence context;
  TokenSequence update;
  Vector key;
};

struct Neighbor {
  std::size_t record_id = 0;
  double score = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

struct MemoryAudit {
  bool ok = true;
  std::size_t records = 0;
  double max_norm_error = 0.0;       // max | ||key|| - 1 |
  double max_key_error = 0.0;        // max |stored - recomputed|
  double max_view_mismatch = 0.0;    // record key vs key-matrix row
  std::vector<std::string> violations;
};

// Episodic store with exact inner-product search over a dense key matrix.
// Reads are safe concurrently; insert and reencode need exclusive access.
class MemoryStore {
 public:
  MemoryStore(std::size_t dimension, std::uint64_t embedding_epoch);

  // Tokenizes, prefixes and truncates the update, computes its key and
  // appends it. Returns the record id (its index).
  std::size_t insert(std::uint64_t ordinal, const TokenSequence& context, std::string_view update_text,
                     Tokenizer& tokenizer, const EmbeddingTable& table);

  // Recomputes every key from the symbolic texts. Builds the new keys aside
  // and swaps them in, so a failure leaves the store untouched.
  void reencode(const EmbeddingTable& table);

  // Top-k by inner product, descending; ties go to the lower ordinal.
  std::vector<Neighbor> nearest(const Vector& query, std::size_t k) const;

  MemoryAudit audit(const EmbeddingTable& table, double tolerance = 1e-12) const;

  bool contains_ordinal(std::uint64_t ordinal) const;
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  std::size_t dimension() const noexcept { return dimension_; }
  std::uint64_t embedding_epoch() const noexcept { return embedding_epoch_; }
  const std::vector<MemoryRecord>& records() const noexcept { return records_; }
  const MemoryRecord& record(std::size_t id) const { return records_.at(id); }
  const Matrix& key_matrix() const noexcept { return keys_; }

  // One JSON object per line: {t, context_text, update_text}. Keys are not
  // persisted; load() derives them from the table it is given.
  void save(const std::filesystem::path& path) const;
  static MemoryStore load(const std::filesystem::path& path, Tokenizer& tokenizer, const EmbeddingTable& table);

 private:
  std::size_t dimension_;
  std::uint64_t embedding_epoch_;
  std::vector<MemoryRecord> records_;
  Matrix keys_;
};

}  // namespace cdistill
