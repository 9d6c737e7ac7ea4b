#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "cdistill/tokenizer.hpp"

namespace cdistill {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

class OutOfVocabularyError : public std::out_of_range {
 public:
  OutOfVocabularyError(TokenId id, std::size_t position, std::size_t vocabulary_size);

  TokenId id() const noexcept { return id_; }
  std::size_t position() const noexcept { return position_; }

 private:
  TokenId id_;
  std::size_t position_;
};

// Deterministic pseudorandom unit vectors keyed by (token id, seed, dimension).
class HashEmbedder {
 public:
  HashEmbedder(std::size_t dimension, std::uint64_t seed);

  Vector row(TokenId id) const;
  std::size_t dimension() const noexcept { return dimension_; }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::size_t dimension_;
  std::uint64_t seed_;
};

// Throws std::invalid_argument when dimension < 2.
HashEmbedder hash_embedder(std::size_t dimension, std::uint64_t seed);

// V x d lookup table stamped with the epoch that produced it. Immutable once
// built. An optional hash fallback supplies rows for ids >= V so that tokens
// first seen at evaluation time still embed.
class EmbeddingTable {
 public:
  EmbeddingTable(Matrix rows, std::uint64_t epoch, std::optional<HashEmbedder> fallback = std::nullopt);

  static EmbeddingTable from_hash(const HashEmbedder& embedder, std::size_t vocabulary_size);

  std::size_t dimension() const noexcept { return static_cast<std::size_t>(rows_.cols()); }
  std::size_t vocabulary_size() const noexcept { return static_cast<std::size_t>(rows_.rows()); }
  std::uint64_t epoch() const noexcept { return epoch_; }
  const Matrix& rows() const noexcept { return rows_; }
  const std::optional<HashEmbedder>& fallback() const noexcept { return fallback_; }

  bool contains(TokenId id) const noexcept { return id < rows_.rows() || fallback_.has_value(); }
  Vector row(TokenId id) const;  // throws OutOfVocabularyError (position 0)

  // Binary layout: "CDEM", u32 version, u32 V, u32 d, u64 epoch, then V*d
  // little-endian f64 row-major.
  void save(const std::filesystem::path& path) const;
  static EmbeddingTable load(const std::filesystem::path& path,
                             std::optional<HashEmbedder> fallback = std::nullopt);

 private:
  Matrix rows_;
  std::uint64_t epoch_;
  std::optional<HashEmbedder> fallback_;
};

inline constexpr std::uint32_t kEmbeddingFileVersion = 1;

// One row per token, in order. Throws OutOfVocabularyError naming id and position.
Matrix embed_sequence(const TokenSequence& seq, const EmbeddingTable& table);

// Re-learns rows from windowed co-occurrence counts hashed onto d features.
// Tokens absent from the corpus keep their old rows; the epoch advances by one.
EmbeddingTable cooccurrence_refresh(std::span<const TokenSequence> corpus, const EmbeddingTable& table,
                                    std::size_t window);

}  // namespace cdistill
