#include "cdistill/embedding.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include <spdlog/spdlog.h>

#include "cdistill/random.hpp"

namespace cdistill {

namespace {

constexpr char kMagic[4] = {'C', 'D', 'E', 'M'};
constexpr std::uint64_t kFeatureSalt = 0x636f6f6363757273ULL;

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::filesystem::path& path) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw std::runtime_error(path.string() + ": truncated embedding file");
  }
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

double unit_interval(Rng& rng) {
  // (0, 1], never zero so the log below stays finite.
  return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
}

}  // namespace

OutOfVocabularyError::OutOfVocabularyError(TokenId id, std::size_t position, std::size_t vocabulary_size)
    : std::out_of_range("out-of-vocabulary token id " + std::to_string(id) + " at position " +
                        std::to_string(position) + " (vocabulary size " + std::to_string(vocabulary_size) +
                        ")"),
      id_(id),
      position_(position) {}

HashEmbedder::HashEmbedder(std::size_t dimension, std::uint64_t seed) : dimension_(dimension), seed_(seed) {
  if (dimension < 2) throw std::invalid_argument("hash embedder dimension must be >= 2");
}

Vector HashEmbedder::row(TokenId id) const {
  Rng rng(derive_seed({seed_, static_cast<std::uint64_t>(id), static_cast<std::uint64_t>(dimension_)}));
  Vector v(static_cast<Eigen::Index>(dimension_));
  for (Eigen::Index i = 0; i < v.size(); i += 2) {
    // Box-Muller; written out so rows do not depend on the library's normal_distribution.
    const double radius = std::sqrt(-2.0 * std::log(unit_interval(rng)));
    const double angle = 2.0 * M_PI * unit_interval(rng);
    v[i] = radius * std::cos(angle);
    if (i + 1 < v.size()) v[i + 1] = radius * std::sin(angle);
  }
  const double norm = v.norm();
  if (norm == 0.0) {
    v.setZero();
    v[0] = 1.0;
    return v;
  }
  return v / norm;
}

HashEmbedder hash_embedder(std::size_t dimension, std::uint64_t seed) { return HashEmbedder(dimension, seed); }

EmbeddingTable::EmbeddingTable(Matrix rows, std::uint64_t epoch, std::optional<HashEmbedder> fallback)
    : rows_(std::move(rows)), epoch_(epoch), fallback_(std::move(fallback)) {
  if (rows_.cols() < 1) throw std::invalid_argument("embedding table needs a positive dimension");
  if (fallback_ && fallback_->dimension() != dimension()) {
    throw std::invalid_argument("embedding fallback dimension does not match the table");
  }
  if (!rows_.allFinite()) throw std::invalid_argument("embedding table contains non-finite values");
}

EmbeddingTable EmbeddingTable::from_hash(const HashEmbedder& embedder, std::size_t vocabulary_size) {
  Matrix rows(static_cast<Eigen::Index>(vocabulary_size), static_cast<Eigen::Index>(embedder.dimension()));
  for (std::size_t t = 0; t < vocabulary_size; ++t) {
    rows.row(static_cast<Eigen::Index>(t)) = embedder.row(static_cast<TokenId>(t)).transpose();
  }
  return EmbeddingTable(std::move(rows), 0, embedder);
}

Vector EmbeddingTable::row(TokenId id) const {
  if (id < rows_.rows()) return rows_.row(id).transpose();
  if (fallback_) return fallback_->row(id);
  throw OutOfVocabularyError(id, 0, vocabulary_size());
}

void EmbeddingTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write embedding file " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_le<std::uint32_t>(out, kEmbeddingFileVersion);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(vocabulary_size()));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dimension()));
  write_le<std::uint64_t>(out, epoch_);
  for (Eigen::Index r = 0; r < rows_.rows(); ++r) {
    for (Eigen::Index c = 0; c < rows_.cols(); ++c) {
      write_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(rows_(r, c)));
    }
  }
  if (!out) throw std::runtime_error("failed writing embedding file " + path.string());
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path, std::optional<HashEmbedder> fallback) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open embedding file " + path.string());
  char magic[4];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error(path.string() + ": bad magic, expected CDEM");
  }
  const auto version = read_le<std::uint32_t>(in, path);
  if (version != kEmbeddingFileVersion) {
    throw std::runtime_error(path.string() + ": unsupported embedding file version " + std::to_string(version));
  }
  const auto vocab = read_le<std::uint32_t>(in, path);
  const auto dim = read_le<std::uint32_t>(in, path);
  const auto epoch = read_le<std::uint64_t>(in, path);
  if (dim == 0) throw std::runtime_error(path.string() + ": zero embedding dimension");
  Matrix rows(vocab, dim);
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    for (Eigen::Index c = 0; c < rows.cols(); ++c) rows(r, c) = std::bit_cast<double>(read_le<std::uint64_t>(in, path));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error(path.string() + ": trailing bytes");
  return EmbeddingTable(std::move(rows), epoch, std::move(fallback));
}

Matrix embed_sequence(const TokenSequence& seq, const EmbeddingTable& table) {
  Matrix out(static_cast<Eigen::Index>(seq.size()), static_cast<Eigen::Index>(table.dimension()));
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const TokenId id = seq.tokens[i];
    if (!table.contains(id)) throw OutOfVocabularyError(id, i, table.vocabulary_size());
    out.row(static_cast<Eigen::Index>(i)) = table.row(id).transpose();
  }
  return out;
}

EmbeddingTable cooccurrence_refresh(std::span<const TokenSequence> corpus, const EmbeddingTable& table,
                                    std::size_t window) {
  if (window < 1) throw std::invalid_argument("co-occurrence window must be >= 1");
  if (corpus.empty()) {
    spdlog::warn("cooccurrence_refresh: empty corpus, keeping rows of epoch {}", table.epoch());
    return EmbeddingTable(table.rows(), table.epoch() + 1, table.fallback());
  }

  const auto dim = static_cast<Eigen::Index>(table.dimension());
  std::size_t vocab = table.vocabulary_size();
  for (const auto& seq : corpus) {
    for (auto id : seq.tokens) vocab = std::max<std::size_t>(vocab, std::size_t{id} + 1);
  }

  std::map<TokenId, Vector> counts;
  for (const auto& seq : corpus) {
    const auto n = seq.tokens.size();
    for (std::size_t i = 0; i < n; ++i) {
      auto [it, inserted] = counts.try_emplace(seq.tokens[i]);
      if (inserted) it->second = Vector::Zero(dim);
      const std::size_t lo = i >= window ? i - window : 0;
      const std::size_t hi = std::min(n - 1, i + window);
      for (std::size_t j = lo; j <= hi; ++j) {
        if (j == i) continue;
        const auto feature = mix64(kFeatureSalt ^ seq.tokens[j]) % static_cast<std::uint64_t>(dim);
        it->second[static_cast<Eigen::Index>(feature)] += 1.0;
      }
    }
  }

  Matrix rows(static_cast<Eigen::Index>(vocab), dim);
  for (std::size_t t = 0; t < vocab; ++t) {
    const auto id = static_cast<TokenId>(t);
    auto it = counts.find(id);
    const double norm = it == counts.end() ? 0.0 : it->second.norm();
    if (norm > 0.0) {
      rows.row(static_cast<Eigen::Index>(t)) = (it->second / norm).transpose();
    } else if (table.contains(id)) {
      rows.row(static_cast<Eigen::Index>(t)) = table.row(id).transpose();
    } else {
      throw OutOfVocabularyError(id, 0, table.vocabulary_size());
    }
  }
  return EmbeddingTable(std::move(rows), table.epoch() + 1, table.fallback());
}

}  // namespace cdistill
