#include "cdistill/memory.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include <spdlog/spdlog.h>

namespace cdistill {

namespace {

Vector summed_embedding(const TokenSequence& context, const TokenSequence& update, const EmbeddingTable& table) {
  Vector sum = Vector::Zero(static_cast<Eigen::Index>(table.dimension()));
  std::size_t position = 0;
  for (const auto* seq : {&context, &update}) {
    for (auto id : seq->tokens) {
      if (!table.contains(id)) throw OutOfVocabularyError(id, position, table.vocabulary_size());
      sum += table.row(id);
      ++position;
    }
  }
  return sum;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

Vector compute_key(const TokenSequence& context, const TokenSequence& update, const EmbeddingTable& table) {
  if (context.empty() && update.empty()) {
    throw std::invalid_argument("compute_key: context and update are both empty");
  }
  Vector sum = summed_embedding(context, update, table);
  const double norm = sum.norm();
  if (!(norm > 0.0)) throw DegenerateKeyError("compute_key: embeddings sum to the zero vector");
  return sum / norm;
}

Vector compute_key_or_basis(const TokenSequence& context, const TokenSequence& update,
                            const EmbeddingTable& table) {
  try {
    return compute_key(context, update, table);
  } catch (const DegenerateKeyError&) {
    spdlog::warn("degenerate memory key, substituting basis vector e_0");
    Vector e0 = Vector::Zero(static_cast<Eigen::Index>(table.dimension()));
    e0[0] = 1.0;
    return e0;
  }
}

std::string ordinal_prefix(std::uint64_t ordinal) { return "t=" + std::to_string(ordinal) + ". "; }

std::string_view strip_ordinal_prefix(std::string_view text) {
  for (;;) {
    auto rest = trim(text);
    if (rest.size() < 4 || rest.substr(0, 2) != "t=") return rest;
    std::size_t i = 2;
    while (i < rest.size() && std::isdigit(static_cast<unsigned char>(rest[i]))) ++i;
    if (i == 2 || i >= rest.size() || rest[i] != '.') return rest;
    text = rest.substr(i + 1);
  }
}

MemoryStore::MemoryStore(std::size_t dimension, std::uint64_t embedding_epoch)
    : dimension_(dimension), embedding_epoch_(embedding_epoch), keys_(0, static_cast<Eigen::Index>(dimension)) {
  if (dimension == 0) throw std::invalid_argument("memory dimension must be positive");
}

std::size_t MemoryStore::insert(std::uint64_t ordinal, const TokenSequence& context, std::string_view update_text,
                                Tokenizer& tokenizer, const EmbeddingTable& table) {
  if (table.dimension() != dimension_) throw std::invalid_argument("insert: table dimension does not match store");
  if (contains_ordinal(ordinal)) {
    throw std::invalid_argument("insert: ordinal t=" + std::to_string(ordinal) + " is already stored");
  }
  if (!records_.empty() && table.epoch() != embedding_epoch_) {
    throw std::invalid_argument("insert: table epoch " + std::to_string(table.epoch()) +
                                " differs from store epoch " + std::to_string(embedding_epoch_) +
                                "; reencode first");
  }
  const auto body = strip_ordinal_prefix(update_text);
  auto body_tokens = split_tokens(body);
  if (body_tokens.empty()) {
    throw std::invalid_argument("insert: update text for t=" + std::to_string(ordinal) +
                                " is empty; an update must carry at least one token");
  }

  const auto prefix = ordinal_prefix(ordinal);
  const auto prefix_len = split_tokens(prefix).size();
  std::string text;
  if (prefix_len + body_tokens.size() > kMaxUpdateTokens) {
    body_tokens.resize(kMaxUpdateTokens - prefix_len);
    text = prefix + join_tokens(body_tokens);
  } else {
    text = prefix + std::string(body);
  }

  MemoryRecord record;
  record.ordinal = ordinal;
  record.context = context;
  record.update = tokenizer.encode(text);
  record.key = compute_key_or_basis(record.context, record.update, table);

  const auto row = keys_.rows();
  keys_.conservativeResize(row + 1, Eigen::NoChange);
  keys_.row(row) = record.key.transpose();
  if (records_.empty()) embedding_epoch_ = table.epoch();
  records_.push_back(std::move(record));
  return records_.size() - 1;
}

void MemoryStore::reencode(const EmbeddingTable& table) {
  if (table.dimension() != dimension_) throw std::invalid_argument("reencode: table dimension does not match store");
  if (table.epoch() == embedding_epoch_) {
    spdlog::warn("reencode: table epoch {} equals the store epoch, nothing to do", table.epoch());
    return;
  }
  Matrix keys(static_cast<Eigen::Index>(records_.size()), static_cast<Eigen::Index>(dimension_));
  std::vector<Vector> per_record;
  per_record.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    per_record.push_back(compute_key_or_basis(records_[i].context, records_[i].update, table));
    keys.row(static_cast<Eigen::Index>(i)) = per_record.back().transpose();
  }
  keys_.swap(keys);
  for (std::size_t i = 0; i < records_.size(); ++i) records_[i].key = std::move(per_record[i]);
  embedding_epoch_ = table.epoch();
}

std::vector<Neighbor> MemoryStore::nearest(const Vector& query, std::size_t k) const {
  if (k == 0) throw std::invalid_argument("nearest: k must be >= 1");
  if (static_cast<std::size_t>(query.size()) != dimension_) {
    throw std::invalid_argument("nearest: query dimension does not match store");
  }
  if (!query.allFinite()) throw std::invalid_argument("nearest: query has non-finite entries");

  const auto n = records_.size();
  std::vector<Neighbor> scored(n);
  const double* q = query.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = keys_.data() + i * dimension_;
    double s = 0.0;
    for (std::size_t j = 0; j < dimension_; ++j) s += row[j] * q[j];
    scored[i] = {i, s};
  }
  const auto better = [this](const Neighbor& a, const Neighbor& b) {
    if (a.score != b.score) return a.score > b.score;
    return records_[a.record_id].ordinal < records_[b.record_id].ordinal;
  };
  const auto take = std::min(k, n);
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(), better);
  scored.resize(take);
  return scored;
}

MemoryAudit MemoryStore::audit(const EmbeddingTable& table, double tolerance) const {
  MemoryAudit report;
  report.records = records_.size();
  if (static_cast<std::size_t>(keys_.rows()) != records_.size()) {
    report.ok = false;
    report.violations.push_back("key matrix has " + std::to_string(keys_.rows()) + " rows for " +
                                std::to_string(records_.size()) + " records");
    return report;
  }
  if (table.epoch() != embedding_epoch_) {
    report.ok = false;
    report.violations.push_back("store keys were built at epoch " + std::to_string(embedding_epoch_) +
                                ", audit table is epoch " + std::to_string(table.epoch()));
  }
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& rec = records_[i];
    const auto fresh = compute_key_or_basis(rec.context, rec.update, table);
    const double norm_err = std::abs(rec.key.norm() - 1.0);
    const double key_err = (rec.key - fresh).cwiseAbs().maxCoeff();
    const double view_err = (keys_.row(static_cast<Eigen::Index>(i)).transpose() - rec.key).cwiseAbs().maxCoeff();
    report.max_norm_error = std::max(report.max_norm_error, norm_err);
    report.max_key_error = std::max(report.max_key_error, key_err);
    report.max_view_mismatch = std::max(report.max_view_mismatch, view_err);
    const auto tag = "record " + std::to_string(i) + " (t=" + std::to_string(rec.ordinal) + ")";
    if (norm_err > 1e-9) report.violations.push_back(tag + ": key norm off by " + std::to_string(norm_err));
    if (key_err > tolerance) report.violations.push_back(tag + ": stale key, error " + std::to_string(key_err));
    if (view_err != 0.0) report.violations.push_back(tag + ": key matrix row differs from record key");
    if (rec.update.size() > kMaxUpdateTokens) report.violations.push_back(tag + ": update exceeds token cap");
    const auto prefix = ordinal_prefix(rec.ordinal);
    if (rec.update.text.rfind(prefix, 0) != 0) {
      report.violations.push_back(tag + ": update lacks its ordinal prefix");
    } else if (strip_ordinal_prefix(rec.update.text).size() + prefix.size() != rec.update.text.size()) {
      report.violations.push_back(tag + ": ordinal prefix repeated");
    }
  }
  report.ok = report.violations.empty();
  return report;
}

bool MemoryStore::contains_ordinal(std::uint64_t ordinal) const {
  return std::any_of(records_.begin(), records_.end(), [&](const MemoryRecord& r) { return r.ordinal == ordinal; });
}

void MemoryStore::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write memory file " + path.string());
  for (const auto& rec : records_) {
    nlohmann::json line = {{"t", rec.ordinal}, {"context_text", rec.context.text}, {"update_text", rec.update.text}};
    out << line.dump() << '\n';
  }
  if (!out) throw std::runtime_error("failed writing memory file " + path.string());
}

MemoryStore MemoryStore::load(const std::filesystem::path& path, Tokenizer& tokenizer, const EmbeddingTable& table) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open memory file " + path.string());
  MemoryStore store(table.dimension(), table.epoch());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    try {
      const auto j = nlohmann::json::parse(line);
      const auto ordinal = j.at("t").get<std::uint64_t>();
      const auto context = tokenizer.encode(j.at("context_text").get<std::string>());
      store.insert(ordinal, context, j.at("update_text").get<std::string>(), tokenizer, table);
    } catch (const std::exception& e) {
      throw std::runtime_error(where + ": " + e.what());
    }
  }
  return store;
}

}  // namespace cdistill
