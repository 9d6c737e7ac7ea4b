#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cdistill {

using TokenId = std::uint32_t;

// Id 0 is reserved for the end-of-sequence marker in every vocabulary.
inline constexpr TokenId kEosId = 0;
inline constexpr std::string_view kEosToken = "</s>";

struct TokenSequence {
  std::vector<TokenId> tokens;
  std::string text;

  std::size_t size() const noexcept { return tokens.size(); }
  bool empty() const noexcept { return tokens.empty(); }

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

// Concatenation: tokens are appended, surface texts joined by one space.
TokenSequence concat(const TokenSequence& a, const TokenSequence& b);

// Splits text into lowercase word runs and single punctuation marks. "</s>"
// is kept whole wherever it occurs.
std::vector<std::string> split_tokens(std::string_view text);

// Joins tokens with single spaces, attaching closing punctuation and the
// end marker to the preceding token. split_tokens(join_tokens(t)) == t.
std::string join_tokens(std::span<const std::string> tokens);

// The documented whitespace rule: text as it reads back after a round trip.
std::string normalize_text(std::string_view text);

class Vocabulary {
 public:
  Vocabulary();

  TokenId intern(std::string_view token);
  std::optional<TokenId> find(std::string_view token) const;
  const std::string& token(TokenId id) const;
  std::size_t size() const noexcept { return tokens_.size(); }

  // Line-oriented "token<TAB>id" file.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

// Grows the shared vocabulary on first sight of a token.
class Tokenizer {
 public:
  explicit Tokenizer(std::shared_ptr<Vocabulary> vocabulary = std::make_shared<Vocabulary>());

  TokenSequence encode(std::string_view text);
  std::string decode(std::span<const TokenId> tokens) const;
  TokenSequence from_tokens(std::vector<TokenId> tokens) const;

  Vocabulary& vocabulary() noexcept { return *vocabulary_; }
  const Vocabulary& vocabulary() const noexcept { return *vocabulary_; }
  const std::shared_ptr<Vocabulary>& shared_vocabulary() const noexcept { return vocabulary_; }

 private:
  std::shared_ptr<Vocabulary> vocabulary_;
};

}  // namespace cdistill
