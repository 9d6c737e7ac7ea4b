#include "cdistill/tokenizer.hpp"

#include <fstream>
#include <stdexcept>

namespace cdistill {

namespace {

bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
         c >= 0x80;
}

bool is_space_byte(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

char lower(unsigned char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
}

bool attaches_left(std::string_view token) {
  if (token == kEosToken) return true;
  return token.size() == 1 && std::string_view(".,:;!?)]}").find(token[0]) != std::string_view::npos;
}

bool attaches_right(std::string_view token) {
  return token.size() == 1 && std::string_view("([{").find(token[0]) != std::string_view::npos;
}

}  // namespace

TokenSequence concat(const TokenSequence& a, const TokenSequence& b) {
  TokenSequence out;
  out.tokens.reserve(a.tokens.size() + b.tokens.size());
  out.tokens.insert(out.tokens.end(), a.tokens.begin(), a.tokens.end());
  out.tokens.insert(out.tokens.end(), b.tokens.begin(), b.tokens.end());
  if (a.text.empty()) {
    out.text = b.text;
  } else if (b.text.empty()) {
    out.text = a.text;
  } else {
    out.text = a.text + " " + b.text;
  }
  return out;
}

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (text.substr(i, kEosToken.size()) == kEosToken) {
      out.emplace_back(kEosToken);
      i += kEosToken.size();
    } else if (is_space_byte(c)) {
      ++i;
    } else if (is_word_byte(c)) {
      std::string word;
      while (i < text.size() && is_word_byte(static_cast<unsigned char>(text[i])) &&
             text.substr(i, kEosToken.size()) != kEosToken) {
        word.push_back(lower(static_cast<unsigned char>(text[i])));
        ++i;
      }
      out.push_back(std::move(word));
    } else {
      out.emplace_back(1, text[i]);
      ++i;
    }
  }
  return out;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0 && !attaches_left(tokens[i]) && !attaches_right(tokens[i - 1])) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::string normalize_text(std::string_view text) {
  const auto tokens = split_tokens(text);
  return join_tokens(tokens);
}

Vocabulary::Vocabulary() { intern(kEosToken); }

TokenId Vocabulary::intern(std::string_view token) {
  if (auto it = ids_.find(std::string(token)); it != ids_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.emplace_back(token);
  ids_.emplace(tokens_.back(), id);
  return id;
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  if (auto it = ids_.find(std::string(token)); it != ids_.end()) return it->second;
  return std::nullopt;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " is not in the vocabulary (size " +
                            std::to_string(tokens_.size()) + ")");
  }
  return tokens_[id];
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary file " + path.string());
  for (std::size_t id = 0; id < tokens_.size(); ++id) out << tokens_[id] << '\t' << id << '\n';
  if (!out) throw std::runtime_error("failed writing vocabulary file " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open vocabulary file " + path.string());
  Vocabulary vocab;
  vocab.tokens_.clear();
  vocab.ids_.clear();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto where = path.string() + ":" + std::to_string(line_no);
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos || tab == 0) throw std::runtime_error(where + ": expected token<TAB>id");
    const auto token = line.substr(0, tab);
    std::size_t id = 0;
    try {
      std::size_t used = 0;
      id = std::stoul(line.substr(tab + 1), &used);
      if (used != line.size() - tab - 1) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw std::runtime_error(where + ": malformed id");
    }
    if (id != vocab.tokens_.size()) throw std::runtime_error(where + ": ids must be contiguous from 0");
    if (vocab.ids_.count(token) != 0) throw std::runtime_error(where + ": duplicate token '" + token + "'");
    vocab.tokens_.push_back(token);
    vocab.ids_.emplace(token, static_cast<TokenId>(id));
  }
  if (vocab.tokens_.empty() || vocab.tokens_[0] != kEosToken) {
    throw std::runtime_error(path.string() + ": id 0 must be the end-of-sequence token");
  }
  return vocab;
}

Tokenizer::Tokenizer(std::shared_ptr<Vocabulary> vocabulary) : vocabulary_(std::move(vocabulary)) {
  if (!vocabulary_) throw std::invalid_argument("Tokenizer requires a vocabulary");
}

TokenSequence Tokenizer::encode(std::string_view text) {
  TokenSequence seq;
  seq.text = std::string(text);
  for (const auto& token : split_tokens(text)) seq.tokens.push_back(vocabulary_->intern(token));
  return seq;
}

std::string Tokenizer::decode(std::span<const TokenId> tokens) const {
  std::vector<std::string> words;
  words.reserve(tokens.size());
  for (auto id : tokens) words.push_back(vocabulary_->token(id));
  return join_tokens(words);
}

TokenSequence Tokenizer::from_tokens(std::vector<TokenId> tokens) const {
  TokenSequence seq;
  seq.text = decode(tokens);
  seq.tokens = std::move(tokens);
  return seq;
}

}  // namespace cdistill
