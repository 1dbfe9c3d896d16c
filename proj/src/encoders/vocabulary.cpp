#include "radsearch/encoders/vocabulary.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "radsearch/errors.hpp"

namespace radsearch {

Vocabulary::Vocabulary() {
  add(kPadToken);
  add(kUnkToken);
}

Vocabulary Vocabulary::build(std::span<const std::string> captions) {
  std::set<std::string> words;
  for (const auto& c : captions)
    for (auto& w : split_words(c)) words.insert(std::move(w));
  Vocabulary v;
  for (const auto& w : words) v.add(w);
  return v;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < 2 || tokens[kPad] != kPadToken || tokens[kUnk] != kUnkToken) {
    throw VocabularyError("token list must start with <pad>, <unk>");
  }
  Vocabulary v;
  for (std::size_t i = 2; i < tokens.size(); ++i) {
    if (v.contains(tokens[i])) throw VocabularyError("duplicate token '" + tokens[i] + "'");
    v.add(tokens[i]);
  }
  return v;
}

std::uint32_t Vocabulary::add(std::string_view token) {
  auto it = ids_.find(std::string(token));
  if (it != ids_.end()) return it->second;
  const auto id = static_cast<std::uint32_t>(tokens_.size());
  tokens_.emplace_back(token);
  ids_.emplace(tokens_.back(), id);
  return id;
}

std::uint32_t Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.count(std::string(token)) > 0; }

const std::string& Vocabulary::token(std::uint32_t id) const {
  if (id >= tokens_.size()) throw VocabularyError("token id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

std::vector<std::uint32_t> tokenize(std::string_view caption, const Vocabulary& vocab, std::size_t seq_len) {
  if (caption.size() > kMaxCaptionChars) {
    throw LengthError("caption has " + std::to_string(caption.size()) + " characters, limit is " +
                      std::to_string(kMaxCaptionChars));
  }
  std::vector<std::uint32_t> ids(seq_len, Vocabulary::kPad);
  const auto words = split_words(caption);
  const std::size_t n = std::min(seq_len, words.size());
  for (std::size_t i = 0; i < n; ++i) ids[i] = vocab.id(words[i]);
  return ids;
}

}  // namespace radsearch
