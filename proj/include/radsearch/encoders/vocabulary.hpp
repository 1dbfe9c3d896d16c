#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace radsearch {

inline constexpr std::size_t kMaxCaptionChars = 200;

// Dense token ids with PAD = 0 and UNK = 1.
class Vocabulary {
 public:
  static constexpr std::uint32_t kPad = 0;
  static constexpr std::uint32_t kUnk = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();

  // Sorted, so the same caption set always yields the same ids.
  static Vocabulary build(std::span<const std::string> captions);
  // Rebuild from an id-ordered token list (as stored in checkpoints).
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  std::uint32_t add(std::string_view token);
  std::uint32_t id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(std::uint32_t id) const;
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::uint32_t> ids_;
};

// Lowercase; every non-alphanumeric byte becomes a separator.
std::vector<std::string> split_words(std::string_view text);

// Word ids padded or truncated to `seq_len`. Throws LengthError past 200 chars.
std::vector<std::uint32_t> tokenize(std::string_view caption, const Vocabulary& vocab, std::size_t seq_len);

}  // namespace radsearch
