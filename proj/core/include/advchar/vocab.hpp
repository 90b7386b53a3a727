#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace advchar {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

inline constexpr TokenId kClsId = 0;
inline constexpr TokenId kPadId = 1;
inline constexpr TokenId kUnkId = 2;
inline constexpr TokenId kNumSpecials = 3;

// Rendered in place of UNK when decoding.
inline constexpr char32_t kReplacementGlyph = U'\uFFFD';

constexpr bool is_special(TokenId id) { return id >= 0 && id < kNumSpecials; }

// Throws DataError on malformed UTF-8.
std::u32string utf8_decode(std::string_view text);
std::string utf8_encode(std::u32string_view text);
void utf8_append(std::string& out, char32_t cp);

// Character vocabulary. Ids 0..2 are the CLS/PAD/UNK specials; character i
// of chars() has id i + 3. Immutable once built.
class Vocab {
 public:
  // Rejects empty or duplicated character lists.
  explicit Vocab(std::vector<char32_t> chars);

  std::size_t size() const { return chars_.size() + kNumSpecials; }
  const std::vector<char32_t>& chars() const { return chars_; }

  // UNK for characters outside the vocabulary.
  TokenId id_of(char32_t ch) const;
  bool contains(char32_t ch) const { return index_.contains(ch); }
  // Throws InvalidTokenError for specials and out-of-range ids.
  char32_t char_of(TokenId id) const;

  // [CLS] followed by one id per code point, truncated to max_len + 1
  // positions in total.
  TokenSequence encode(std::string_view text, std::size_t max_len) const;

  // Drops CLS/PAD, renders UNK as kReplacementGlyph.
  std::string decode(std::span<const TokenId> tokens) const;

  // One character per line; line number + 3 is the id.
  void save_text(const std::filesystem::path& path) const;
  static Vocab load_text(const std::filesystem::path& path);

  friend bool operator==(const Vocab& a, const Vocab& b) {
    return a.chars_ == b.chars_;
  }

 private:
  std::vector<char32_t> chars_;
  std::unordered_map<char32_t, TokenId> index_;
};

// Characters with frequency >= min_freq, ordered by descending frequency and
// then ascending code point.
Vocab build_vocab(std::span<const std::string> corpus, std::size_t min_freq);

}  // namespace advchar
