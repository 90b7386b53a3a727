#include "advchar/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <unordered_set>

#include "advchar/error.hpp"

namespace advchar {

std::u32string utf8_decode(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    int extra = 0;
    char32_t cp = 0;
    if (lead < 0x80) {
      cp = lead;
    } else if ((lead & 0xE0) == 0xC0) {
      cp = lead & 0x1F;
      extra = 1;
    } else if ((lead & 0xF0) == 0xE0) {
      cp = lead & 0x0F;
      extra = 2;
    } else if ((lead & 0xF8) == 0xF0) {
      cp = lead & 0x07;
      extra = 3;
    } else {
      throw DataError("invalid UTF-8 lead byte at offset " + std::to_string(i));
    }
    if (i + extra >= text.size() && extra > 0) {
      throw DataError("truncated UTF-8 sequence at offset " +
                      std::to_string(i));
    }
    for (int k = 1; k <= extra; ++k) {
      const auto cont = static_cast<unsigned char>(text[i + k]);
      if ((cont & 0xC0) != 0x80) {
        throw DataError("invalid UTF-8 continuation byte at offset " +
                        std::to_string(i + k));
      }
      cp = (cp << 6) | (cont & 0x3F);
    }
    static constexpr char32_t kMinForLength[] = {0, 0x80, 0x800, 0x10000};
    if (cp < kMinForLength[extra] || cp > 0x10FFFF ||
        (cp >= 0xD800 && cp <= 0xDFFF)) {
      throw DataError("invalid UTF-8 scalar value at offset " +
                      std::to_string(i));
    }
    out.push_back(cp);
    i += extra + 1;
  }
  return out;
}

void utf8_append(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::string utf8_encode(std::u32string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char32_t cp : text) utf8_append(out, cp);
  return out;
}

Vocab::Vocab(std::vector<char32_t> chars) : chars_(std::move(chars)) {
  if (chars_.empty()) {
    throw ConfigError("vocabulary needs at least one character");
  }
  index_.reserve(chars_.size());
  for (std::size_t i = 0; i < chars_.size(); ++i) {
    const auto [it, inserted] =
        index_.emplace(chars_[i], static_cast<TokenId>(i) + kNumSpecials);
    if (!inserted) {
      throw ConfigError("duplicate character in vocabulary at index " +
                        std::to_string(i));
    }
  }
}

TokenId Vocab::id_of(char32_t ch) const {
  const auto it = index_.find(ch);
  return it == index_.end() ? kUnkId : it->second;
}

char32_t Vocab::char_of(TokenId id) const {
  if (id < kNumSpecials || static_cast<std::size_t>(id) >= size()) {
    throw InvalidTokenError("token id " + std::to_string(id) +
                            " has no character (vocab size " +
                            std::to_string(size()) + ")");
  }
  return chars_[static_cast<std::size_t>(id - kNumSpecials)];
}

TokenSequence Vocab::encode(std::string_view text, std::size_t max_len) const {
  if (max_len < 1) throw ConfigError("max_len must be at least 1");
  const std::u32string cps = utf8_decode(text);
  const std::size_t n = std::min(cps.size(), max_len);
  TokenSequence out;
  out.reserve(n + 1);
  out.push_back(kClsId);
  for (std::size_t i = 0; i < n; ++i) out.push_back(id_of(cps[i]));
  return out;
}

std::string Vocab::decode(std::span<const TokenId> tokens) const {
  std::string out;
  for (TokenId id : tokens) {
    if (id < 0 || static_cast<std::size_t>(id) >= size()) {
      throw InvalidTokenError("token id " + std::to_string(id) +
                              " out of range for vocab size " +
                              std::to_string(size()));
    }
    if (id == kClsId || id == kPadId) continue;
    utf8_append(out, id == kUnkId ? kReplacementGlyph : char_of(id));
  }
  return out;
}

void Vocab::save_text(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocab file " + path.string());
  std::string line;
  for (char32_t ch : chars_) {
    line.clear();
    utf8_append(line, ch);
    line.push_back('\n');
    out << line;
  }
}

Vocab Vocab::load_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileNotFoundError("cannot open vocab file " + path.string());
  std::vector<char32_t> chars;
  std::size_t line_no = 0;
  // getline would split a '\n' entry, so read exactly one code point per line.
  std::string all((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  const std::u32string cps = utf8_decode(all);
  for (std::size_t i = 0; i < cps.size();) {
    ++line_no;
    if (i + 1 >= cps.size() || cps[i + 1] != U'\n') {
      throw DataError("vocab file line " + std::to_string(line_no) +
                      " must hold exactly one character");
    }
    chars.push_back(cps[i]);
    i += 2;
  }
  return Vocab(std::move(chars));
}

Vocab build_vocab(std::span<const std::string> corpus, std::size_t min_freq) {
  if (corpus.empty()) throw ConfigError("cannot build a vocabulary from an empty corpus");
  if (min_freq < 1) throw ConfigError("min_freq must be at least 1");
  std::map<char32_t, std::size_t> freq;
  for (const auto& text : corpus) {
    for (char32_t cp : utf8_decode(text)) ++freq[cp];
  }
  std::vector<std::pair<char32_t, std::size_t>> kept;
  for (const auto& [cp, count] : freq) {
    if (count >= min_freq) kept.emplace_back(cp, count);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (kept.empty()) {
    throw ConfigError("no character reaches min_freq=" +
                      std::to_string(min_freq));
  }
  std::vector<char32_t> chars;
  chars.reserve(kept.size());
  for (const auto& entry : kept) chars.push_back(entry.first);
  return Vocab(std::move(chars));
}

}  // namespace advchar
