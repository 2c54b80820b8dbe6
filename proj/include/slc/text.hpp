#pragma once

// UTF-8 helpers, the tokenizer and the SourceDocument value type.
//
// All offsets exposed by this library are Unicode scalar-value offsets
// ("character offsets"), never byte offsets.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "slc/error.hpp"

namespace slc {

namespace utf8 {

/// Byte offset of every character start, plus a final entry equal to
/// text.size(). Throws InvalidUtf8 on malformed input.
inline std::vector<std::size_t> char_starts(std::string_view text) {
  std::vector<std::size_t> starts;
  starts.reserve(text.size() + 1);
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (lead < 0x80) {
      len = 1;
      cp = lead;
    } else if ((lead & 0xE0) == 0xC0) {
      len = 2;
      cp = lead & 0x1F;
    } else if ((lead & 0xF0) == 0xE0) {
      len = 3;
      cp = lead & 0x0F;
    } else if ((lead & 0xF8) == 0xF0) {
      len = 4;
      cp = lead & 0x07;
    } else {
      throw Error(Errc::InvalidUtf8, "invalid UTF-8 lead byte", {{"byte_offset", i}});
    }
    if (i + len > text.size())
      throw Error(Errc::InvalidUtf8, "truncated UTF-8 sequence", {{"byte_offset", i}});
    for (std::size_t k = 1; k < len; ++k) {
      const auto c = static_cast<unsigned char>(text[i + k]);
      if ((c & 0xC0) != 0x80)
        throw Error(Errc::InvalidUtf8, "invalid UTF-8 continuation byte",
                    {{"byte_offset", i + k}});
      cp = (cp << 6) | (c & 0x3F);
    }
    const bool overlong = (len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) ||
                          (len == 4 && cp < 0x10000);
    if (overlong || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))
      throw Error(Errc::InvalidUtf8, "invalid code point", {{"byte_offset", i}});
    starts.push_back(i);
    i += len;
  }
  starts.push_back(text.size());
  return starts;
}

/// Decodes the code point starting at byte offset `pos`. Input must be valid.
inline std::uint32_t decode_at(std::string_view text, std::size_t pos) noexcept {
  const auto lead = static_cast<unsigned char>(text[pos]);
  if (lead < 0x80) return lead;
  std::size_t len = (lead & 0xE0) == 0xC0 ? 2 : (lead & 0xF0) == 0xE0 ? 3 : 4;
  std::uint32_t cp = lead & (len == 2 ? 0x1F : len == 3 ? 0x0F : 0x07);
  for (std::size_t k = 1; k < len; ++k)
    cp = (cp << 6) | (static_cast<unsigned char>(text[pos + k]) & 0x3F);
  return cp;
}

inline std::size_t length(std::string_view text) { return char_starts(text).size() - 1; }

}  // namespace utf8

inline bool is_space_cp(std::uint32_t cp) noexcept {
  switch (cp) {
    case ' ': case '\t': case '\n': case '\r': case '\f': case '\v':
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

inline bool is_brace_cp(std::uint32_t cp) noexcept { return cp == '{' || cp == '}'; }

inline bool is_punct_cp(std::uint32_t cp) noexcept {
  if (cp < 0x80) {
    const bool ascii_punct = (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
                             (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E);
    return ascii_punct && !is_brace_cp(cp);
  }
  return cp == 0xAB || cp == 0xBB || cp == 0xA7 || cp == 0xB6 || cp == 0xBF || cp == 0xA1 ||
         (cp >= 0x2010 && cp <= 0x2027) || (cp >= 0x2030 && cp <= 0x205E);
}

struct Token {
  std::string surface;
  std::size_t start = 0;  // character offset
  std::size_t end = 0;    // character offset, exclusive

  friend bool operator==(const Token&, const Token&) = default;
};

/// Splits on whitespace. Punctuation characters are single-character tokens
/// and maximal brace runs ("{{", "}}}", ...) are tokens of their own.
inline std::vector<Token> tokenize(std::string_view text) {
  const auto starts = utf8::char_starts(text);
  const std::size_t n = starts.size() - 1;
  std::vector<Token> tokens;

  auto cp_at = [&](std::size_t ci) { return utf8::decode_at(text, starts[ci]); };
  auto emit = [&](std::size_t a, std::size_t b) {
    tokens.push_back(Token{std::string(text.substr(starts[a], starts[b] - starts[a])), a, b});
  };

  std::size_t i = 0;
  while (i < n) {
    const auto cp = cp_at(i);
    if (is_space_cp(cp)) {
      ++i;
    } else if (is_brace_cp(cp)) {
      std::size_t j = i + 1;
      while (j < n && cp_at(j) == cp) ++j;
      emit(i, j);
      i = j;
    } else if (is_punct_cp(cp)) {
      emit(i, i + 1);
      ++i;
    } else {
      std::size_t j = i + 1;
      while (j < n) {
        const auto c = cp_at(j);
        if (is_space_cp(c) || is_brace_cp(c) || is_punct_cp(c)) break;
        ++j;
      }
      emit(i, j);
      i = j;
    }
  }
  return tokens;
}

/// Immutable contract text with its token stream and a character index.
class SourceDocument {
 public:
  SourceDocument() : char_starts_{0} {}

  SourceDocument(std::string id, std::string text)
      : id_(std::move(id)), text_(std::move(text)), char_starts_(utf8::char_starts(text_)),
        tokens_(tokenize(text_)) {}

  const std::string& id() const noexcept { return id_; }
  const std::string& text() const noexcept { return text_; }
  const std::vector<Token>& tokens() const noexcept { return tokens_; }
  std::size_t char_length() const noexcept { return char_starts_.size() - 1; }

  /// Text of the character range [start, end).
  std::string_view slice(std::size_t start, std::size_t end) const {
    if (start > end || end > char_length())
      throw Error(Errc::MisalignedSpan, "character range outside document",
                  {{"start", start}, {"end", end}});
    return std::string_view(text_).substr(char_starts_[start],
                                          char_starts_[end] - char_starts_[start]);
  }

  std::size_t byte_offset(std::size_t char_offset) const { return char_starts_.at(char_offset); }

  /// Character offset starting at byte `byte`, or npos inside a sequence.
  std::size_t char_offset(std::size_t byte) const noexcept {
    auto it = std::lower_bound(char_starts_.begin(), char_starts_.end(), byte);
    if (it == char_starts_.end() || *it != byte) return npos;
    return static_cast<std::size_t>(it - char_starts_.begin());
  }

  /// Index of the token starting exactly at `char_offset`, or npos.
  std::size_t token_starting_at(std::size_t char_offset) const noexcept {
    auto it = std::lower_bound(tokens_.begin(), tokens_.end(), char_offset,
                               [](const Token& t, std::size_t v) { return t.start < v; });
    if (it == tokens_.end() || it->start != char_offset) return npos;
    return static_cast<std::size_t>(it - tokens_.begin());
  }

  /// Index of the token ending exactly at `char_offset`, or npos.
  std::size_t token_ending_at(std::size_t char_offset) const noexcept {
    auto it = std::lower_bound(tokens_.begin(), tokens_.end(), char_offset,
                               [](const Token& t, std::size_t v) { return t.end < v; });
    if (it == tokens_.end() || it->end != char_offset) return npos;
    return static_cast<std::size_t>(it - tokens_.begin());
  }

  bool is_token_aligned(std::size_t start, std::size_t end) const noexcept {
    return start < end && token_starting_at(start) != npos && token_ending_at(end) != npos;
  }

  friend bool operator==(const SourceDocument& a, const SourceDocument& b) {
    return a.id_ == b.id_ && a.text_ == b.text_;
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::string id_;
  std::string text_;
  std::vector<std::size_t> char_starts_;
  std::vector<Token> tokens_;
};

/// Random version-4 UUID string.
inline std::string make_uuid() {
  thread_local std::mt19937_64 rng{std::random_device{}()};
  std::uint64_t hi = rng();
  std::uint64_t lo = rng();
  hi = (hi & 0xFFFFFFFFFFFF0FFFULL) | 0x0000000000004000ULL;
  lo = (lo & 0x3FFFFFFFFFFFFFFFULL) | 0x8000000000000000ULL;
  char buf[37];
  std::snprintf(buf, sizeof buf, "%08x-%04x-%04x-%04x-%012llx",
                static_cast<unsigned>(hi >> 32), static_cast<unsigned>((hi >> 16) & 0xFFFF),
                static_cast<unsigned>(hi & 0xFFFF), static_cast<unsigned>(lo >> 48),
                static_cast<unsigned long long>(lo & 0xFFFFFFFFFFFFULL));
  return buf;
}

inline bool is_identifier(std::string_view s) noexcept {
  if (s.empty()) return false;
  auto alpha = [](char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z'); };
  auto digit = [](char c) { return c >= '0' && c <= '9'; };
  if (!alpha(s.front())) return false;
  return std::all_of(s.begin() + 1, s.end(),
                     [&](char c) { return alpha(c) || digit(c) || c == '_'; });
}

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

}  // namespace slc
