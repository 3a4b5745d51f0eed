#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace datashield::text {

// All offsets exposed by the library count Unicode scalar values, not bytes.

std::u32string decode_utf8(std::string_view bytes);
std::string encode_utf8(std::u32string_view scalars);
std::string encode_utf8(char32_t scalar);

// Simple one-to-one case folding (ASCII, Latin-1, Greek, Cyrillic). Length
// preserving, so folded offsets equal original offsets.
char32_t fold_case(char32_t c);
std::u32string fold_case(std::u32string_view s);
std::string fold_case_utf8(std::string_view s);

bool is_space(char32_t c);
bool is_word_char(char32_t c);

struct Range {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool contains(std::size_t pos) const { return pos >= begin && pos < end; }
  friend bool operator==(const Range&, const Range&) = default;
};

// Sentences end at '.', '?' or '!' followed by whitespace (or end of text).
std::vector<Range> sentence_ranges(std::u32string_view s);

// Maximal runs of word characters.
std::vector<Range> word_ranges(std::u32string_view s);

// Lower-cased word tokens as UTF-8 strings.
std::vector<std::string> words(std::string_view utf8);

// Collapses whitespace runs to a single space and trims both ends.
std::string normalize_space(std::string_view utf8);

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char delim);
bool starts_with_ci(std::string_view s, std::string_view prefix);
bool contains_ci(std::string_view haystack, std::string_view needle);

}  // namespace datashield::text
