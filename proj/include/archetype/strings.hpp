#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace archetype {

inline bool is_ascii_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

inline bool is_ascii_digit(unsigned char c) { return c >= '0' && c <= '9'; }

inline bool is_ascii_alpha(unsigned char c) {
  unsigned char folded = c | 0x20;
  return folded >= 'a' && folded <= 'z';
}

inline char ascii_lower(char c) {
  return is_ascii_alpha(static_cast<unsigned char>(c)) ? static_cast<char>(c | 0x20)
                                                       : c;
}

inline std::string_view trim_view(std::string_view text) {
  std::size_t begin = 0;
  std::size_t end = text.size();
  while (begin < end && is_ascii_space(static_cast<unsigned char>(text[begin]))) {
    ++begin;
  }
  while (end > begin && is_ascii_space(static_cast<unsigned char>(text[end - 1]))) {
    --end;
  }
  return text.substr(begin, end - begin);
}

inline std::string trim(std::string_view text) {
  return std::string(trim_view(text));
}

inline std::string to_ascii_lower(std::string_view text) {
  std::string out(text);
  for (char& c : out) c = ascii_lower(c);
  return out;
}

/// Canonical form used when comparing model output against label names:
/// ASCII lowercase, leading/trailing whitespace removed, and interior
/// whitespace runs collapsed to a single space.  Bytes outside ASCII are
/// kept untouched.
inline std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (is_ascii_space(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(ascii_lower(c));
  }
  return out;
}

inline std::string join(const std::vector<std::string>& parts,
                        std::string_view separator) {
  std::string out;
  std::size_t total = 0;
  for (const std::string& part : parts) total += part.size() + separator.size();
  out.reserve(total);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i != 0) out.append(separator);
    out.append(parts[i]);
  }
  return out;
}

inline bool starts_with(std::string_view text, std::string_view prefix) {
  return text.size() >= prefix.size() && text.substr(0, prefix.size()) == prefix;
}

inline bool ends_with(std::string_view text, std::string_view suffix) {
  return text.size() >= suffix.size() &&
         text.substr(text.size() - suffix.size()) == suffix;
}

/// Parses a plain decimal number: optional sign, digits, at most one point.
/// Scientific notation, hex, infinities, thousands separators, and any
/// trailing junk are rejected.  Returns nullopt when `text` (after trimming)
/// is not a decimal literal or does not fit in a finite double.
inline std::optional<double> parse_decimal(std::string_view text) {
  std::string_view s = trim_view(text);
  if (s.empty()) return std::nullopt;

  std::size_t i = 0;
  bool negative = false;
  if (s[i] == '+' || s[i] == '-') {
    negative = s[i] == '-';
    ++i;
  }
  std::string digits;  // canonical "int.frac" form accepted by from_chars
  digits.reserve(s.size() + 2);
  if (negative) digits.push_back('-');

  std::size_t digit_count = 0;
  bool seen_point = false;
  bool integer_part_empty = true;
  for (; i < s.size(); ++i) {
    char c = s[i];
    if (is_ascii_digit(static_cast<unsigned char>(c))) {
      ++digit_count;
      integer_part_empty = integer_part_empty && seen_point;
      digits.push_back(c);
      continue;
    }
    if (c == '.' && !seen_point) {
      seen_point = true;
      if (integer_part_empty) digits.push_back('0');
      digits.push_back('.');
      continue;
    }
    return std::nullopt;
  }
  if (digit_count == 0) return std::nullopt;
  if (digits.back() == '.') digits.pop_back();

  double value = 0.0;
  const char* first = digits.data();
  const char* last = first + digits.size();
  auto result = std::from_chars(first, last, value, std::chars_format::fixed);
  if (result.ec != std::errc() || result.ptr != last) return std::nullopt;
  if (!std::isfinite(value)) return std::nullopt;
  return value;
}

}  // namespace archetype
