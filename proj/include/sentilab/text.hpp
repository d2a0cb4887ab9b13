#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace sentilab::text {

// Invalid byte sequences are dropped.
std::u32string utf8_decode(std::string_view bytes);
std::string utf8_encode(std::u32string_view cps);

bool is_unicode_space(char32_t c);
bool is_control(char32_t c);

std::string ascii_lower(std::string_view s);

// Splits on ASCII whitespace, dropping empty pieces.
std::vector<std::string> split_whitespace(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Lowercased runs of ASCII letters/digits; bytes >= 0x80 count as word
// characters so non-Latin words and emoji survive as tokens.
std::vector<std::string> word_tokens(std::string_view s);

bool starts_with_icase(std::string_view s, std::string_view prefix);

}  // namespace sentilab::text
