#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace igaiva::text {

/// Decode UTF-8 into code points. Malformed bytes decode to U+FFFD.
std::u32string decode_utf8(std::string_view input);
std::string encode_utf8(std::u32string_view input);
void append_utf8(std::string& out, char32_t cp);

/// Simple case folding for Latin, Greek and Cyrillic blocks.
char32_t to_lower(char32_t cp);
bool is_word_char(char32_t cp);

std::string lowercase(std::string_view input);

}  // namespace igaiva::text
