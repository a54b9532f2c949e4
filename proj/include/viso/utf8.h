#pragma once

#include <string>
#include <string_view>
#include <vector>

// Thin wrappers over ICU for the handful of Unicode operations the pipeline
// needs. Invalid UTF-8 input is decoded with U+FFFD substitution.
namespace viso::utf8 {

std::u32string decode(std::string_view s);
std::string encode(std::u32string_view s);

bool is_alpha(char32_t c);
bool is_alnum(char32_t c);
bool is_space(char32_t c);
bool is_combining_mark(char32_t c);

std::string to_lower(std::string_view s);
std::string nfc(std::string_view s);
bool is_nfc(std::string_view s);

// Number of code points.
std::size_t length(std::string_view s);

// Splits on Unicode whitespace, dropping empty pieces.
std::vector<std::string> split_whitespace(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace viso::utf8
