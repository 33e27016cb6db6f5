#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace clinlm {

/// Decodes UTF-8 into code points. Throws std::invalid_argument on malformed input.
std::u32string decode_utf8(std::string_view text);

void append_utf8(std::string& out, char32_t cp);
std::string encode_utf8(std::u32string_view cps);

/// Number of code points in a UTF-8 string.
std::size_t count_codepoints(std::string_view text);

// Character classes used by normalization and word splitting.
bool is_punctuation(char32_t cp);
bool is_letter(char32_t cp);
bool is_space(char32_t cp);

/// Maximal runs of non-whitespace characters.
std::vector<std::string> split_whitespace(std::string_view text);
std::size_t count_words(std::string_view text);

std::string to_lower_ascii(std::string_view text);
std::string trim(std::string_view text);

/// Splits on a single-character delimiter, keeping empty fields.
std::vector<std::string> split_fields(std::string_view line, char delim);

/// Fixed-point rendering with trailing zeros (and a bare point) removed.
std::string format_decimal(double value, int max_decimals);

}  // namespace clinlm
