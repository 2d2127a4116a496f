#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace asrkit {

// Splits a UTF-8 string into code points, each returned as its own string.
// Invalid lead bytes are passed through as single-byte symbols.
std::vector<std::string> utf8_chars(std::string_view s);

// Splits on runs of ASCII whitespace; never returns empty tokens.
std::vector<std::string> split_words(std::string_view s);

std::string join_words(const std::vector<std::string>& words, std::string_view sep = " ");

bool has_whitespace(std::string_view s);

}  // namespace asrkit
