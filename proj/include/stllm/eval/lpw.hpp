#pragma once

#include <string>
#include <string_view>

namespace stllm::eval {

/// Lowercase + punctuation removal: simple case folding of every code point,
/// removal of every code point in general category P, whitespace runs
/// collapsed to one space, ends trimmed. Invalid UTF-8 bytes become U+FFFD.
std::string lpw_normalize(std::string_view text);

/// True when `cp` is in Unicode general category P (Pc Pd Ps Pe Pi Pf Po).
bool is_punctuation(char32_t cp);

}  // namespace stllm::eval
