#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace gcd_audit::utf8 {

// Strict decode: rejects overlong forms, surrogates and values above U+10FFFF.
std::optional<std::u32string> decode(std::string_view bytes);

std::string encode(std::u32string_view scalars);
void append(std::string & out, char32_t scalar);

}  // namespace gcd_audit::utf8
