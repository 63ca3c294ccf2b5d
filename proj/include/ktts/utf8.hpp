#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace ktts::utf8 {

// Invalid byte sequences decode to U+FFFD; decoding never throws.
std::u32string decode(std::string_view bytes);
std::string encode(std::u32string_view text);
std::string encode(char32_t cp);

inline bool is_space(char32_t c) {
  return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\v' || c == U'\f' ||
         c == 0x00A0 || c == 0x3000;
}

}  // namespace ktts::utf8
