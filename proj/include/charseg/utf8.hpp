#pragma once

#include <string>
#include <string_view>

namespace charseg::utf8 {

/// Decodes UTF-8 into code points. Throws InputError naming the byte offset
/// of the first invalid sequence.
std::u32string decode(std::string_view bytes);

std::string encode(std::u32string_view text);
void append(std::string& out, char32_t c);

/// Returns the code point starting at byte `pos` and advances `pos` past it.
char32_t next(std::string_view bytes, std::size_t& pos);

}  // namespace charseg::utf8
