#pragma once

#include <cstddef>
#include <string_view>

namespace npcviz::utf8 {

inline bool is_continuation(char c) { return (static_cast<unsigned char>(c) & 0xC0) == 0x80; }

/// Number of code points, counting each non-continuation byte once.
inline std::size_t length(std::string_view text) {
    std::size_t count = 0;
    for (char c : text) {
        if (!is_continuation(c)) ++count;
    }
    return count;
}

/// Longest prefix holding at most `max_chars` code points.
inline std::string_view prefix(std::string_view text, std::size_t max_chars) {
    std::size_t chars = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (!is_continuation(text[i])) {
            if (chars == max_chars) return text.substr(0, i);
            ++chars;
        }
    }
    return text;
}

}  // namespace npcviz::utf8
