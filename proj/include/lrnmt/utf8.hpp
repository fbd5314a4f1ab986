#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace lrnmt {

// Strict decoder: returns false on malformed input (overlong forms, bad
// continuation bytes, surrogates, out-of-range codepoints).
bool utf8_decode(std::string_view text, std::vector<char32_t>& out);

// Lenient decoder: malformed bytes are skipped.
std::vector<char32_t> utf8_decode_lossy(std::string_view text);

void utf8_append(std::string& out, char32_t cp);
std::string utf8_encode(const std::vector<char32_t>& cps);

// Splits on whitespace codepoints, one UTF-8 string per character.
std::vector<std::string> utf8_chars(std::string_view word);

inline bool is_space_cp(char32_t c) {
    switch (c) {
        case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
        case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
        case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return c >= 0x2000 && c <= 0x200A;
    }
}

inline bool is_digit_cp(char32_t c) { return c >= '0' && c <= '9'; }

// Latin alphabets plus the IPA extensions used by Bambara orthography.
inline bool is_alpha_cp(char32_t c) {
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) return true;
    if (c >= 0xC0 && c <= 0xFF && c != 0xD7 && c != 0xF7) return true;
    if (c >= 0x100 && c <= 0x2AF) return true;
    return false;
}

// Sentence punctuation covered by the spacing rules.
inline bool is_sentence_punct_cp(char32_t c) {
    return c == ',' || c == '.' || c == ';' || c == ':' || c == '!' || c == '?';
}

inline bool is_emoji_cp(char32_t c) {
    if (c >= 0x1F000 && c <= 0x1FAFF) return true;   // pictographs, emoticons, symbols
    if (c >= 0x2600 && c <= 0x27BF) return true;     // misc symbols, dingbats
    if (c >= 0x2B00 && c <= 0x2BFF) return true;     // arrows, stars
    if (c >= 0xFE00 && c <= 0xFE0F) return true;     // variation selectors
    if (c == 0x200D) return true;                    // zero-width joiner
    return false;
}

}  // namespace lrnmt
