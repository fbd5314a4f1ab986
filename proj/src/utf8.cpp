#include "lrnmt/utf8.hpp"

namespace lrnmt {

namespace {

// Decodes one codepoint starting at `i`. Returns false on malformed input;
// in that case `i` is advanced by one byte so callers can resynchronize.
bool decode_one(std::string_view s, std::size_t& i, char32_t& cp) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) {
        cp = b0;
        ++i;
        return true;
    }
    int len;
    char32_t acc;
    char32_t min_cp;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        acc = b0 & 0x1F;
        min_cp = 0x80;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        acc = b0 & 0x0F;
        min_cp = 0x800;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        acc = b0 & 0x07;
        min_cp = 0x10000;
    } else {
        ++i;
        return false;
    }
    if (i + static_cast<std::size_t>(len) > s.size()) {
        ++i;
        return false;
    }
    for (int k = 1; k < len; ++k) {
        const auto b = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
        if ((b & 0xC0) != 0x80) {
            ++i;
            return false;
        }
        acc = (acc << 6) | (b & 0x3F);
    }
    if (acc < min_cp || acc > 0x10FFFF || (acc >= 0xD800 && acc <= 0xDFFF)) {
        ++i;
        return false;
    }
    cp = acc;
    i += static_cast<std::size_t>(len);
    return true;
}

}  // namespace

bool utf8_decode(std::string_view text, std::vector<char32_t>& out) {
    out.clear();
    out.reserve(text.size());
    std::size_t i = 0;
    bool ok = true;
    while (i < text.size()) {
        char32_t cp;
        if (decode_one(text, i, cp)) {
            out.push_back(cp);
        } else {
            ok = false;
        }
    }
    return ok;
}

std::vector<char32_t> utf8_decode_lossy(std::string_view text) {
    std::vector<char32_t> out;
    utf8_decode(text, out);
    return out;
}

void utf8_append(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

std::string utf8_encode(const std::vector<char32_t>& cps) {
    std::string out;
    out.reserve(cps.size());
    for (char32_t c : cps) utf8_append(out, c);
    return out;
}

std::vector<std::string> utf8_chars(std::string_view word) {
    std::vector<std::string> out;
    for (char32_t cp : utf8_decode_lossy(word)) {
        std::string s;
        utf8_append(s, cp);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace lrnmt
