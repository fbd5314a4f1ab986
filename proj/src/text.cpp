#include "lrnmt/text.hpp"

#include <algorithm>
#include <cctype>

#include "lrnmt/utf8.hpp"

namespace lrnmt {

namespace {

bool is_banned_cp(char32_t c) {
    return c == 0xAB || c == 0xBB || c == '<' || c == '>' || c == '{' || c == '}';
}

std::string collapse_spaces(const std::vector<char32_t>& cps) {
    std::vector<char32_t> out;
    out.reserve(cps.size());
    bool pending_space = false;
    for (char32_t c : cps) {
        if (is_space_cp(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(c);
    }
    return utf8_encode(out);
}

// Matches "12)", "3.", "a)" at position `i` (which must point past any
// leading spaces). Returns the index one past the marker's trailing
// whitespace, or npos when there is no marker.
std::size_t match_enumeration(const std::vector<char32_t>& cps, std::size_t i) {
    std::size_t j = i;
    if (j < cps.size() && is_digit_cp(cps[j])) {
        while (j < cps.size() && is_digit_cp(cps[j])) ++j;
    } else if (j < cps.size() && cps[j] >= 'a' && cps[j] <= 'z') {
        ++j;
    } else {
        return std::string::npos;
    }
    if (j >= cps.size() || (cps[j] != ')' && cps[j] != '.')) return std::string::npos;
    ++j;
    if (j >= cps.size() || !is_space_cp(cps[j])) return std::string::npos;
    while (j < cps.size() && is_space_cp(cps[j])) ++j;
    return j;
}

}  // namespace

std::vector<std::string> split_whitespace(std::string_view text) {
    std::vector<std::string> words;
    std::string current;
    for (char32_t cp : utf8_decode_lossy(text)) {
        if (is_space_cp(cp)) {
            if (!current.empty()) words.push_back(std::move(current));
            current.clear();
        } else {
            utf8_append(current, cp);
        }
    }
    if (!current.empty()) words.push_back(std::move(current));
    return words;
}

std::string normalize_text(std::string_view text) {
    std::vector<char32_t> cps;
    utf8_decode(text, cps);  // lenient: malformed bytes dropped

    std::vector<char32_t> kept;
    kept.reserve(cps.size());
    for (char32_t c : cps)
        if (!is_banned_cp(c)) kept.push_back(c);

    std::vector<char32_t> spaced;
    spaced.reserve(kept.size() + 8);
    for (std::size_t i = 0; i < kept.size(); ++i) {
        char32_t c = kept[i];
        if (is_sentence_punct_cp(c)) {
            // Word-internal . , : ; join tokens (decimals, URLs, times) and
            // get no space inserted after them; ? and ! never join tokens.
            const bool joiner = (c == '.' || c == ',' || c == ':' || c == ';');
            const bool word_internal = joiner && i > 0 && !is_space_cp(kept[i - 1]) &&
                                       i + 1 < kept.size() && !is_space_cp(kept[i + 1]);
            while (!spaced.empty() && is_space_cp(spaced.back())) spaced.pop_back();
            spaced.push_back(c);
            if (i + 1 < kept.size()) {
                char32_t next = kept[i + 1];
                if (!is_space_cp(next) && !is_sentence_punct_cp(next) && !word_internal)
                    spaced.push_back(' ');
            }
        } else {
            spaced.push_back(c);
        }
    }
    return collapse_spaces(spaced);
}

bool has_link(std::string_view text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    auto followed_by_nonspace = [&](std::size_t end) {
        return end < lower.size() && !std::isspace(static_cast<unsigned char>(lower[end]));
    };
    for (const std::string_view prefix : {"http://", "https://", "www."}) {
        std::size_t pos = 0;
        while ((pos = lower.find(prefix, pos)) != std::string::npos) {
            if (followed_by_nonspace(pos + prefix.size())) return true;
            pos += 1;
        }
    }
    return false;
}

bool has_anomalous_repetition(std::string_view text) {
    std::vector<char32_t> cps = utf8_decode_lossy(text);
    std::size_t run = 0;
    char32_t prev = 0;
    for (char32_t c : cps) {
        run = (c == prev) ? run + 1 : 1;
        prev = c;
        if (run >= 4 && is_alpha_cp(c)) return true;
    }
    return false;
}

bool has_leading_enumeration(std::string_view text) {
    std::vector<char32_t> cps = utf8_decode_lossy(text);
    std::size_t i = 0;
    while (i < cps.size() && is_space_cp(cps[i])) ++i;
    return match_enumeration(cps, i) != std::string::npos;
}

std::string strip_leading_enumeration(std::string_view text) {
    std::vector<char32_t> cps = utf8_decode_lossy(text);
    std::size_t i = 0;
    while (i < cps.size() && is_space_cp(cps[i])) ++i;
    for (;;) {
        std::size_t next = match_enumeration(cps, i);
        if (next == std::string::npos) break;
        i = next;
    }
    return collapse_spaces(std::vector<char32_t>(cps.begin() + static_cast<std::ptrdiff_t>(i),
                                                 cps.end()));
}

bool has_emoji(std::string_view text) {
    for (char32_t c : utf8_decode_lossy(text))
        if (is_emoji_cp(c)) return true;
    return false;
}

std::string strip_emoji(std::string_view text) {
    std::vector<char32_t> kept;
    for (char32_t c : utf8_decode_lossy(text))
        if (!is_emoji_cp(c)) kept.push_back(c);
    return collapse_spaces(kept);
}

}  // namespace lrnmt
