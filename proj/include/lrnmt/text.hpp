#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace lrnmt {

// Splits on Unicode whitespace; never returns empty tokens.
std::vector<std::string> split_whitespace(std::string_view text);

// Normalization applied to every corpus line before any filtering:
// collapses whitespace, strips the characters « » < > { }, removes spaces
// before , . ; : ! ? and ensures one space after them (decimal and
// thousands separators between digits are left alone).
std::string normalize_text(std::string_view text);

// True iff the text contains an http://, https:// or www. URL.
bool has_link(std::string_view text);

// True iff any alphabetic character repeats four or more times in a row
// ("loooool" style noise).
bool has_anomalous_repetition(std::string_view text);

// Leading enumeration markers: "1)", "12.", "a)" followed by whitespace,
// at the start of the sentence only.
bool has_leading_enumeration(std::string_view text);
std::string strip_leading_enumeration(std::string_view text);

bool has_emoji(std::string_view text);
std::string strip_emoji(std::string_view text);

}  // namespace lrnmt
