#pragma once

#include <string>
#include <string_view>
#include <vector>

// Byte-level text helpers shared by the ingest, parsing and merge stages.
namespace quali::text {

bool is_valid_utf8(std::string_view s) noexcept;

/// True for ASCII whitespace (space, \t, \n, \v, \f, \r).
bool is_space(char c) noexcept;

/// Strips leading and trailing ASCII whitespace; interior bytes untouched.
std::string_view trim(std::string_view s) noexcept;

std::vector<std::string_view> split(std::string_view s, char sep);

/// ASCII lower-casing plus folding of typographic quotes to their ASCII form.
/// Non-ASCII bytes are otherwise passed through unchanged.
std::string casefold(std::string_view s);

/// Replaces every run of whitespace (ASCII or U+00A0) with one space and trims.
std::string collapse_whitespace(std::string_view s);

/// Removes leading and trailing punctuation, quote marks and ellipses
/// ("...", U+2026), together with any whitespace exposed by the removal.
std::string strip_edge_punctuation(std::string_view s);

std::size_t count_words(std::string_view s);

bool iequals(std::string_view a, std::string_view b) noexcept;

}  // namespace quali::text
