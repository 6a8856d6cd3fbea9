#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "quali/session.hpp"
#include "quali/themeparse.hpp"

namespace quali {

inline constexpr std::string_view kCsvHeader = "Theme,Description,Quotes,Participant Count";
inline constexpr std::string_view kQuoteJoin = " || ";

/// Joins quote texts with " || ". Empty quotes are dropped; a "||" inside a
/// quote is written "\||" (and a backslash run right before it is doubled).
std::string encode_quotes(const std::vector<Quote>& quotes);
std::vector<Quote> decode_quotes(std::string_view cell);

/// CSV text for a table: header, one CRLF-terminated row per entry.
std::string render_csv(const ThemeTable& table);
/// Errors: header_mismatch, row_arity_error, format_mismatch.
ThemeTable parse_csv(std::string_view content);

/// Errors: io_error.
std::size_t export_csv(const ThemeTable& table, const std::filesystem::path& path);
/// Errors: io_error, header_mismatch, row_arity_error.
ThemeTable import_csv(const std::filesystem::path& path);

/// Sections, each opened by a "== SECTION: <name> ==" line, in this order:
/// DATASET, PRESET, then "PROMPT batch i" / "RESPONSE batch i" for every
/// batch that was sent, RECOVERY, RESULT, COST, and ABORTED for a run that
/// did not finish. Every occurrence of `secret` is replaced by "[redacted]".
std::string render_transcript(const AnalysisSession& session, std::string_view secret = {});

/// Errors: io_error.
std::size_t export_transcript(const AnalysisSession& session, const std::filesystem::path& path,
                              std::string_view secret = {});

/// Writes `content` to `path` (truncating). Errors: io_error.
std::size_t write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace quali
