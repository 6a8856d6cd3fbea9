#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "quali/corpus.hpp"
#include "quali/llmgateway.hpp"

namespace quali {

struct Quote {
    std::string text;
    std::optional<std::string> matched_record_id;

    bool operator==(const Quote&) const = default;
};

struct ThemeEntry {
    std::string theme;
    std::string description;
    std::vector<Quote> quotes;
    std::size_t participant_count = 0;
    /// What the model reported before recount; kept for audit.
    std::optional<std::size_t> claimed_count;

    bool operator==(const ThemeEntry&) const = default;
};

struct ThemeTable {
    std::vector<ThemeEntry> entries;
    /// Batch label ("3", "2.1") or "merged".
    std::string source_batch;
    std::string model_id;
    std::string preset_version;
    double temperature = 0.0;

    bool operator==(const ThemeTable&) const = default;
};

struct ProvenanceReport {
    std::size_t verified = 0;
    std::vector<std::pair<std::string, std::string>> unmatched;  // (theme, quote)
    double verification_rate = 1.0;

    std::size_t total() const { return verified + unmatched.size(); }
};

inline const std::vector<std::string>& theme_columns() {
    static const std::vector<std::string> cols{"Themes", "Description", "Quotes", "Participant Count"};
    return cols;
}

/// Row-count failure together with the rows that did parse.
struct ParseFailure {
    GatewayError error;
    std::optional<ThemeTable> partial;
};

using ParseResult = std::variant<ThemeTable, ParseFailure>;

/// Reads the first pipe table whose header names the four theme columns
/// (any case, any order). Text outside the table and separator rows are
/// ignored. Inside cells `\|` is a literal pipe; in the Quotes cell every
/// double-quoted segment is one quote (falling back to ';' separation when
/// nothing is quoted). A row with the wrong number of cells, a non-numeric
/// count, a repeated theme or a missing header is format_error; a
/// well-formed table with the wrong number of rows is count_mismatch.
ParseResult parse_theme_table(std::string_view raw, std::size_t expected_themes);

/// Renders entries as a pipe table that parse_theme_table reads back to the
/// same themes, descriptions, quote texts and counts.
std::string render_pipe_table(const ThemeTable& table);

/// Normalization applied to quotes before matching: whitespace collapsed,
/// edge punctuation and ellipses stripped, casefolded.
std::string normalize_quote(std::string_view quote);

/// Normalization applied to record texts: whitespace collapsed, casefolded.
std::string normalize_record_text(std::string_view text);

/// Theme identity inside one table: casefolded, whitespace collapsed.
std::string normalize_theme(std::string_view theme);

/// Sets matched_record_id on each quote of `table` (first match in ordinal
/// order) and reports the totals.
ProvenanceReport verify_quotes(ThemeTable& table, const Dataset& dataset);

/// Precomputed normalized record texts for repeated verification.
class QuoteIndex {
public:
    explicit QuoteIndex(const Dataset& dataset);
    std::optional<std::string> match(std::string_view quote) const;
    const Dataset& dataset() const { return *dataset_; }

private:
    const Dataset* dataset_;
    std::vector<std::string> normalized_;
};

ProvenanceReport verify_quotes(ThemeTable& table, const QuoteIndex& index);

/// participant_count := distinct speaker labels among matched records; the
/// previous count moves to claimed_count unless one is already recorded.
void recount_participants(ThemeTable& table, const Dataset& dataset);

}  // namespace quali
