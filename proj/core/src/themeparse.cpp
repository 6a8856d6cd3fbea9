#include "quali/themeparse.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "quali/text.hpp"

namespace quali {

namespace {

// One character of a table line after escape processing. `escaped` marks
// characters written with a backslash, which never act as syntax.
struct Unit {
    char c;
    bool escaped;
};
using Units = std::vector<Unit>;

Units to_units(std::string_view line) {
    Units out;
    out.reserve(line.size());
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '\\' && i + 1 < line.size()) {
            const char next = line[i + 1];
            if (next == '|' || next == '"' || next == '\\') {
                out.push_back({next, true});
                ++i;
                continue;
            }
            if (next == 'n') {
                out.push_back({'\n', true});
                ++i;
                continue;
            }
            if (next == 'r') {
                out.push_back({'\r', true});
                ++i;
                continue;
            }
        }
        out.push_back({line[i], false});
    }
    return out;
}

std::string plain(const Units& units) {
    std::string s;
    s.reserve(units.size());
    for (const auto& u : units) s += u.c;
    return s;
}

bool is_unit_space(const Unit& u) { return !u.escaped && text::is_space(u.c); }

Units trim_units(const Units& units) {
    std::size_t b = 0;
    std::size_t e = units.size();
    while (b < e && is_unit_space(units[b])) ++b;
    while (e > b && is_unit_space(units[e - 1])) --e;
    return Units(units.begin() + static_cast<std::ptrdiff_t>(b), units.begin() + static_cast<std::ptrdiff_t>(e));
}

bool has_bare_pipe(const Units& units) {
    return std::any_of(units.begin(), units.end(), [](const Unit& u) { return u.c == '|' && !u.escaped; });
}

// Splits a table line into trimmed cells, dropping the optional outer pipes.
std::vector<Units> split_cells(const Units& line) {
    const auto t = trim_units(line);
    std::vector<Units> cells(1);
    for (const auto& u : t) {
        if (u.c == '|' && !u.escaped) {
            cells.emplace_back();
        } else {
            cells.back().push_back(u);
        }
    }
    if (!t.empty() && t.front().c == '|' && !t.front().escaped) cells.erase(cells.begin());
    if (!t.empty() && t.back().c == '|' && !t.back().escaped && !cells.empty()) cells.pop_back();
    for (auto& c : cells) c = trim_units(c);
    return cells;
}

bool is_separator_row(const std::vector<Units>& cells) {
    if (cells.empty()) return false;
    for (const auto& cell : cells) {
        const auto s = plain(cell);
        if (s.empty()) return false;
        std::size_t dashes = 0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] == '-') {
                ++dashes;
            } else if (s[i] == ':' && (i == 0 || i + 1 == s.size())) {
                continue;
            } else {
                return false;
            }
        }
        if (dashes == 0) return false;
    }
    return true;
}

enum class Column { theme, description, quotes, count };

std::optional<Column> header_column(const std::string& cell) {
    std::string key;
    for (unsigned char c : cell) {
        if (std::isalnum(c)) key += static_cast<char>(std::tolower(c));
    }
    if (key == "themes" || key == "theme") return Column::theme;
    if (key == "description" || key == "descriptions") return Column::description;
    if (key == "quotes" || key == "quote") return Column::quotes;
    if (key == "participantcount" || key == "participantscount" || key == "participantcounts") return Column::count;
    return std::nullopt;
}

// Column order when the row is the four-column header, else nullopt.
std::optional<std::vector<Column>> header_layout(const std::vector<Units>& cells) {
    if (cells.size() != 4) return std::nullopt;
    std::vector<Column> layout;
    std::set<Column> seen;
    for (const auto& c : cells) {
        const auto col = header_column(plain(c));
        if (!col || !seen.insert(*col).second) return std::nullopt;
        layout.push_back(*col);
    }
    return layout;
}

constexpr std::string_view kOpenCurly = "\xE2\x80\x9C";   // U+201C
constexpr std::string_view kCloseCurly = "\xE2\x80\x9D";  // U+201D

bool curly_at(const Units& u, std::size_t i, std::string_view mark) {
    if (i + mark.size() > u.size()) return false;
    for (std::size_t k = 0; k < mark.size(); ++k) {
        if (u[i + k].escaped || u[i + k].c != mark[k]) return false;
    }
    return true;
}

std::vector<Quote> parse_quotes(const Units& cell) {
    std::vector<Quote> quotes;
    bool any_segment = false;
    std::size_t i = 0;
    while (i < cell.size()) {
        std::string_view close;
        if (cell[i].c == '"' && !cell[i].escaped) {
            close = "\"";
            i += 1;
        } else if (curly_at(cell, i, kOpenCurly)) {
            close = kCloseCurly;
            i += kOpenCurly.size();
        } else {
            ++i;
            continue;
        }
        std::string body;
        bool closed = false;
        while (i < cell.size()) {
            if (curly_at(cell, i, close)) {
                i += close.size();
                closed = true;
                break;
            }
            body += cell[i].c;
            ++i;
        }
        if (!closed) {
            // An unterminated segment: treat the rest as the quote.
            quotes.push_back({std::move(body), std::nullopt});
            any_segment = true;
            break;
        }
        quotes.push_back({std::move(body), std::nullopt});
        any_segment = true;
    }
    if (any_segment) return quotes;
    const auto flat = plain(cell);
    for (auto part : text::split(flat, ';')) {
        const auto t = text::trim(part);
        if (!t.empty()) quotes.push_back({std::string(t), std::nullopt});
    }
    return quotes;
}

std::optional<std::size_t> parse_count(const std::string& s) {
    if (s.empty() || s.size() > 9) return std::nullopt;
    std::size_t v = 0;
    for (unsigned char c : s) {
        if (!std::isdigit(c)) return std::nullopt;
        v = v * 10 + (c - '0');
    }
    return v;
}

std::vector<std::string_view> lines_of(std::string_view raw) {
    std::vector<std::string_view> lines;
    for (auto l : text::split(raw, '\n')) {
        if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
        lines.push_back(l);
    }
    return lines;
}

ParseFailure failure(ErrorKind kind, std::string detail, std::optional<ThemeTable> partial = std::nullopt) {
    return ParseFailure{GatewayError::of(kind, std::move(detail)), std::move(partial)};
}

std::string escape_cell(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '|': out += "\\|"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            default: out += c;
        }
    }
    return out;
}

std::string escape_quote(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '|': out += "\\|"; break;
            case '"': out += "\\\""; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

ParseResult parse_theme_table(std::string_view raw, std::size_t expected_themes) {
    if (text::trim(raw).empty()) return failure(ErrorKind::format_error, "empty reply");
    const auto lines = lines_of(raw);

    std::size_t i = 0;
    std::optional<std::vector<Column>> layout;
    for (; i < lines.size(); ++i) {
        const auto units = to_units(lines[i]);
        if (!has_bare_pipe(units)) continue;
        layout = header_layout(split_cells(units));
        if (layout) {
            ++i;
            break;
        }
    }
    if (!layout) {
        return failure(ErrorKind::format_error,
                       "no table with the columns Themes | Description | Quotes | Participant Count");
    }

    ThemeTable table;
    std::set<std::string> seen;
    std::size_t row_number = 0;
    for (; i < lines.size(); ++i) {
        const auto units = to_units(lines[i]);
        if (!has_bare_pipe(units)) {
            if (text::trim(lines[i]).empty()) continue;
            break;
        }
        const auto cells = split_cells(units);
        if (is_separator_row(cells)) continue;
        ++row_number;
        if (cells.size() != 4) {
            return failure(ErrorKind::format_error, "row " + std::to_string(row_number) + " has " +
                                                        std::to_string(cells.size()) + " cells instead of 4");
        }
        ThemeEntry entry;
        for (std::size_t c = 0; c < 4; ++c) {
            switch ((*layout)[c]) {
                case Column::theme: entry.theme = plain(cells[c]); break;
                case Column::description: entry.description = plain(cells[c]); break;
                case Column::quotes: entry.quotes = parse_quotes(cells[c]); break;
                case Column::count: {
                    const auto n = parse_count(plain(cells[c]));
                    if (!n) {
                        return failure(ErrorKind::format_error, "row " + std::to_string(row_number) +
                                                                    ": participant count '" + plain(cells[c]) +
                                                                    "' is not a whole number");
                    }
                    entry.participant_count = *n;
                    break;
                }
            }
        }
        if (entry.theme.empty()) {
            return failure(ErrorKind::format_error, "row " + std::to_string(row_number) + " has an empty theme");
        }
        if (!seen.insert(normalize_theme(entry.theme)).second) {
            return failure(ErrorKind::format_error, "theme '" + entry.theme + "' appears twice");
        }
        table.entries.push_back(std::move(entry));
    }

    if (table.entries.size() != expected_themes) {
        const auto got = table.entries.size();
        return failure(ErrorKind::count_mismatch,
                       "expected " + std::to_string(expected_themes) + " themes, got " + std::to_string(got),
                       std::move(table));
    }
    return table;
}

std::string render_pipe_table(const ThemeTable& table) {
    std::string out = "| Themes | Description | Quotes | Participant Count |\n|---|---|---|---|\n";
    for (const auto& e : table.entries) {
        out += "| ";
        out += escape_cell(e.theme);
        out += " | ";
        out += escape_cell(e.description);
        out += " | ";
        for (std::size_t q = 0; q < e.quotes.size(); ++q) {
            if (q) out += "; ";
            out += '"';
            out += escape_quote(e.quotes[q].text);
            out += '"';
        }
        out += " | ";
        out += std::to_string(e.participant_count);
        out += " |\n";
    }
    return out;
}

std::string normalize_quote(std::string_view quote) {
    return text::casefold(text::strip_edge_punctuation(text::collapse_whitespace(quote)));
}

std::string normalize_record_text(std::string_view s) {
    return text::casefold(text::collapse_whitespace(s));
}

std::string normalize_theme(std::string_view theme) {
    return text::casefold(text::collapse_whitespace(theme));
}

QuoteIndex::QuoteIndex(const Dataset& dataset) : dataset_(&dataset) {
    normalized_.reserve(dataset.records.size());
    for (const auto& r : dataset.records) normalized_.push_back(normalize_record_text(r.text));
}

std::optional<std::string> QuoteIndex::match(std::string_view quote) const {
    const auto needle = normalize_quote(quote);
    if (needle.empty()) return std::nullopt;
    // records are held in ordinal order
    for (std::size_t i = 0; i < normalized_.size(); ++i) {
        if (normalized_[i].find(needle) != std::string::npos) return dataset_->records[i].record_id;
    }
    return std::nullopt;
}

ProvenanceReport verify_quotes(ThemeTable& table, const QuoteIndex& index) {
    ProvenanceReport report;
    for (auto& e : table.entries) {
        for (auto& q : e.quotes) {
            q.matched_record_id = index.match(q.text);
            if (q.matched_record_id) {
                ++report.verified;
            } else {
                report.unmatched.emplace_back(e.theme, q.text);
            }
        }
    }
    const auto total = report.total();
    report.verification_rate = total == 0 ? 1.0 : static_cast<double>(report.verified) / static_cast<double>(total);
    return report;
}

ProvenanceReport verify_quotes(ThemeTable& table, const Dataset& dataset) {
    return verify_quotes(table, QuoteIndex(dataset));
}

void recount_participants(ThemeTable& table, const Dataset& dataset) {
    for (auto& e : table.entries) {
        std::set<std::string> speakers;
        for (const auto& q : e.quotes) {
            if (!q.matched_record_id) continue;
            const auto* r = dataset.find(*q.matched_record_id);
            if (r && !r->speaker_label.empty()) speakers.insert(r->speaker_label);
        }
        if (!e.claimed_count) e.claimed_count = e.participant_count;
        e.participant_count = speakers.size();
    }
}

}  // namespace quali
