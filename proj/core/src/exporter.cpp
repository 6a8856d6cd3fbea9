#include "quali/exporter.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

#include "quali/csv.hpp"
#include "quali/error.hpp"

namespace quali {

namespace {

std::string escape_quote_text(std::string_view q) {
    std::string out;
    std::size_t i = 0;
    while (i < q.size()) {
        if (q[i] == '\\') {
            std::size_t j = i;
            while (j < q.size() && q[j] == '\\') ++j;
            const auto run = j - i;
            if (q.substr(j, 2) == "||") {
                out.append(run * 2 + 1, '\\');
                out += "||";
                i = j + 2;
            } else {
                out.append(run, '\\');
                i = j;
            }
        } else if (q.substr(i, 2) == "||") {
            out += "\\||";
            i += 2;
        } else {
            out += q[i++];
        }
    }
    return out;
}

std::string unescape_quote_text(std::string_view q) {
    std::string out;
    std::size_t i = 0;
    while (i < q.size()) {
        if (q[i] == '\\') {
            std::size_t j = i;
            while (j < q.size() && q[j] == '\\') ++j;
            const auto run = j - i;
            if (q.substr(j, 2) == "||" && run % 2 == 1) {
                out.append((run - 1) / 2, '\\');
                out += "||";
                i = j + 2;
            } else {
                out.append(run, '\\');
                i = j;
            }
        } else {
            out += q[i++];
        }
    }
    return out;
}

std::size_t parse_count_field(const std::string& s, std::size_t row) {
    if (s.empty()) throw Error(ErrorCode::format_mismatch, "row " + std::to_string(row) + ": empty participant count");
    std::size_t v = 0;
    for (char c : s) {
        if (c < '0' || c > '9') {
            throw Error(ErrorCode::format_mismatch,
                        "row " + std::to_string(row) + ": participant count '" + s + "' is not a whole number");
        }
        v = v * 10 + static_cast<std::size_t>(c - '0');
    }
    return v;
}

std::string redact(std::string text, std::string_view secret) {
    if (secret.empty()) return text;
    std::size_t pos = 0;
    while ((pos = text.find(secret, pos)) != std::string::npos) {
        text.replace(pos, secret.size(), "[redacted]");
        pos += 10;
    }
    return text;
}

void section(std::ostringstream& out, std::string_view name) {
    out << "== SECTION: " << name << " ==\n";
}

void ensure_newline(std::ostringstream& out, std::string_view s) {
    out << s;
    if (s.empty() || s.back() != '\n') out << '\n';
}

}  // namespace

std::string encode_quotes(const std::vector<Quote>& quotes) {
    std::string out;
    bool first = true;
    for (const auto& q : quotes) {
        if (q.text.empty()) continue;
        if (!first) out += kQuoteJoin;
        out += escape_quote_text(q.text);
        first = false;
    }
    return out;
}

std::vector<Quote> decode_quotes(std::string_view cell) {
    std::vector<Quote> quotes;
    if (cell.empty()) return quotes;
    std::size_t start = 0;
    while (true) {
        const auto sep = cell.find(kQuoteJoin, start);
        if (sep == std::string_view::npos) {
            quotes.push_back({unescape_quote_text(cell.substr(start)), std::nullopt});
            break;
        }
        quotes.push_back({unescape_quote_text(cell.substr(start, sep - start)), std::nullopt});
        start = sep + kQuoteJoin.size();
    }
    return quotes;
}

std::string render_csv(const ThemeTable& table) {
    std::string out(kCsvHeader);
    out += "\r\n";
    for (const auto& e : table.entries) {
        csv::append_row(out, {e.theme, e.description, encode_quotes(e.quotes), std::to_string(e.participant_count)});
    }
    return out;
}

ThemeTable parse_csv(std::string_view content) {
    if (content.substr(0, 3) == "\xEF\xBB\xBF") content.remove_prefix(3);
    const auto rows = csv::parse(content);
    const csv::Row header{"Theme", "Description", "Quotes", "Participant Count"};
    if (rows.empty() || rows.front() != header) {
        throw Error(ErrorCode::header_mismatch, "expected the header " + std::string(kCsvHeader));
    }
    ThemeTable table;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != 4) {
            throw Error(ErrorCode::row_arity_error,
                        "row " + std::to_string(r) + " has " + std::to_string(row.size()) + " fields instead of 4");
        }
        ThemeEntry e;
        e.theme = row[0];
        e.description = row[1];
        e.quotes = decode_quotes(row[2]);
        e.participant_count = parse_count_field(row[3], r);
        table.entries.push_back(std::move(e));
    }
    return table;
}

std::size_t write_file(const std::filesystem::path& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.close();
    if (!out) throw Error(ErrorCode::io_error, "write failed for " + path.string());
    return content.size();
}

std::size_t export_csv(const ThemeTable& table, const std::filesystem::path& path) {
    return write_file(path, render_csv(table));
}

ThemeTable import_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io_error, "cannot read " + path.string());
    const std::string content(std::istreambuf_iterator<char>(in), {});
    return parse_csv(content);
}

std::string render_transcript(const AnalysisSession& s, std::string_view secret) {
    std::ostringstream out;
    section(out, "DATASET");
    out << "source: " << (s.dataset.source_path.empty() ? "(upload)" : s.dataset.source_path) << '\n';
    out << "records: " << s.dataset.records.size() << '\n';
    out << "speakers: " << s.dataset.speaker_labels().size() << '\n';
    out << "data type: " << to_string(s.config.data_type) << '\n';
    out << "role playing: " << (s.config.role_playing ? "yes" : "no") << '\n';
    out << "themes requested: " << s.config.theme_count << '\n';
    out << "backend: " << s.backend << '\n';
    out << "model: " << s.model_id << '\n';
    out << "batches: " << s.plan.batches.size() << '\n';
    out << '\n';

    section(out, "PRESET");
    out << s.preset_version << "\n\n";

    for (const auto& b : s.plan.batches) {
        bool sent = false;
        for (const auto& x : s.exchanges) sent = sent || x.batch == b.number;
        if (!sent) continue;
        section(out, "PROMPT batch " + std::to_string(b.number));
        for (const auto& x : s.exchanges) {
            if (x.batch != b.number) continue;
            out << "-- request " << x.label << " attempt " << x.attempt << " --\n";
            ensure_newline(out, x.prompt);
            out << "-- data --\n";
            ensure_newline(out, x.payload);
        }
        out << '\n';
        section(out, "RESPONSE batch " + std::to_string(b.number));
        for (const auto& x : s.exchanges) {
            if (x.batch != b.number) continue;
            out << "-- response " << x.label << " attempt " << x.attempt;
            if (x.error) out << " (" << to_string(*x.error) << ")";
            out << " --\n";
            ensure_newline(out, x.response);
        }
        out << '\n';
    }

    section(out, "RECOVERY");
    if (s.recovery_log.empty()) out << "none\n";
    for (const auto& r : s.recovery_log) {
        out << "batch " << r.label << ": " << to_string(r.error) << " -> " << to_string(r.action);
        if (r.delay.count() > 0) out << " after " << r.delay.count() << " ms";
        if (!r.detail.empty()) out << " (" << r.detail << ")";
        out << '\n';
    }
    out << '\n';

    section(out, "RESULT");
    if (s.merged) {
        out << render_pipe_table(*s.merged);
        if (s.provenance) {
            out << "quotes verified: " << s.provenance->verified << " of " << s.provenance->total() << '\n';
            for (const auto& [theme, quote] : s.provenance->unmatched) {
                out << "unmatched: [" << theme << "] " << quote << '\n';
            }
        }
    } else {
        out << "no result\n";
    }
    for (const auto& w : s.warnings) out << "warning: " << w << '\n';
    out << '\n';

    section(out, "COST");
    out << "input tokens: " << s.cost.input_tokens << '\n';
    out << "output tokens: " << s.cost.output_tokens << '\n';
    out << "rates per 1K tokens: " << s.cost.rates.input_per_1k << " input, " << s.cost.rates.output_per_1k
        << " output\n";
    out << "estimated total: " << format_usd(s.cost.total_micros) << '\n';

    if (s.abort) {
        out << '\n';
        section(out, "ABORTED");
        out << "class: " << to_string(s.abort->failure) << '\n';
        out << "cause: " << s.abort->code << '\n';
        out << "reason: " << s.abort->message << '\n';
        out << "recovery trail:\n";
        if (s.recovery_log.empty()) out << "  none\n";
        for (const auto& r : s.recovery_log) {
            out << "  batch " << r.label << ": " << to_string(r.error) << " -> " << to_string(r.action) << '\n';
        }
    }
    return redact(out.str(), secret);
}

std::size_t export_transcript(const AnalysisSession& session, const std::filesystem::path& path,
                              std::string_view secret) {
    return write_file(path, render_transcript(session, secret));
}

}  // namespace quali
