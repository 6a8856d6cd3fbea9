#include "quali/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "quali/chunking.hpp"
#include "quali/csv.hpp"
#include "quali/error.hpp"
#include "quali/office.hpp"
#include "quali/text.hpp"

namespace quali {

std::string_view to_string(Role r) noexcept {
    switch (r) {
        case Role::interviewer: return "interviewer";
        case Role::participant: return "participant";
        case Role::moderator: return "moderator";
        case Role::poster: return "poster";
        case Role::unlabeled: return "unlabeled";
    }
    return "unlabeled";
}

std::string_view to_string(DataType t) noexcept {
    switch (t) {
        case DataType::interview: return "interview";
        case DataType::focus_group: return "focus_group";
        case DataType::social_media: return "social_media";
    }
    return "interview";
}

std::string_view to_string(InputFormat f) noexcept {
    switch (f) {
        case InputFormat::plain_text: return "plain_text";
        case InputFormat::delimited_table: return "delimited_table";
        case InputFormat::spreadsheet: return "spreadsheet";
    }
    return "plain_text";
}

namespace {

std::string canonical_token(std::string_view s) {
    std::string out = text::casefold(text::trim(s));
    std::replace(out.begin(), out.end(), '-', '_');
    return out;
}

}  // namespace

DataType parse_data_type(std::string_view s) {
    const auto t = canonical_token(s);
    if (t == "interview" || t == "interviews") return DataType::interview;
    if (t == "focus_group" || t == "focus_groups") return DataType::focus_group;
    if (t == "social_media" || t == "social_media_posts") return DataType::social_media;
    throw Error(ErrorCode::bad_request, "unknown data type '" + std::string(s) + "'");
}

Role parse_role(std::string_view s) {
    const auto t = canonical_token(s);
    if (t == "interviewer") return Role::interviewer;
    if (t == "participant" || t == "interviewee") return Role::participant;
    if (t == "moderator") return Role::moderator;
    if (t == "poster") return Role::poster;
    if (t == "unlabeled") return Role::unlabeled;
    throw Error(ErrorCode::bad_request, "unknown role '" + std::string(s) + "'");
}

InputFormat parse_input_format(std::string_view s) {
    const auto t = canonical_token(s);
    if (t == "plain_text" || t == "text" || t == "txt") return InputFormat::plain_text;
    if (t == "delimited_table" || t == "csv" || t == "tsv") return InputFormat::delimited_table;
    if (t == "spreadsheet" || t == "xlsx") return InputFormat::spreadsheet;
    throw Error(ErrorCode::bad_request, "unknown input format '" + std::string(s) + "'");
}

std::vector<std::string> Dataset::speaker_labels() const {
    std::vector<std::string> out;
    std::set<std::string, std::less<>> seen;
    for (const auto& r : records) {
        if (r.speaker_label.empty()) continue;
        if (seen.insert(r.speaker_label).second) out.push_back(r.speaker_label);
    }
    return out;
}

const Record* Dataset::find(std::string_view record_id) const {
    for (const auto& r : records) {
        if (r.record_id == record_id) return &r;
    }
    return nullptr;
}

namespace {

constexpr std::string_view kBom = "\xEF\xBB\xBF";

void require_text(std::string_view bytes, std::string_view what) {
    if (bytes.find('\0') != std::string_view::npos) {
        throw Error(ErrorCode::format_mismatch, std::string(what) + " contains binary (NUL) bytes");
    }
    if (!text::is_valid_utf8(bytes)) {
        throw Error(ErrorCode::format_mismatch, std::string(what) + " is not valid UTF-8");
    }
}

std::string_view strip_bom(std::string_view s) {
    if (s.starts_with(kBom)) s.remove_prefix(kBom.size());
    return s;
}

// `LABEL: text` where LABEL is a short name (at most 4 words, 40 bytes, no
// sentence punctuation). Returns the label and the offset where text begins.
std::optional<std::pair<std::string, std::size_t>> speaker_prefix(std::string_view line) {
    const auto colon = line.find(':');
    if (colon == std::string_view::npos || colon == 0 || colon > 40) return std::nullopt;
    const auto label = text::trim(line.substr(0, colon));
    if (label.empty() || label.size() != colon) return std::nullopt;
    if (label.find_first_of(".!?;,\"") != std::string_view::npos) return std::nullopt;
    if (text::count_words(label) > 4) return std::nullopt;
    if (colon + 1 < line.size() && !text::is_space(line[colon + 1])) return std::nullopt;
    return std::make_pair(std::string(label), colon + 1);
}

struct Line {
    std::string_view content;  // without the terminator
    std::size_t number;        // 1-based
    std::size_t begin;         // byte offset of content in the source
};

std::vector<Line> split_lines(std::string_view s) {
    std::vector<Line> lines;
    std::size_t start = 0;
    std::size_t number = 1;
    while (start <= s.size()) {
        const auto nl = s.find('\n', start);
        const auto end = nl == std::string_view::npos ? s.size() : nl;
        auto content = s.substr(start, end - start);
        if (content.ends_with('\r')) content.remove_suffix(1);
        lines.push_back({content, number++, start});
        if (nl == std::string_view::npos) break;
        start = nl + 1;
    }
    return lines;
}

Dataset finish(std::vector<Record> records, const LoadOptions& options, std::string source) {
    if (records.empty()) {
        throw Error(ErrorCode::empty_dataset, "no usable records in " + source);
    }
    for (std::size_t i = 0; i < records.size(); ++i) records[i].ordinal = i;
    Dataset ds;
    ds.records = std::move(records);
    ds.data_type = options.data_type;
    ds.description = options.description;
    ds.source_path = std::move(source);
    ds.column_mapping = options.mapping;
    return ds;
}

Dataset load_plain_text(std::string_view bytes, const LoadOptions& options, std::string source) {
    require_text(bytes, source);
    const auto body = strip_bom(bytes);
    const auto lines = split_lines(body);

    std::vector<Record> records;
    // A record spans [first line, last line] of one speaker turn; its text is
    // the exact source bytes of that span, trimmed at both ends.
    std::optional<std::size_t> open_begin;
    std::size_t open_end = 0;
    std::size_t open_line = 0;
    std::string open_label;

    auto close = [&] {
        if (!open_begin) return;
        const auto raw = body.substr(*open_begin, open_end - *open_begin);
        const auto t = text::trim(raw);
        if (!t.empty()) {
            Record r;
            r.record_id = "line-" + std::to_string(open_line);
            r.speaker_label = open_label;
            r.text = std::string(t);
            records.push_back(std::move(r));
        }
        open_begin.reset();
        open_label.clear();
    };

    for (const auto& line : lines) {
        if (text::trim(line.content).empty()) {
            close();
            continue;
        }
        if (auto prefix = speaker_prefix(line.content)) {
            close();
            open_begin = line.begin + prefix->second;
            open_label = prefix->first;
            open_line = line.number;
        } else if (!open_begin) {
            open_begin = line.begin;
            open_line = line.number;
        }
        open_end = line.begin + line.content.size();
    }
    close();
    return finish(std::move(records), options, std::move(source));
}

std::optional<std::size_t> resolve_column(const csv::Row& header, const ColumnRef& ref) {
    if (const auto* idx = std::get_if<std::size_t>(&ref)) {
        if (*idx < header.size()) return *idx;
        return std::nullopt;
    }
    const auto& name = std::get<std::string>(ref);
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (text::trim(header[i]) == name) return i;
    }
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (text::iequals(text::trim(header[i]), name)) return i;
    }
    return std::nullopt;
}

std::string describe(const ColumnRef& ref) {
    if (const auto* idx = std::get_if<std::size_t>(&ref)) return "#" + std::to_string(*idx);
    return "'" + std::get<std::string>(ref) + "'";
}

Dataset load_table(const std::vector<csv::Row>& rows, const LoadOptions& options, std::string source) {
    if (rows.empty()) throw Error(ErrorCode::empty_dataset, "no header row in " + source);
    const auto& header = rows.front();
    const auto& mapping = options.mapping;
    if (!mapping.text_column) {
        throw Error(ErrorCode::mapping_error, "tabular input requires a text column");
    }
    const auto text_col = resolve_column(header, *mapping.text_column);
    if (!text_col) {
        throw Error(ErrorCode::mapping_error,
                    "text column " + describe(*mapping.text_column) + " not found in header");
    }
    std::optional<std::size_t> speaker_col;
    if (mapping.speaker_column) {
        speaker_col = resolve_column(header, *mapping.speaker_column);
        if (!speaker_col) {
            throw Error(ErrorCode::mapping_error,
                        "speaker column " + describe(*mapping.speaker_column) + " not found in header");
        }
    }
    std::optional<std::size_t> id_col;
    if (mapping.id_column) {
        id_col = resolve_column(header, *mapping.id_column);
        if (!id_col) {
            throw Error(ErrorCode::mapping_error,
                        "id column " + describe(*mapping.id_column) + " not found in header");
        }
    }

    auto cell = [](const csv::Row& row, std::size_t col) -> std::string_view {
        return col < row.size() ? std::string_view(row[col]) : std::string_view{};
    };

    std::vector<Record> records;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        const auto t = text::trim(cell(row, *text_col));
        if (t.empty()) continue;
        Record r;
        r.text = std::string(t);
        if (speaker_col) r.speaker_label = std::string(text::trim(cell(row, *speaker_col)));
        std::string id = id_col ? std::string(text::trim(cell(row, *id_col))) : std::string{};
        r.record_id = id.empty() ? "row-" + std::to_string(i) : std::move(id);
        records.push_back(std::move(r));
    }
    return finish(std::move(records), options, std::move(source));
}

std::string read_file(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) {
        throw Error(ErrorCode::file_not_found, "file not found: " + path.string());
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::file_not_found, "cannot open " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

Dataset load_dataset_bytes(std::string_view bytes, const LoadOptions& options, std::string source_label) {
    switch (options.format) {
        case InputFormat::plain_text:
            return load_plain_text(bytes, options, std::move(source_label));
        case InputFormat::delimited_table: {
            if (bytes.starts_with("PK\x03\x04")) {
                throw Error(ErrorCode::format_mismatch,
                            source_label + " is a zip archive, not a delimited table");
            }
            require_text(bytes, source_label);
            const auto rows = csv::parse(strip_bom(bytes), options.tab_delimited ? '\t' : ',');
            return load_table(rows, options, std::move(source_label));
        }
        case InputFormat::spreadsheet: {
            auto rows = office::read_first_worksheet(bytes);
            rows.erase(std::remove_if(rows.begin(), rows.end(),
                                      [](const csv::Row& r) {
                                          return std::all_of(r.begin(), r.end(), [](const auto& c) {
                                              return text::trim(c).empty();
                                          });
                                      }),
                       rows.end());
            return load_table(rows, options, std::move(source_label));
        }
    }
    throw Error(ErrorCode::format_mismatch, "unknown input format");
}

Dataset load_dataset(const std::filesystem::path& path, const LoadOptions& options) {
    const auto bytes = read_file(path);
    return load_dataset_bytes(bytes, options, path.string());
}

Dataset load_word_document(std::string_view docx_bytes, const LoadOptions& options,
                           std::string source_label) {
    const auto plain = office::docx_to_plain_text(docx_bytes);
    auto opts = options;
    opts.format = InputFormat::plain_text;
    return load_plain_text(plain, opts, std::move(source_label));
}

std::optional<FormatGuess> guess_format(const std::filesystem::path& path) {
    auto ext = text::casefold(path.extension().string());
    if (ext == ".txt" || ext == ".text") return FormatGuess{InputFormat::plain_text};
    if (ext == ".csv") return FormatGuess{InputFormat::delimited_table};
    if (ext == ".tsv" || ext == ".tab") return FormatGuess{InputFormat::delimited_table, true};
    if (ext == ".xlsx") return FormatGuess{InputFormat::spreadsheet};
    if (ext == ".docx") return FormatGuess{InputFormat::plain_text, false, true};
    return std::nullopt;
}

Dataset assign_roles(Dataset dataset, const RoleMap& role_map) {
    for (auto& r : dataset.records) {
        const auto it = role_map.find(r.speaker_label);
        r.role = it == role_map.end() ? Role::unlabeled : it->second;
    }
    return dataset;
}

std::size_t single_record_ceiling() {
    return TokenBudget{}.effective_budget();
}

ValidationReport validate_dataset(const Dataset& dataset) {
    ValidationReport report;
    if (dataset.records.empty()) {
        report.block("dataset has no records");
        return report;
    }
    std::set<std::string_view> ids;
    std::size_t unlabeled = 0;
    const auto ceiling = single_record_ceiling();
    for (const auto& r : dataset.records) {
        if (!ids.insert(r.record_id).second) {
            report.block("duplicate record_id '" + r.record_id + "'");
        }
        if (text::trim(r.text).empty()) {
            report.block("empty text at ordinal " + std::to_string(r.ordinal));
        }
        const auto tokens = estimate_tokens(r.text);
        if (tokens > ceiling) {
            report.warn("record exceeds single-record ceiling at ordinal " + std::to_string(r.ordinal) +
                        " (" + std::to_string(tokens) + " > " + std::to_string(ceiling) +
                        " tokens); it will be split");
        }
        if (r.speaker_label.empty()) ++unlabeled;
    }
    if (unlabeled > 0) {
        report.warn(std::to_string(unlabeled) + " record(s) have no speaker label");
    }
    return report;
}

}  // namespace quali

namespace quali {

Dataset ingest_bytes(std::string_view bytes, const std::string& name, const IngestSpec& spec) {
    LoadOptions options;
    options.mapping = spec.mapping;
    options.data_type = spec.data_type;
    options.description = spec.description;
    options.tab_delimited = spec.tab_delimited;
    bool word = false;
    if (spec.word_document) {
        options.format = InputFormat::plain_text;
        word = true;
    } else if (spec.format) {
        options.format = *spec.format;
    } else {
        const auto guess = guess_format(name);
        if (!guess) {
            throw Error(ErrorCode::format_mismatch,
                        "cannot tell the format of '" + name + "'; use .txt, .csv, .tsv, .xlsx or .docx");
        }
        options.format = guess->format;
        options.tab_delimited = options.tab_delimited || guess->tab;
        word = guess->word;
    }
    Dataset ds = word ? load_word_document(bytes, options, name) : load_dataset_bytes(bytes, options, name);
    if (!spec.roles.empty()) ds = assign_roles(std::move(ds), spec.roles);
    return ds;
}

Dataset ingest_file(const std::filesystem::path& path, const IngestSpec& spec) {
    return ingest_bytes(read_file(path), path.string(), spec);
}

}  // namespace quali
