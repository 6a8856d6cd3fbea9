#include "quali/csv.hpp"

#include "quali/error.hpp"
#include "quali/text.hpp"

namespace quali::csv {

std::vector<Row> parse(std::string_view content, char delimiter) {
    std::vector<Row> rows;
    Row row;
    std::string field;
    bool in_quotes = false;
    bool field_was_quoted = false;
    bool row_has_content = false;
    std::size_t line = 1;

    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_was_quoted = false;
    };
    auto end_row = [&] {
        end_field();
        rows.push_back(std::move(row));
        row.clear();
        row_has_content = false;
    };

    for (std::size_t i = 0; i < content.size(); ++i) {
        const char c = content[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < content.size() && content[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            if (!field.empty() || field_was_quoted) {
                throw Error(ErrorCode::format_mismatch,
                            "stray quote inside unquoted CSV field on line " + std::to_string(line));
            }
            in_quotes = true;
            field_was_quoted = true;
            row_has_content = true;
        } else if (c == delimiter) {
            end_field();
            row_has_content = true;
        } else if (c == '\r' && i + 1 < content.size() && content[i + 1] == '\n') {
            continue;
        } else if (c == '\n') {
            end_row();
            ++line;
        } else {
            if (field_was_quoted) {
                throw Error(ErrorCode::format_mismatch,
                            "unexpected character after closing quote on line " + std::to_string(line));
            }
            field.push_back(c);
            row_has_content = true;
        }
    }
    if (in_quotes) {
        throw Error(ErrorCode::format_mismatch, "unterminated quoted CSV field");
    }
    if (row_has_content || !field.empty()) end_row();
    return rows;
}

std::string escape_field(std::string_view field, char delimiter) {
    const bool needs_quotes = field.find_first_of(std::string{'"', '\r', '\n', delimiter}) !=
                                  std::string_view::npos ||
                              (!field.empty() && (text::is_space(field.front()) ||
                                                  text::is_space(field.back())));
    if (!needs_quotes) return std::string(field);
    std::string out;
    out.reserve(field.size() + 2);
    out.push_back('"');
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

void append_row(std::string& out, const Row& row, char delimiter) {
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i > 0) out.push_back(delimiter);
        out += escape_field(row[i], delimiter);
    }
    out += "\r\n";
}

}  // namespace quali::csv
