#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace quali::csv {

using Row = std::vector<std::string>;

/// Parses RFC 4180 content: quoted fields may hold the delimiter, CR/LF and
/// doubled quotes. Both CRLF and bare LF terminate records. A trailing line
/// break does not produce an empty final record. Throws Error(format_mismatch)
/// on an unterminated quoted field or stray quote inside an unquoted field.
std::vector<Row> parse(std::string_view content, char delimiter = ',');

/// Quotes a field when it contains the delimiter, a quote, CR or LF, or
/// leading/trailing whitespace.
std::string escape_field(std::string_view field, char delimiter = ',');

/// Writes one record terminated by CRLF.
void append_row(std::string& out, const Row& row, char delimiter = ',');

}  // namespace quali::csv
