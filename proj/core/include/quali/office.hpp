#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "quali/csv.hpp"

// Readers for the OOXML containers accepted at ingest. Both throw
// Error(format_mismatch) when the bytes are not a readable archive of the
// expected kind.
namespace quali::office {

/// Cells of the first worksheet of an .xlsx workbook, row-major. Missing
/// cells inside a row are returned as empty strings; rows are padded to the
/// widest row.
std::vector<csv::Row> read_first_worksheet(std::string_view xlsx_bytes);

/// Text of a .docx document, one paragraph per block, blocks separated by a
/// blank line. Empty paragraphs are dropped.
std::string docx_to_plain_text(std::string_view docx_bytes);

/// Files stored in a zip archive (stored or deflated entries only).
struct ZipEntry {
    std::string name;
    std::string data;
};
std::vector<ZipEntry> read_zip(std::string_view bytes);

}  // namespace quali::office
