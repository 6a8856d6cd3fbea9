#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "quali/validation.hpp"

namespace quali {

enum class Role { interviewer, participant, moderator, poster, unlabeled };
enum class DataType { interview, focus_group, social_media };
enum class InputFormat { plain_text, delimited_table, spreadsheet };

std::string_view to_string(Role r) noexcept;
std::string_view to_string(DataType t) noexcept;
std::string_view to_string(InputFormat f) noexcept;

/// Accepts the enum spelling and the hyphenated CLI spelling
/// ("focus_group", "focus-group"). Throws Error(bad_request) otherwise.
DataType parse_data_type(std::string_view s);
Role parse_role(std::string_view s);
InputFormat parse_input_format(std::string_view s);

/// A column selected either by header name or by 0-based index.
using ColumnRef = std::variant<std::string, std::size_t>;

struct ColumnMapping {
    std::optional<ColumnRef> speaker_column;
    std::optional<ColumnRef> text_column;  // required for tabular input
    std::optional<ColumnRef> id_column;
};

struct Record {
    std::string record_id;
    std::string speaker_label;
    Role role = Role::unlabeled;
    std::string text;
    std::size_t ordinal = 0;

    bool operator==(const Record&) const = default;
};

struct Dataset {
    std::vector<Record> records;
    DataType data_type = DataType::interview;
    std::string description;
    std::string source_path;
    ColumnMapping column_mapping;

    /// Distinct non-empty speaker labels in first-appearance order.
    std::vector<std::string> speaker_labels() const;
    const Record* find(std::string_view record_id) const;
};

struct LoadOptions {
    InputFormat format = InputFormat::delimited_table;
    ColumnMapping mapping;
    DataType data_type = DataType::interview;
    std::string description;
    /// delimited_table only: tab instead of comma.
    bool tab_delimited = false;
};

/// Reads a dataset from disk. Errors: file_not_found, format_mismatch,
/// mapping_error, empty_dataset (all as quali::Error).
Dataset load_dataset(const std::filesystem::path& path, const LoadOptions& options);

/// Same contract over in-memory bytes (uploads). `source_label` becomes
/// Dataset::source_path.
Dataset load_dataset_bytes(std::string_view bytes, const LoadOptions& options,
                           std::string source_label);

/// Guesses the input format from a file extension (.txt, .csv, .tsv, .xlsx,
/// .docx). Returns nullopt for unknown extensions. Sets `tab` for .tsv and
/// `word` for .docx (which is read through the Word adapter into plain text).
struct FormatGuess {
    InputFormat format;
    bool tab = false;
    bool word = false;
};
std::optional<FormatGuess> guess_format(const std::filesystem::path& path);

/// Word adapter: .docx bytes converted to plain text, then segmented with
/// the plain-text rule.
Dataset load_word_document(std::string_view docx_bytes, const LoadOptions& options,
                           std::string source_label);

using RoleMap = std::map<std::string, Role, std::less<>>;

/// Records whose speaker_label is in the map take that role; every other
/// record becomes unlabeled. Nothing else changes.
Dataset assign_roles(Dataset dataset, const RoleMap& role_map);

/// Largest number of tokens a single record may hold before it has to be
/// split; derived from the default batching budget.
std::size_t single_record_ceiling();

ValidationReport validate_dataset(const Dataset& dataset);

/// Everything needed to turn an uploaded or local file into a Dataset.
struct IngestSpec {
    /// nullopt: guessed from the file name.
    std::optional<InputFormat> format;
    /// With an explicit format: read the bytes as a .docx document.
    bool word_document = false;
    bool tab_delimited = false;
    ColumnMapping mapping;
    DataType data_type = DataType::interview;
    std::string description;
    /// Applied with assign_roles when non-empty.
    RoleMap roles;
};

/// Format resolution (explicit, else by extension, .docx through the Word
/// adapter), loading and role assignment. Errors as load_dataset, plus
/// format_mismatch when the format cannot be determined.
Dataset ingest_bytes(std::string_view bytes, const std::string& name, const IngestSpec& spec);
Dataset ingest_file(const std::filesystem::path& path, const IngestSpec& spec);

}  // namespace quali
