#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "quali/corpus.hpp"
#include "quali/themeparse.hpp"

namespace quali {

/// Grouping key for themes across batches: casefolded, '-', '_' and '/'
/// read as spaces, stop punctuation removed, whitespace collapsed.
/// Idempotent.
std::string merge_key(std::string_view theme);

struct MergeResult {
    ThemeTable table;
    std::vector<std::string> warnings;
};

/// Groups entries by merge_key, keeps the longest description (first wins a
/// tie) and the union of quotes (deduplicated by normalized text), recounts
/// participants over the union, ranks by participant count, then verified
/// quote count (both descending), then first appearance, and keeps the top
/// `target_count`. Fewer groups than requested is reported as a warning.
/// Errors: precondition_violated for an empty table list or target < 1.
MergeResult merge_tables(const std::vector<ThemeTable>& tables, std::size_t target_count, const Dataset& dataset);

}  // namespace quali
