#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "quali/backends.hpp"
#include "quali/chunking.hpp"
#include "quali/corpus.hpp"

namespace quali::tools {

struct MockGenOptions {
    std::size_t themes = 20;
    std::size_t quotes_per_theme = 2;
    std::size_t quote_words = 12;
};

/// Theme names used for generated replies, extended with numbered names
/// when more than twenty are requested.
std::vector<std::string> theme_names(std::size_t count);

/// One well-formed reply per planned batch. Every quote is a verbatim word
/// prefix of a record in that batch, preferring non-moderator records.
MockScript generate_mock_script(const Dataset& dataset, const BatchPlan& plan, const MockGenOptions& options);

}  // namespace quali::tools
