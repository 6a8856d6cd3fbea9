#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace quali::tools {

/// Input stream for confirmation prompts and the environment lookup.
struct CliEnv {
    std::istream* in = nullptr;
    bool interactive = false;
    /// QUALI_API_KEY; empty when unset.
    std::string api_key;
};

CliEnv process_env();

/// `args` excludes the program name. Returns the process exit code:
/// 0 success, 1 usage, 2 ingest, 3 gateway abort, 4 parse abort, 5 io.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const CliEnv& env);

}  // namespace quali::tools
