#pragma once

#include <algorithm>
#include <string>
#include <vector>

namespace quali {

enum class Severity { warning, blocking };

struct Finding {
    Severity severity = Severity::warning;
    std::string message;
};

/// Outcome of a validation pass. Validation never throws; it reports.
struct ValidationReport {
    std::vector<Finding> findings;

    bool is_ok() const {
        return std::none_of(findings.begin(), findings.end(),
                            [](const Finding& f) { return f.severity == Severity::blocking; });
    }

    void warn(std::string message) { findings.push_back({Severity::warning, std::move(message)}); }
    void block(std::string message) { findings.push_back({Severity::blocking, std::move(message)}); }
};

}  // namespace quali
