#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace quali {

/// Failure classes raised by the pipeline stages outside the model gateway.
/// Gateway failures travel as values (see GatewayError) and never throw.
enum class ErrorCode {
    file_not_found,
    format_mismatch,
    mapping_error,
    empty_dataset,
    budget_too_small,
    precondition_violated,
    config_invalid,
    io_error,
    header_mismatch,
    row_arity_error,
    session_not_found,
    session_busy,
    auth_failed,
    bad_request,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace quali
