#include "quali/error.hpp"

namespace quali {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::file_not_found: return "FileNotFound";
        case ErrorCode::format_mismatch: return "FormatMismatch";
        case ErrorCode::mapping_error: return "MappingError";
        case ErrorCode::empty_dataset: return "EmptyDataset";
        case ErrorCode::budget_too_small: return "BudgetTooSmall";
        case ErrorCode::precondition_violated: return "PreconditionViolated";
        case ErrorCode::config_invalid: return "ConfigInvalid";
        case ErrorCode::io_error: return "IoError";
        case ErrorCode::header_mismatch: return "HeaderMismatch";
        case ErrorCode::row_arity_error: return "RowArityError";
        case ErrorCode::session_not_found: return "SessionNotFound";
        case ErrorCode::session_busy: return "SessionBusy";
        case ErrorCode::auth_failed: return "AuthFailed";
        case ErrorCode::bad_request: return "BadRequest";
    }
    return "Unknown";
}

}  // namespace quali
