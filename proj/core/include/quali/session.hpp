#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "quali/chunking.hpp"
#include "quali/corpus.hpp"
#include "quali/llmgateway.hpp"
#include "quali/promptforge.hpp"
#include "quali/themeparse.hpp"

namespace quali {

/// idle -> running -> {complete | aborted}; running <-> needs_attention.
enum class RunStatus { idle, running, needs_attention, complete, aborted };
std::string_view to_string(RunStatus s) noexcept;

/// Failure classes, numbered as the command-line exit codes.
enum class FailureClass { usage = 1, ingest = 2, gateway = 3, parse = 4, io = 5 };
std::string_view to_string(FailureClass f) noexcept;

enum class BatchStatus { pending, running, recovering, done, failed };
std::string_view to_string(BatchStatus s) noexcept;

struct BatchState {
    std::size_t number = 1;
    BatchStatus status = BatchStatus::pending;
    std::size_t attempts = 0;
    std::optional<ErrorKind> last_error;
};

/// One request/response round trip. `label` names the unit sent: "2" for a
/// planned batch, "2.1" for the first piece of a re-split batch, "2+tail"
/// for a follow-up request.
struct Exchange {
    std::size_t batch = 1;
    std::string label;
    std::size_t attempt = 1;
    std::string prompt;
    std::string payload;
    std::string response;
    std::optional<ErrorKind> error;
};

struct RecoveryEntry {
    std::size_t batch = 1;
    std::string label;
    ErrorKind error = ErrorKind::network;
    ActionKind action = ActionKind::abort;
    std::string detail;
    std::chrono::milliseconds delay{0};
};

struct AbortCause {
    FailureClass failure = FailureClass::gateway;
    /// Machine-readable cause: an ErrorCode name or a gateway ErrorKind.
    std::string code;
    std::string message;
};

struct AnalysisSession {
    std::string session_id;
    Dataset dataset;
    PromptConfig config;
    BatchPlan plan;
    RunStatus status = RunStatus::idle;
    std::vector<BatchState> batches;
    std::vector<Exchange> exchanges;
    std::vector<ThemeTable> results;
    std::optional<ThemeTable> merged;
    std::optional<ProvenanceReport> provenance;
    CostEstimate cost;
    std::vector<RecoveryEntry> recovery_log;
    std::optional<AbortCause> abort;
    std::vector<std::string> warnings;
    std::string preset_version;
    std::string model_id{kDefaultModel};
    std::string backend;
};

}  // namespace quali
