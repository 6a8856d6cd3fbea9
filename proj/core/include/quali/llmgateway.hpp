#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "quali/chunking.hpp"

namespace quali {

struct PromptBundle;

// ---- failure taxonomy ------------------------------------------------------

enum class ErrorKind {
    network,
    not_processed,
    policy_violation,
    token_limit,
    rate_limit,
    refusal,
    count_mismatch,
    format_error,
    content_misread,
};

std::string_view to_string(ErrorKind k) noexcept;
std::optional<ErrorKind> parse_error_kind(std::string_view s) noexcept;

/// network, not_processed and rate_limit are transient and worth retrying
/// as-is; every other kind needs the request transformed first.
constexpr bool is_retryable(ErrorKind k) noexcept {
    return k == ErrorKind::network || k == ErrorKind::not_processed || k == ErrorKind::rate_limit;
}

struct GatewayError {
    ErrorKind kind = ErrorKind::network;
    std::string raw_message;
    bool retryable = true;

    static GatewayError of(ErrorKind kind, std::string raw_message) {
        return GatewayError{kind, std::move(raw_message), is_retryable(kind)};
    }
};

/// Canonical service message for a kind, as the chat service phrases it.
std::string_view canonical_message(ErrorKind k) noexcept;

/// Total classifier. Known service messages are matched first; otherwise a
/// failed transport (status 0 or non-2xx) is `network`, a short reply
/// opening with an apology-refusal is `refusal`, and anything else is
/// `format_error`, left for the table parser to confirm.
GatewayError classify_error(std::string_view raw_message, int transport_status);

// ---- recovery ----------------------------------------------------------------

enum class ActionKind {
    retry_backoff,
    wait_then_retry,
    resplit_smaller,
    reclarify_prompt,
    reinject_tail,
    reassert_format,
    abort,
};

std::string_view to_string(ActionKind a) noexcept;

/// The default response to each error kind.
ActionKind default_action(ErrorKind k) noexcept;

struct RecoveryLimits {
    int backoff_retries = 5;
    std::chrono::milliseconds backoff_base{1000};
    int backoff_factor = 2;
    int wait_retries = 5;
    std::chrono::milliseconds rate_limit_wait{60000};
    int reclarify_retries = 2;
    int reinject_retries = 3;
    int reassert_retries = 3;
};

/// Per-request recovery bookkeeping. Each in-flight request owns one.
struct AttemptState {
    std::map<ActionKind, int> retries;
    std::size_t effective_budget = 0;
    std::size_t batch_records = 0;

    int retries_for(ActionKind a) const {
        const auto it = retries.find(a);
        return it == retries.end() ? 0 : it->second;
    }
};

struct RecoveryAction {
    ActionKind action = ActionKind::abort;
    /// retry_backoff / wait_then_retry: how long to wait before resending.
    std::chrono::milliseconds delay{0};
    /// resplit_smaller: the budget for the smaller pieces.
    std::size_t new_budget = 0;
    std::string reason;
};

RecoveryAction recovery_policy(const GatewayError& error, const AttemptState& attempt,
                               const RecoveryLimits& limits = {});

// ---- requests and backends -------------------------------------------------

inline constexpr std::string_view kDefaultModel = "gpt-3.5-turbo";

struct LlmRequest {
    std::string model_id{kDefaultModel};
    std::string prompt;
    std::string payload;
    double temperature = 0.2;
    std::size_t max_completion_tokens = 1200;
    std::size_t context_limit = 4096;
    /// 1-based batch the request belongs to; the mock backend keys on it.
    std::size_t batch_number = 1;
};

/// estimate(prompt) + estimate(payload) + max_completion_tokens <= context_limit.
bool fits_context(const LlmRequest& request, const TokenCounter& counter = heuristic_counter());

struct TokenUsage {
    std::size_t prompt_tokens = 0;
    std::size_t completion_tokens = 0;
};

/// What a backend hands back before classification. status 0 means the
/// transport failed before any HTTP status was received.
struct BackendReply {
    int status = 200;
    std::string text;
    std::optional<TokenUsage> usage;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual BackendReply complete(const LlmRequest& request) = 0;
    /// Minimal authenticated call used to validate a key.
    virtual bool ping() = 0;
    virtual std::string name() const = 0;
    /// True when waits should run on a virtual clock (scripted backends).
    virtual bool simulated() const { return false; }
};

struct RawResponse {
    std::string text;
    TokenUsage usage;
};

using SubmitResult = std::variant<RawResponse, GatewayError>;

/// Sends one request. Remote failures come back as GatewayError values; a
/// request breaking the context invariant throws Error(precondition_violated)
/// before anything is dispatched.
SubmitResult submit(const LlmRequest& request, Backend& backend,
                    const TokenCounter& counter = heuristic_counter());

// ---- cost ----------------------------------------------------------------------

/// Dollars per 1K tokens.
struct Rates {
    double input_per_1k = 0.0015;
    double output_per_1k = 0.002;
};

class RatesTable {
public:
    /// gpt-3.5-turbo at $0.0015 / $0.002 and gpt-4 at $0.03 / $0.06 per 1K
    /// input / output tokens.
    static RatesTable defaults();
    /// JSON object: {"<model>": {"input_per_1k": x, "output_per_1k": y}, ...}.
    static RatesTable from_json(std::string_view json);
    static RatesTable from_file(const std::filesystem::path& path);

    /// Exact model match, else the longest model name that prefixes
    /// `model_id`, else the gpt-3.5-turbo entry.
    Rates lookup(std::string_view model_id) const;
    void set(std::string model_id, Rates rates) { table_[std::move(model_id)] = rates; }

private:
    std::map<std::string, Rates, std::less<>> table_;
};

struct CostEstimate {
    std::size_t input_tokens = 0;
    std::size_t output_tokens = 0;
    Rates rates;
    /// Total in millionths of a dollar, rounded half-up.
    std::int64_t total_micros = 0;

    double total() const { return static_cast<double>(total_micros) / 1e6; }
};

/// "$0.021150"
std::string format_usd(std::int64_t micros);

CostEstimate cost_for_tokens(std::size_t input_tokens, std::size_t output_tokens, const Rates& rates);

/// input = sum over batches of (prompt estimate + batch estimate);
/// output = batches * completion_reserve.
CostEstimate estimate_cost(const BatchPlan& plan, const PromptBundle& bundle, const Rates& rates,
                           const TokenCounter& counter = heuristic_counter());

CostEstimate estimate_cost(const std::vector<std::size_t>& batch_tokens, std::size_t prompt_tokens,
                           std::size_t completion_reserve, const Rates& rates);

}  // namespace quali
