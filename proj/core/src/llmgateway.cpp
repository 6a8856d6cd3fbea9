#include "quali/llmgateway.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>

#include "quali/error.hpp"
#include "quali/promptforge.hpp"
#include "quali/text.hpp"

namespace quali {

std::string_view to_string(ErrorKind k) noexcept {
    switch (k) {
        case ErrorKind::network: return "network";
        case ErrorKind::not_processed: return "not_processed";
        case ErrorKind::policy_violation: return "policy_violation";
        case ErrorKind::token_limit: return "token_limit";
        case ErrorKind::rate_limit: return "rate_limit";
        case ErrorKind::refusal: return "refusal";
        case ErrorKind::count_mismatch: return "count_mismatch";
        case ErrorKind::format_error: return "format_error";
        case ErrorKind::content_misread: return "content_misread";
    }
    return "network";
}

std::optional<ErrorKind> parse_error_kind(std::string_view s) noexcept {
    constexpr std::array kinds = {ErrorKind::network,        ErrorKind::not_processed, ErrorKind::policy_violation,
                                  ErrorKind::token_limit,    ErrorKind::rate_limit,    ErrorKind::refusal,
                                  ErrorKind::count_mismatch, ErrorKind::format_error,  ErrorKind::content_misread};
    for (auto k : kinds) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

std::string_view canonical_message(ErrorKind k) noexcept {
    switch (k) {
        case ErrorKind::network: return "Network errors";
        case ErrorKind::not_processed:
            return "Something went wrong. If this issue persists please contact us through our help center at "
                   "help.openai.com";
        case ErrorKind::policy_violation:
            return "This content may violate our content policy. If you believe this to be in error, please "
                   "submit your feedback \xE2\x80\x94 your input will aid our research in this area.";
        case ErrorKind::token_limit:
            return "The message you submitted was too long, please reload the conversation and submit "
                   "something shorter.";
        case ErrorKind::rate_limit:
            return "Only one message at a time. Please allow any other responses to complete before sending "
                   "another message, or wait one minute.";
        case ErrorKind::refusal: return "I'm sorry, but I can't assist with that request.";
        case ErrorKind::count_mismatch: return "Mismatch in the amount of input and output content";
        case ErrorKind::format_error: return "The output format does not match the requirements";
        case ErrorKind::content_misread: return "The output does not reflect the supplied data";
    }
    return "";
}

namespace {

struct Pattern {
    std::string_view needle;  // casefolded
    ErrorKind kind;
};

// Matched against the casefolded message, in order.
constexpr std::array kPatterns = {
    Pattern{"message you submitted was too long", ErrorKind::token_limit},
    Pattern{"maximum context length", ErrorKind::token_limit},
    Pattern{"context_length_exceeded", ErrorKind::token_limit},
    Pattern{"only one message at a time", ErrorKind::rate_limit},
    Pattern{"rate limit", ErrorKind::rate_limit},
    Pattern{"rate_limit_exceeded", ErrorKind::rate_limit},
    Pattern{"may violate our content policy", ErrorKind::policy_violation},
    Pattern{"content_policy_violation", ErrorKind::policy_violation},
    Pattern{"content_filter", ErrorKind::policy_violation},
    Pattern{"something went wrong", ErrorKind::not_processed},
    Pattern{"network error", ErrorKind::network},
};

constexpr std::array<std::string_view, 3> kRefusals = {
    "i'm sorry, but i can't assist",
    "i'm sorry, but i won't be able to assist",
    "i'm sorry, but i cannot assist",
};

// Replies that contain a table are answers, whatever phrases they quote.
bool looks_like_table(std::string_view s) {
    return s.find('|') != std::string_view::npos;
}

}  // namespace

GatewayError classify_error(std::string_view raw_message, int transport_status) {
    const bool transport_ok = transport_status >= 200 && transport_status < 300;
    const auto folded = text::casefold(raw_message);
    if (!transport_ok || !looks_like_table(raw_message)) {
        for (const auto& p : kPatterns) {
            if (folded.find(p.needle) != std::string::npos) {
                return GatewayError::of(p.kind, std::string(raw_message));
            }
        }
    }
    if (transport_status == 429) return GatewayError::of(ErrorKind::rate_limit, std::string(raw_message));
    if (!transport_ok) return GatewayError::of(ErrorKind::network, std::string(raw_message));
    if (!looks_like_table(raw_message)) {
        const auto lead = text::trim(folded);
        for (auto r : kRefusals) {
            if (lead.find(r) != std::string_view::npos) {
                return GatewayError::of(ErrorKind::refusal, std::string(raw_message));
            }
        }
    }
    return GatewayError::of(ErrorKind::format_error, std::string(raw_message));
}

std::string_view to_string(ActionKind a) noexcept {
    switch (a) {
        case ActionKind::retry_backoff: return "retry_backoff";
        case ActionKind::wait_then_retry: return "wait_then_retry";
        case ActionKind::resplit_smaller: return "resplit_smaller";
        case ActionKind::reclarify_prompt: return "reclarify_prompt";
        case ActionKind::reinject_tail: return "reinject_tail";
        case ActionKind::reassert_format: return "reassert_format";
        case ActionKind::abort: return "abort";
    }
    return "abort";
}

ActionKind default_action(ErrorKind k) noexcept {
    switch (k) {
        case ErrorKind::network:
        case ErrorKind::not_processed: return ActionKind::retry_backoff;
        case ErrorKind::rate_limit: return ActionKind::wait_then_retry;
        case ErrorKind::token_limit: return ActionKind::resplit_smaller;
        case ErrorKind::policy_violation:
        case ErrorKind::refusal: return ActionKind::reclarify_prompt;
        case ErrorKind::count_mismatch: return ActionKind::reinject_tail;
        case ErrorKind::format_error:
        case ErrorKind::content_misread: return ActionKind::reassert_format;
    }
    return ActionKind::abort;
}

RecoveryAction recovery_policy(const GatewayError& error, const AttemptState& attempt,
                               const RecoveryLimits& limits) {
    const auto action = default_action(error.kind);
    const auto used = attempt.retries_for(action);
    auto abort_with = [&](std::string why) {
        RecoveryAction r;
        r.action = ActionKind::abort;
        r.reason = std::string(to_string(error.kind)) + ": " + std::move(why);
        return r;
    };

    RecoveryAction r;
    r.action = action;
    switch (action) {
        case ActionKind::retry_backoff: {
            if (used >= limits.backoff_retries) {
                return abort_with("gave up after " + std::to_string(used) + " retries");
            }
            auto delay = limits.backoff_base;
            for (int i = 0; i < used; ++i) delay *= limits.backoff_factor;
            r.delay = delay;
            r.reason = "retry " + std::to_string(used + 1) + " of " + std::to_string(limits.backoff_retries);
            return r;
        }
        case ActionKind::wait_then_retry:
            if (used >= limits.wait_retries) {
                return abort_with("still rate limited after " + std::to_string(used) + " waits");
            }
            r.delay = limits.rate_limit_wait;
            r.reason = "waiting before resending";
            return r;
        case ActionKind::resplit_smaller: {
            const auto halved = attempt.effective_budget / 2;
            if (halved < kMinFragmentTokens) {
                return abort_with("budget of " + std::to_string(halved) +
                                  " tokens is below the minimum fragment size");
            }
            r.new_budget = halved;
            r.reason = "splitting into sections of at most " + std::to_string(halved) + " tokens";
            return r;
        }
        case ActionKind::reclarify_prompt:
            if (used >= limits.reclarify_retries) return abort_with("refused after clarification");
            r.reason = "prompt clarified as data for analysis";
            return r;
        case ActionKind::reinject_tail:
            if (used >= limits.reinject_retries) return abort_with("row count still wrong after re-sending");
            r.reason = "re-sending unprocessed records with overlap";
            return r;
        case ActionKind::reassert_format:
            if (used >= limits.reassert_retries) return abort_with("output format still wrong");
            r.reason = "output specification repeated";
            return r;
        case ActionKind::abort:
            break;
    }
    return abort_with("no recovery available");
}

bool fits_context(const LlmRequest& request, const TokenCounter& counter) {
    return counter(request.prompt) + counter(request.payload) + request.max_completion_tokens <=
           request.context_limit;
}

SubmitResult submit(const LlmRequest& request, Backend& backend, const TokenCounter& counter) {
    if (!fits_context(request, counter)) {
        throw Error(ErrorCode::precondition_violated,
                    "request for batch " + std::to_string(request.batch_number) + " exceeds the " +
                        std::to_string(request.context_limit) + "-token context");
    }
    BackendReply reply;
    try {
        reply = backend.complete(request);
    } catch (const std::exception& e) {
        return GatewayError::of(ErrorKind::network, e.what());
    }
    const bool ok = reply.status >= 200 && reply.status < 300;
    auto error = classify_error(reply.text, reply.status);
    if (ok && error.kind == ErrorKind::format_error) {
        RawResponse raw;
        raw.text = std::move(reply.text);
        raw.usage = reply.usage.value_or(
            TokenUsage{counter(request.prompt) + counter(request.payload), counter(raw.text)});
        return raw;
    }
    return error;
}

// ---- cost ----------------------------------------------------------------------

RatesTable RatesTable::defaults() {
    RatesTable t;
    t.set(std::string(kDefaultModel), Rates{0.0015, 0.002});
    t.set("gpt-4", Rates{0.03, 0.06});
    return t;
}

RatesTable RatesTable::from_json(std::string_view json) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::format_mismatch, std::string("rates file is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw Error(ErrorCode::format_mismatch, "rates file must be a JSON object");
    RatesTable t;
    for (const auto& [model, entry] : doc.items()) {
        if (!entry.is_object() || !entry.contains("input_per_1k") || !entry.contains("output_per_1k") ||
            !entry["input_per_1k"].is_number() || !entry["output_per_1k"].is_number()) {
            throw Error(ErrorCode::format_mismatch,
                        "rates entry '" + model + "' needs numeric input_per_1k and output_per_1k");
        }
        t.set(model, Rates{entry["input_per_1k"].get<double>(), entry["output_per_1k"].get<double>()});
    }
    if (t.table_.empty()) throw Error(ErrorCode::format_mismatch, "rates file has no entries");
    return t;
}

RatesTable RatesTable::from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::file_not_found, "rates file not found: " + path.string());
    return from_json(std::string(std::istreambuf_iterator<char>(in), {}));
}

Rates RatesTable::lookup(std::string_view model_id) const {
    if (const auto it = table_.find(model_id); it != table_.end()) return it->second;
    const Rates* best = nullptr;
    std::size_t best_len = 0;
    for (const auto& [name, rates] : table_) {
        if (model_id.starts_with(name) && name.size() > best_len) {
            best = &rates;
            best_len = name.size();
        }
    }
    if (best) return *best;
    if (const auto it = table_.find(kDefaultModel); it != table_.end()) return it->second;
    return Rates{};
}

std::string format_usd(std::int64_t micros) {
    const bool negative = micros < 0;
    const auto abs = negative ? -micros : micros;
    auto frac = std::to_string(abs % 1000000);
    frac.insert(0, 6 - frac.size(), '0');
    return std::string(negative ? "-$" : "$") + std::to_string(abs / 1000000) + "." + frac;
}

CostEstimate cost_for_tokens(std::size_t input_tokens, std::size_t output_tokens, const Rates& rates) {
    // Rates in nano-dollars per 1K tokens; products are in pico-dollars.
    const auto in_nano = static_cast<std::int64_t>(std::llround(rates.input_per_1k * 1e9));
    const auto out_nano = static_cast<std::int64_t>(std::llround(rates.output_per_1k * 1e9));
    const std::int64_t pico = static_cast<std::int64_t>(input_tokens) * in_nano +
                              static_cast<std::int64_t>(output_tokens) * out_nano;
    CostEstimate c;
    c.input_tokens = input_tokens;
    c.output_tokens = output_tokens;
    c.rates = rates;
    c.total_micros = (pico + 500000) / 1000000;
    return c;
}

CostEstimate estimate_cost(const std::vector<std::size_t>& batch_tokens, std::size_t prompt_tokens,
                           std::size_t completion_reserve, const Rates& rates) {
    std::size_t input = 0;
    for (auto t : batch_tokens) input += prompt_tokens + t;
    return cost_for_tokens(input, batch_tokens.size() * completion_reserve, rates);
}

CostEstimate estimate_cost(const BatchPlan& plan, const PromptBundle& bundle, const Rates& rates,
                           const TokenCounter& counter) {
    std::vector<std::size_t> tokens;
    tokens.reserve(plan.batches.size());
    for (const auto& b : plan.batches) tokens.push_back(b.estimated_tokens);
    return estimate_cost(tokens, counter(bundle.assembled), plan.budget.completion_reserve, rates);
}

}  // namespace quali
