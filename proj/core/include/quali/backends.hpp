#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "quali/llmgateway.hpp"
#include "quali/secret.hpp"

namespace quali {

/// One scripted step. `batch` is the 1-based batch number it answers, or
/// nullopt for a wildcard that serves any batch without specific steps left.
struct MockStep {
    std::optional<std::size_t> batch;
    std::optional<std::string> reply;
    std::optional<ErrorKind> error;
};

/// Mock script file: a JSON array of steps
///   [{"match": 1, "reply": "..."}, {"match": 2, "error": "token_limit"}, {"match": "*", ...}]
/// or an object {"latency_ms": 20, "steps": [...]}. Only service-side kinds
/// (network, not_processed, policy_violation, token_limit, rate_limit,
/// refusal, format_error) can be scripted as "error"; row-count and content
/// problems are scripted as replies.
struct MockScript {
    std::vector<MockStep> steps;
    std::chrono::milliseconds latency{0};

    static MockScript from_json(std::string_view json);
    static MockScript from_file(const std::filesystem::path& path);
    std::string to_json() const;
};

/// Deterministic scripted backend. Steps for a batch are consumed in script
/// order, specific steps before wildcards. Once a batch has no steps left its
/// most recent reply is served again; with no reply ever served it answers
/// "not processed".
class MockBackend final : public Backend {
public:
    explicit MockBackend(MockScript script);

    BackendReply complete(const LlmRequest& request) override;
    bool ping() override { return true; }
    std::string name() const override { return "mock"; }
    bool simulated() const override { return true; }

    std::vector<LlmRequest> requests() const;

private:
    std::optional<std::size_t> take_step(std::size_t batch);

    MockScript script_;
    mutable std::mutex mutex_;
    std::vector<bool> used_;
    std::map<std::size_t, std::string> last_reply_;
    std::vector<LlmRequest> log_;
};

struct HttpBackendOptions {
    /// Full chat-completions URL.
    std::string endpoint = "https://api.openai.com/v1/chat/completions";
    std::chrono::seconds timeout{120};
};

/// Chat-completion client over HTTP(S) using the standard request schema
/// (model, messages[], temperature, max_tokens).
class HttpBackend final : public Backend {
public:
    HttpBackend(SecretString api_key, HttpBackendOptions options = {});

    BackendReply complete(const LlmRequest& request) override;
    /// One-token completion; false on 401/403 or transport failure.
    bool ping() override;
    std::string name() const override { return "real"; }

private:
    SecretString api_key_;
    HttpBackendOptions options_;
};

/// JSON request body sent by HttpBackend.
std::string chat_request_body(const LlmRequest& request);

/// Pulls the completion text (or the error message) and usage out of a
/// chat-completion response body.
BackendReply parse_chat_response(int status, std::string_view body);

}  // namespace quali
