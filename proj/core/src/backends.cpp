#include "quali/backends.hpp"

#include <fstream>
#include <iterator>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "quali/error.hpp"

namespace quali {

using nlohmann::json;

// ---- mock script ---------------------------------------------------------------

namespace {

MockStep parse_step(const json& j, std::size_t position) {
    const auto where = "mock step " + std::to_string(position);
    if (!j.is_object()) throw Error(ErrorCode::format_mismatch, where + " is not an object");
    MockStep step;
    if (!j.contains("match")) throw Error(ErrorCode::format_mismatch, where + " has no \"match\"");
    const auto& m = j["match"];
    if (m.is_number_unsigned() && m.get<std::size_t>() >= 1) {
        step.batch = m.get<std::size_t>();
    } else if (m.is_string() && m.get<std::string>() == "*") {
        step.batch.reset();
    } else {
        throw Error(ErrorCode::format_mismatch, where + ": match must be a batch number >= 1 or \"*\"");
    }
    const bool has_reply = j.contains("reply");
    const bool has_error = j.contains("error");
    if (has_reply == has_error) {
        throw Error(ErrorCode::format_mismatch, where + " needs exactly one of \"reply\" or \"error\"");
    }
    if (has_reply) {
        if (!j["reply"].is_string()) throw Error(ErrorCode::format_mismatch, where + ": reply must be a string");
        step.reply = j["reply"].get<std::string>();
    } else {
        const auto name = j["error"].is_string() ? j["error"].get<std::string>() : std::string{};
        const auto kind = parse_error_kind(name);
        if (!kind) throw Error(ErrorCode::format_mismatch, where + ": unknown error kind '" + name + "'");
        if (*kind == ErrorKind::count_mismatch || *kind == ErrorKind::content_misread) {
            throw Error(ErrorCode::format_mismatch,
                        where + ": " + name + " depends on reply content; script it as a reply");
        }
        step.error = *kind;
    }
    return step;
}

BackendReply scripted_failure(ErrorKind kind) {
    BackendReply r;
    r.text = std::string(canonical_message(kind));
    switch (kind) {
        case ErrorKind::network: r.status = 0; break;
        case ErrorKind::not_processed: r.status = 500; break;
        case ErrorKind::policy_violation:
        case ErrorKind::token_limit: r.status = 400; break;
        case ErrorKind::rate_limit: r.status = 429; break;
        case ErrorKind::format_error: r.text = "The output is not numeric only"; break;
        default: break;
    }
    return r;
}

}  // namespace

MockScript MockScript::from_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::format_mismatch, std::string("mock script is not valid JSON: ") + e.what());
    }
    MockScript script;
    const json* steps = &doc;
    if (doc.is_object()) {
        if (doc.contains("latency_ms")) script.latency = std::chrono::milliseconds(doc["latency_ms"].get<long>());
        if (doc.contains("steps")) steps = &doc["steps"];
        else if (doc.contains("entries")) steps = &doc["entries"];
        else throw Error(ErrorCode::format_mismatch, "mock script object needs a \"steps\" array");
    }
    if (!steps->is_array()) throw Error(ErrorCode::format_mismatch, "mock script must be a JSON array of steps");
    for (std::size_t i = 0; i < steps->size(); ++i) script.steps.push_back(parse_step((*steps)[i], i));
    return script;
}

MockScript MockScript::from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::file_not_found, "mock script not found: " + path.string());
    return from_json(std::string(std::istreambuf_iterator<char>(in), {}));
}

std::string MockScript::to_json() const {
    json steps_json = json::array();
    for (const auto& s : steps) {
        json j;
        if (s.batch) j["match"] = *s.batch;
        else j["match"] = "*";
        if (s.reply) j["reply"] = *s.reply;
        if (s.error) j["error"] = std::string(quali::to_string(*s.error));
        steps_json.push_back(std::move(j));
    }
    if (latency.count() == 0) return steps_json.dump(2) + "\n";
    json doc;
    doc["latency_ms"] = latency.count();
    doc["steps"] = std::move(steps_json);
    return doc.dump(2) + "\n";
}

MockBackend::MockBackend(MockScript script)
    : script_(std::move(script)), used_(script_.steps.size(), false) {}

std::optional<std::size_t> MockBackend::take_step(std::size_t batch) {
    for (std::size_t i = 0; i < script_.steps.size(); ++i) {
        if (!used_[i] && script_.steps[i].batch == batch) {
            used_[i] = true;
            return i;
        }
    }
    for (std::size_t i = 0; i < script_.steps.size(); ++i) {
        if (!used_[i] && !script_.steps[i].batch) {
            used_[i] = true;
            return i;
        }
    }
    return std::nullopt;
}

BackendReply MockBackend::complete(const LlmRequest& request) {
    if (script_.latency.count() > 0) std::this_thread::sleep_for(script_.latency);
    std::lock_guard lock(mutex_);
    log_.push_back(request);
    const auto index = take_step(request.batch_number);
    if (!index) {
        if (const auto it = last_reply_.find(request.batch_number); it != last_reply_.end()) {
            return BackendReply{200, it->second, std::nullopt};
        }
        return scripted_failure(ErrorKind::not_processed);
    }
    const auto& step = script_.steps[*index];
    if (step.error) return scripted_failure(*step.error);
    last_reply_[request.batch_number] = *step.reply;
    return BackendReply{200, *step.reply, std::nullopt};
}

std::vector<LlmRequest> MockBackend::requests() const {
    std::lock_guard lock(mutex_);
    return log_;
}

// ---- HTTP ------------------------------------------------------------------------

std::string chat_request_body(const LlmRequest& request) {
    json body;
    body["model"] = request.model_id;
    body["messages"] = json::array({
        json{{"role", "system"}, {"content", request.prompt}},
        json{{"role", "user"}, {"content", request.payload}},
    });
    body["temperature"] = request.temperature;
    body["max_tokens"] = request.max_completion_tokens;
    return body.dump();
}

BackendReply parse_chat_response(int status, std::string_view body) {
    BackendReply reply;
    reply.status = status;
    json doc;
    try {
        doc = json::parse(body);
    } catch (const json::exception&) {
        reply.text = std::string(body);
        if (status >= 200 && status < 300) reply.status = 502;
        return reply;
    }
    if (doc.contains("error") && doc["error"].is_object()) {
        const auto& e = doc["error"];
        reply.text = e.value("message", std::string{});
        if (e.contains("code") && e["code"].is_string()) reply.text += " (" + e["code"].get<std::string>() + ")";
        if (status >= 200 && status < 300) reply.status = 500;
        return reply;
    }
    try {
        const auto& choice = doc.at("choices").at(0);
        const auto& content = choice.at("message").at("content");
        reply.text = content.is_string() ? content.get<std::string>() : std::string{};
        if (choice.value("finish_reason", std::string{}) == "content_filter" && reply.text.empty()) {
            reply.text = std::string(canonical_message(ErrorKind::policy_violation));
            reply.status = 400;
        }
    } catch (const json::exception&) {
        reply.text = std::string(body);
        reply.status = 502;
        return reply;
    }
    if (doc.contains("usage") && doc["usage"].is_object()) {
        TokenUsage u;
        u.prompt_tokens = doc["usage"].value("prompt_tokens", std::size_t{0});
        u.completion_tokens = doc["usage"].value("completion_tokens", std::size_t{0});
        reply.usage = u;
    }
    return reply;
}

namespace {

struct ParsedUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

ParsedUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(ErrorCode::bad_request, "endpoint URL must include a scheme: " + url);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

HttpBackend::HttpBackend(SecretString api_key, HttpBackendOptions options)
    : api_key_(std::move(api_key)), options_(std::move(options)) {}

BackendReply HttpBackend::complete(const LlmRequest& request) {
    const auto url = split_url(options_.endpoint);
    httplib::Client client(url.origin);
    client.set_connection_timeout(options_.timeout);
    client.set_read_timeout(options_.timeout);
    client.set_write_timeout(options_.timeout);
    client.set_bearer_token_auth(std::string(api_key_.reveal()));
    auto res = client.Post(url.path, chat_request_body(request), "application/json");
    if (!res) {
        return BackendReply{0, "Network errors: " + httplib::to_string(res.error()), std::nullopt};
    }
    return parse_chat_response(res->status, res->body);
}

bool HttpBackend::ping() {
    LlmRequest probe;
    probe.prompt = "Reply with OK.";
    probe.payload = "ping";
    probe.max_completion_tokens = 1;
    probe.temperature = 0.0;
    const auto reply = complete(probe);
    return reply.status >= 200 && reply.status < 300;
}

}  // namespace quali
