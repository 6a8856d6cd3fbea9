#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <thread>

#include "quali/backends.hpp"
#include "quali/pipeline.hpp"

namespace quali {

struct CreateSessionRequest {
    std::string api_key;
    /// "mock" or "real".
    std::string backend = "mock";
    /// Mock script JSON; falls back to the registry default.
    std::optional<std::string> mock_script;
    std::optional<std::string> endpoint;
    std::optional<std::string> model;
};

struct DatasetSummary {
    std::size_t records = 0;
    std::size_t words = 0;
    std::vector<std::string> speakers;
    std::vector<std::string> warnings;
    std::string format;
};

struct RunRequest {
    PromptConfig config;
    std::optional<std::string> model;
    std::optional<double> temperature;
    std::optional<std::size_t> context_limit;
};

struct RegistryOptions {
    RunOptions run;
    RatesTable rates = RatesTable::defaults();
    std::optional<MockScript> default_mock_script;
    HttpBackendOptions http;
};

/// Concurrent map of live sessions. Each session keeps its key, upload and
/// results in memory only; erase() cancels any run and drops everything.
class SessionRegistry {
public:
    explicit SessionRegistry(RegistryOptions options = {});
    ~SessionRegistry();

    SessionRegistry(const SessionRegistry&) = delete;
    SessionRegistry& operator=(const SessionRegistry&) = delete;

    /// Errors: bad_request, auth_failed.
    std::string create(CreateSessionRequest request);
    /// Stores the upload after a trial parse. Errors: session_not_found,
    /// session_busy, and the ingest errors of the parse.
    DatasetSummary set_dataset(const std::string& id, std::string bytes, std::string file_name, IngestSpec spec);
    /// Starts a background run. Errors: session_not_found, session_busy,
    /// bad_request (no dataset), config_invalid.
    void start_run(const std::string& id, const RunRequest& request);
    /// Errors: session_not_found.
    AnalysisSession snapshot(const std::string& id) const;
    /// Transcript with the session key scrubbed. Errors: session_not_found.
    std::string transcript(const std::string& id) const;
    /// Errors: session_not_found.
    void erase(const std::string& id);
    /// Blocks until the session's run (if any) has finished.
    void wait(const std::string& id) const;

    std::size_t size() const;
    /// Diagnostic listing of live sessions; never includes key material.
    std::string dump() const;

private:
    struct Slot;
    std::shared_ptr<Slot> find(const std::string& id) const;

    RegistryOptions options_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, std::shared_ptr<Slot>> sessions_;
};

struct ServiceOptions {
    /// Loopback address to bind; anything else is refused.
    std::string host = "127.0.0.1";
    /// 0 picks a free port.
    int port = 8641;
    RegistryOptions registry;
    std::size_t max_upload_bytes = 64u << 20;
};

/// HTTP+JSON front end over a SessionRegistry.
class SessionService {
public:
    explicit SessionService(ServiceOptions options = {});
    ~SessionService();

    /// Binds the socket and returns the bound port. Errors: bad_request for a
    /// non-loopback host, io_error when the port cannot be bound.
    int bind();
    /// Serves until stop(); call bind() first.
    void serve();
    /// bind() and serve() on a background thread.
    int start_background();
    void stop();

    SessionRegistry& registry() { return registry_; }

private:
    struct Impl;
    ServiceOptions options_;
    SessionRegistry registry_;
    std::unique_ptr<Impl> impl_;
    std::jthread thread_;
};

bool is_loopback_host(std::string_view host) noexcept;

}  // namespace quali
