#include "quali/session_service.hpp"

#include <arpa/inet.h>

#include <mutex>
#include <random>
#include <sstream>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "quali/error.hpp"
#include "quali/exporter.hpp"
#include "quali/secret.hpp"
#include "quali/text.hpp"

namespace quali {

using nlohmann::json;

bool is_loopback_host(std::string_view host) noexcept {
    if (host == "localhost" || host == "::1") return true;
    in_addr addr{};
    if (::inet_pton(AF_INET, std::string(host).c_str(), &addr) != 1) return false;
    return (ntohl(addr.s_addr) >> 24) == 127;
}

// ---- registry -------------------------------------------------------------------

struct SessionRegistry::Slot {
    std::mutex mutex;
    SecretString api_key;
    std::string backend_kind;
    std::optional<MockScript> script;
    HttpBackendOptions http;
    std::string model;
    std::string upload;
    std::string upload_name;
    IngestSpec ingest;
    bool has_dataset = false;
    SessionState state;
    std::jthread worker;

    void wipe_upload() {
        volatile char* p = upload.data();
        for (std::size_t i = 0; i < upload.size(); ++i) p[i] = 0;
        upload.clear();
        upload.shrink_to_fit();
    }
};

namespace {

std::string new_session_id() {
    static std::mutex m;
    static std::random_device rd;
    static std::mt19937_64 gen(rd());
    std::lock_guard lock(m);
    std::ostringstream out;
    out << std::hex;
    for (int i = 0; i < 2; ++i) {
        auto v = gen() ^ (static_cast<std::uint64_t>(rd()) << 32);
        for (int k = 0; k < 16; ++k) {
            out << ((v >> (60 - 4 * k)) & 0xF);
        }
    }
    return out.str();
}

bool is_active(RunStatus s) {
    return s == RunStatus::running || s == RunStatus::needs_attention;
}

}  // namespace

SessionRegistry::SessionRegistry(RegistryOptions options) : options_(std::move(options)) {}

SessionRegistry::~SessionRegistry() {
    std::map<std::string, std::shared_ptr<Slot>> doomed;
    {
        std::unique_lock lock(mutex_);
        doomed.swap(sessions_);
    }
    for (auto& [id, slot] : doomed) {
        slot->worker.request_stop();
        if (slot->worker.joinable()) slot->worker.join();
        slot->wipe_upload();
    }
}

std::shared_ptr<SessionRegistry::Slot> SessionRegistry::find(const std::string& id) const {
    std::shared_lock lock(mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::session_not_found, "no session " + id);
    return it->second;
}

std::string SessionRegistry::create(CreateSessionRequest request) {
    auto slot = std::make_shared<Slot>();
    slot->backend_kind = request.backend;
    slot->model = request.model.value_or(options_.run.model_id);
    slot->http = options_.http;
    if (request.endpoint) slot->http.endpoint = *request.endpoint;
    if (request.backend == "mock") {
        if (request.mock_script) {
            slot->script = MockScript::from_json(*request.mock_script);
        } else if (options_.default_mock_script) {
            slot->script = options_.default_mock_script;
        } else {
            slot->script = MockScript{};
        }
    } else if (request.backend == "real") {
        if (request.api_key.empty()) throw Error(ErrorCode::auth_failed, "an API key is required");
        HttpBackend probe(SecretString(std::string(request.api_key)), slot->http);
        if (!probe.ping()) throw Error(ErrorCode::auth_failed, "the API key was rejected or the service is unreachable");
    } else {
        throw Error(ErrorCode::bad_request, "backend must be \"mock\" or \"real\"");
    }
    slot->api_key = SecretString(std::move(request.api_key));
    auto id = new_session_id();
    slot->state.update([&](AnalysisSession& s) {
        s.session_id = id;
        s.backend = slot->backend_kind;
        s.model_id = slot->model;
    });
    std::unique_lock lock(mutex_);
    sessions_.emplace(id, std::move(slot));
    return id;
}

DatasetSummary SessionRegistry::set_dataset(const std::string& id, std::string bytes, std::string file_name,
                                            IngestSpec spec) {
    auto slot = find(id);
    std::lock_guard lock(slot->mutex);
    if (is_active(slot->state.read([](const AnalysisSession& s) { return s.status; }))) {
        throw Error(ErrorCode::session_busy, "a run is in progress");
    }
    const auto ds = ingest_bytes(bytes, file_name, spec);
    DatasetSummary summary;
    summary.records = ds.records.size();
    for (const auto& r : ds.records) summary.words += text::count_words(r.text);
    summary.speakers = ds.speaker_labels();
    for (const auto& f : validate_dataset(ds).findings) summary.warnings.push_back(f.message);
    summary.format = std::string(to_string(spec.format.value_or(
        guess_format(file_name).value_or(FormatGuess{InputFormat::plain_text}).format)));
    slot->wipe_upload();
    slot->upload = std::move(bytes);
    slot->upload_name = std::move(file_name);
    slot->ingest = std::move(spec);
    slot->has_dataset = true;
    return summary;
}

void SessionRegistry::start_run(const std::string& id, const RunRequest& request) {
    auto slot = find(id);
    std::lock_guard lock(slot->mutex);
    const bool started = slot->state.update([](AnalysisSession& s) {
        if (is_active(s.status)) return false;
        s.status = RunStatus::running;
        return true;
    });
    if (!started) throw Error(ErrorCode::session_busy, "a run is already in progress for this session");
    auto revert = [&] {
        slot->state.update([](AnalysisSession& s) { s.status = RunStatus::idle; });
    };
    if (!slot->has_dataset) {
        revert();
        throw Error(ErrorCode::bad_request, "upload a dataset before starting a run");
    }
    for (const auto& f : validate_config(request.config).findings) {
        if (f.severity == Severity::blocking) {
            revert();
            throw Error(ErrorCode::config_invalid, f.message);
        }
    }

    RunOptions opts = options_.run;
    opts.model_id = request.model.value_or(slot->model);
    opts.rates = options_.rates.lookup(opts.model_id);
    if (request.temperature) opts.temperature = *request.temperature;
    if (request.context_limit) opts.budget.context_limit = *request.context_limit;

    std::unique_ptr<Backend> backend;
    if (slot->backend_kind == "mock") {
        backend = std::make_unique<MockBackend>(slot->script.value_or(MockScript{}));
    } else {
        backend = std::make_unique<HttpBackend>(SecretString(std::string(slot->api_key.reveal())), slot->http);
    }

    if (slot->worker.joinable()) slot->worker.join();
    Slot* raw = slot.get();
    auto ingest = [raw] { return ingest_bytes(raw->upload, raw->upload_name, raw->ingest); };
    slot->worker = std::jthread([raw, ingest, config = request.config, opts, backend = std::move(backend)](
                                    std::stop_token stop) mutable {
        auto clock = clock_for(*backend);
        run_analysis(raw->state, ingest, config, *backend, *clock, opts, stop);
    });
}

AnalysisSession SessionRegistry::snapshot(const std::string& id) const {
    return find(id)->state.snapshot();
}

std::string SessionRegistry::transcript(const std::string& id) const {
    auto slot = find(id);
    const auto s = slot->state.snapshot();
    return render_transcript(s, slot->api_key.reveal());
}

void SessionRegistry::wait(const std::string& id) const {
    auto slot = find(id);
    std::lock_guard lock(slot->mutex);
    if (slot->worker.joinable()) slot->worker.join();
}

void SessionRegistry::erase(const std::string& id) {
    std::shared_ptr<Slot> slot;
    {
        std::unique_lock lock(mutex_);
        const auto it = sessions_.find(id);
        if (it == sessions_.end()) throw Error(ErrorCode::session_not_found, "no session " + id);
        slot = std::move(it->second);
        sessions_.erase(it);
    }
    slot->worker.request_stop();
    std::lock_guard lock(slot->mutex);
    if (slot->worker.joinable()) slot->worker.join();
    slot->api_key.wipe();
    slot->wipe_upload();
    slot->state.update([](AnalysisSession& s) { s = AnalysisSession{}; });
}

std::size_t SessionRegistry::size() const {
    std::shared_lock lock(mutex_);
    return sessions_.size();
}

std::string SessionRegistry::dump() const {
    std::shared_lock lock(mutex_);
    json out = json::array();
    for (const auto& [id, slot] : sessions_) {
        const auto info = slot->state.read([](const AnalysisSession& s) {
            return std::make_pair(std::string(to_string(s.status)), s.dataset.records.size());
        });
        out.push_back({{"session_id", id},
                       {"backend", slot->backend_kind},
                       {"status", info.first},
                       {"records", info.second},
                       {"has_dataset", slot->has_dataset},
                       {"api_key", slot->api_key.empty() ? "none" : "held"}});
    }
    return out.dump(2);
}

// ---- JSON views -----------------------------------------------------------------

namespace {

json table_json(const ThemeTable& t) {
    json entries = json::array();
    for (const auto& e : t.entries) {
        json quotes = json::array();
        for (const auto& q : e.quotes) {
            quotes.push_back({{"text", q.text},
                              {"matched_record_id", q.matched_record_id ? json(*q.matched_record_id) : json(nullptr)},
                              {"verified", q.matched_record_id.has_value()}});
        }
        entries.push_back({{"theme", e.theme},
                           {"description", e.description},
                           {"quotes", quotes},
                           {"participant_count", e.participant_count},
                           {"claimed_count", e.claimed_count ? json(*e.claimed_count) : json(nullptr)}});
    }
    return {{"entries", entries},
            {"source_batch", t.source_batch},
            {"model_id", t.model_id},
            {"preset_version", t.preset_version},
            {"temperature", t.temperature}};
}

json cost_json(const CostEstimate& c) {
    return {{"input_tokens", c.input_tokens},
            {"output_tokens", c.output_tokens},
            {"input_per_1k", c.rates.input_per_1k},
            {"output_per_1k", c.rates.output_per_1k},
            {"total_micros", c.total_micros},
            {"total_usd", format_usd(c.total_micros)}};
}

json provenance_json(const ProvenanceReport& p) {
    json unmatched = json::array();
    for (const auto& [theme, quote] : p.unmatched) unmatched.push_back({{"theme", theme}, {"quote", quote}});
    return {{"verified", p.verified}, {"total", p.total()}, {"verification_rate", p.verification_rate},
            {"unmatched", unmatched}};
}

json status_json(const AnalysisSession& s) {
    json batches = json::array();
    std::size_t done = 0;
    for (const auto& b : s.batches) {
        if (b.status == BatchStatus::done) ++done;
        batches.push_back({{"number", b.number},
                           {"status", to_string(b.status)},
                           {"attempts", b.attempts},
                           {"last_error", b.last_error ? json(to_string(*b.last_error)) : json(nullptr)}});
    }
    json recovery = json::array();
    for (const auto& r : s.recovery_log) {
        recovery.push_back({{"batch", r.label},
                            {"error", to_string(r.error)},
                            {"action", to_string(r.action)},
                            {"detail", r.detail},
                            {"delay_ms", r.delay.count()}});
    }
    json out = {{"session_id", s.session_id},
                {"status", to_string(s.status)},
                {"backend", s.backend},
                {"model", s.model_id},
                {"records", s.dataset.records.size()},
                {"batches_total", s.batches.size()},
                {"batches_done", done},
                {"batches", batches},
                {"recovery_log", recovery},
                {"warnings", s.warnings},
                {"cost", cost_json(s.cost)},
                {"abort", nullptr}};
    if (s.abort) {
        out["abort"] = {{"class", to_string(s.abort->failure)},
                        {"exit_code", static_cast<int>(s.abort->failure)},
                        {"code", s.abort->code},
                        {"message", s.abort->message}};
    }
    if (s.provenance) out["provenance"] = provenance_json(*s.provenance);
    return out;
}

json summary_json(const DatasetSummary& d) {
    return {{"records", d.records}, {"words", d.words}, {"speakers", d.speakers}, {"warnings", d.warnings},
            {"format", d.format}};
}

ColumnRef column_ref(const json& j) {
    if (j.is_number_unsigned()) return j.get<std::size_t>();
    if (j.is_string()) return j.get<std::string>();
    throw Error(ErrorCode::bad_request, "column must be a header name or a 0-based index");
}

IngestSpec ingest_spec(const json& m) {
    IngestSpec spec;
    if (!m.is_object()) throw Error(ErrorCode::bad_request, "mapping must be a JSON object");
    if (m.contains("format") && !m["format"].is_null()) {
        const auto f = m["format"].get<std::string>();
        if (f == "csv") {
            spec.format = InputFormat::delimited_table;
        } else if (f == "tsv") {
            spec.format = InputFormat::delimited_table;
            spec.tab_delimited = true;
        } else if (f == "xlsx") {
            spec.format = InputFormat::spreadsheet;
        } else if (f == "txt") {
            spec.format = InputFormat::plain_text;
        } else {
            spec.format = parse_input_format(f);
        }
    }
    if (m.value("tab", false)) spec.tab_delimited = true;
    if (m.contains("text_column") && !m["text_column"].is_null()) spec.mapping.text_column = column_ref(m["text_column"]);
    if (m.contains("speaker_column") && !m["speaker_column"].is_null()) {
        spec.mapping.speaker_column = column_ref(m["speaker_column"]);
    }
    if (m.contains("id_column") && !m["id_column"].is_null()) spec.mapping.id_column = column_ref(m["id_column"]);
    if (m.contains("data_type")) spec.data_type = parse_data_type(m["data_type"].get<std::string>());
    spec.description = m.value("description", std::string{});
    if (m.contains("roles") && m["roles"].is_object()) {
        for (const auto& [label, role] : m["roles"].items()) spec.roles[label] = parse_role(role.get<std::string>());
    }
    return spec;
}

RunRequest run_request(const json& j, DataType dataset_type) {
    if (!j.is_object()) throw Error(ErrorCode::bad_request, "run config must be a JSON object");
    RunRequest r;
    r.config.data_type = j.contains("data_type") ? parse_data_type(j["data_type"].get<std::string>()) : dataset_type;
    r.config.role_playing = j.value("role_playing", false);
    r.config.theme_count = j.value("theme_count", 10);
    r.config.extra_instructions = j.value("extra_instructions", std::string{});
    r.config.dataset_description = j.value("dataset_description", std::string{});
    if (j.contains("model") && j["model"].is_string()) r.model = j["model"].get<std::string>();
    if (j.contains("temperature") && j["temperature"].is_number()) r.temperature = j["temperature"].get<double>();
    if (j.contains("context_limit") && j["context_limit"].is_number_unsigned()) {
        r.context_limit = j["context_limit"].get<std::size_t>();
    }
    return r;
}

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::session_not_found: return 404;
        case ErrorCode::session_busy: return 409;
        case ErrorCode::auth_failed: return 401;
        case ErrorCode::bad_request:
        case ErrorCode::precondition_violated: return 400;
        case ErrorCode::io_error: return 500;
        default: return 422;
    }
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message,
                const std::string& detail = {}) {
    send_json(res, status, {{"code", code}, {"message", message}, {"detail", detail}});
}

template <class F>
void guarded(httplib::Response& res, F&& f) {
    try {
        f();
    } catch (const Error& e) {
        send_error(res, http_status(e.code()), to_string(e.code()), e.what());
    } catch (const json::exception& e) {
        send_error(res, 400, "BadRequest", "malformed JSON", e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, "InternalError", e.what());
    }
}

}  // namespace

// ---- HTTP service ---------------------------------------------------------------

struct SessionService::Impl {
    httplib::Server server;
    int port = 0;
    bool bound = false;
};

SessionService::SessionService(ServiceOptions options)
    : options_(std::move(options)), registry_(options_.registry), impl_(std::make_unique<Impl>()) {
    auto& srv = impl_->server;
    auto& reg = registry_;
    srv.set_payload_max_length(options_.max_upload_bytes);

    srv.set_pre_routing_handler([](const httplib::Request& req, httplib::Response& res) {
        const auto origin = req.get_header_value("Origin");
        if (origin.starts_with("http://localhost:") || origin.starts_with("http://127.0.0.1:")) {
            res.set_header("Access-Control-Allow-Origin", origin);
            res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
        }
        if (req.method == "OPTIONS") {
            res.status = 204;
            return httplib::Server::HandlerResponse::Handled;
        }
        return httplib::Server::HandlerResponse::Unhandled;
    });

    srv.Get("/health", [](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, {{"ok", true}});
    });

    srv.Post("/sessions", [&reg](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto body = req.body.empty() ? json::object() : json::parse(req.body);
            CreateSessionRequest c;
            c.api_key = body.value("api_key", std::string{});
            c.backend = body.value("backend", std::string("mock"));
            if (body.contains("mock_script") && !body["mock_script"].is_null()) {
                const auto& ms = body["mock_script"];
                c.mock_script = ms.is_string() ? ms.get<std::string>() : ms.dump();
            }
            if (body.contains("endpoint") && body["endpoint"].is_string()) c.endpoint = body["endpoint"].get<std::string>();
            if (body.contains("model") && body["model"].is_string()) c.model = body["model"].get<std::string>();
            const auto backend = c.backend;
            const auto id = reg.create(std::move(c));
            send_json(res, 201, {{"session_id", id}, {"backend", backend}, {"status", "idle"}});
        });
    });

    srv.Post(R"(/sessions/([0-9a-f]+)/dataset)", [&reg](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto id = req.matches[1].str();
            if (!req.is_multipart_form_data() || !req.has_file("file")) {
                reg.snapshot(id);
                throw Error(ErrorCode::bad_request, "send multipart/form-data with a \"file\" part and a \"mapping\" part");
            }
            const auto file = req.get_file_value("file");
            json mapping = json::object();
            if (req.has_file("mapping")) mapping = json::parse(req.get_file_value("mapping").content);
            auto spec = ingest_spec(mapping);
            const auto name = file.filename.empty() ? std::string("upload") : file.filename;
            const auto summary = reg.set_dataset(id, file.content, name, std::move(spec));
            send_json(res, 200, summary_json(summary));
        });
    });

    srv.Post(R"(/sessions/([0-9a-f]+)/run)", [&reg](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto id = req.matches[1].str();
            const auto snap = reg.snapshot(id);
            const auto body = req.body.empty() ? json::object() : json::parse(req.body);
            reg.start_run(id, run_request(body, snap.dataset.data_type));
            send_json(res, 202, {{"session_id", id}, {"status", "running"}});
        });
    });

    srv.Get(R"(/sessions/([0-9a-f]+)/status)", [&reg](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, status_json(reg.snapshot(req.matches[1].str()))); });
    });

    srv.Get(R"(/sessions/([0-9a-f]+)/result)", [&reg](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto s = reg.snapshot(req.matches[1].str());
            if (!s.merged) {
                send_error(res, 409, "ResultNotReady", "no result yet", std::string(to_string(s.status)));
                return;
            }
            json sources = json::object();
            for (const auto& e : s.merged->entries) {
                for (const auto& q : e.quotes) {
                    if (!q.matched_record_id || sources.contains(*q.matched_record_id)) continue;
                    if (const auto* r = s.dataset.find(*q.matched_record_id)) {
                        sources[r->record_id] = {{"speaker_label", r->speaker_label}, {"text", r->text}};
                    }
                }
            }
            json body = {{"table", table_json(*s.merged)}, {"sources", sources}};
            if (s.provenance) body["provenance"] = provenance_json(*s.provenance);
            send_json(res, 200, body);
        });
    });

    srv.Get(R"(/sessions/([0-9a-f]+)/result\.csv)", [&reg](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto s = reg.snapshot(req.matches[1].str());
            if (!s.merged) {
                send_error(res, 409, "ResultNotReady", "no result yet", std::string(to_string(s.status)));
                return;
            }
            res.status = 200;
            res.set_header("Content-Disposition", "attachment; filename=\"themes.csv\"");
            res.set_content(render_csv(*s.merged), "text/csv; charset=utf-8");
        });
    });

    srv.Get(R"(/sessions/([0-9a-f]+)/transcript\.txt)", [&reg](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto id = req.matches[1].str();
            const auto status = reg.snapshot(id).status;
            if (status != RunStatus::complete && status != RunStatus::aborted) {
                send_error(res, 409, "ResultNotReady", "the run has not finished", std::string(to_string(status)));
                return;
            }
            res.status = 200;
            res.set_header("Content-Disposition", "attachment; filename=\"transcript.txt\"");
            res.set_content(reg.transcript(id), "text/plain; charset=utf-8");
        });
    });

    srv.Delete(R"(/sessions/([0-9a-f]+))", [&reg](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto id = req.matches[1].str();
            reg.erase(id);
            send_json(res, 200, {{"session_id", id}, {"erased", true}});
        });
    });

    srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) {
            send_error(res, res.status, res.status == 404 ? "NotFound" : "BadRequest", "no such endpoint");
        }
    });
}

SessionService::~SessionService() { stop(); }

int SessionService::bind() {
    if (!is_loopback_host(options_.host)) {
        throw Error(ErrorCode::bad_request, "the service only binds to loopback addresses, not " + options_.host);
    }
    int port = options_.port;
    if (port == 0) {
        port = impl_->server.bind_to_any_port(options_.host);
        if (port < 0) throw Error(ErrorCode::io_error, "cannot bind " + options_.host);
    } else if (!impl_->server.bind_to_port(options_.host, port)) {
        throw Error(ErrorCode::io_error, "cannot bind " + options_.host + ":" + std::to_string(port));
    }
    impl_->port = port;
    impl_->bound = true;
    return port;
}

void SessionService::serve() {
    if (!impl_->bound) bind();
    impl_->server.listen_after_bind();
}

int SessionService::start_background() {
    const auto port = bind();
    thread_ = std::jthread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return port;
}

void SessionService::stop() {
    if (impl_) impl_->server.stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace quali
