#include <chrono>
#include <set>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "doctest.h"
#include "quali/error.hpp"
#include "quali/exporter.hpp"
#include "quali/session_service.hpp"
#include "test_support.hpp"

using namespace quali;
using nlohmann::json;
namespace qt = quali::testing;

namespace {

const json kMapping = {{"format", "csv"},
                       {"text_column", "message"},
                       {"speaker_column", "name"},
                       {"id_column", "id"},
                       {"data_type", "focus_group"},
                       {"roles", {{"Moderator", "moderator"}}}};

const json kRunConfig = {{"theme_count", 20},
                         {"role_playing", true},
                         {"dataset_description", "Focus group on the transition to remote work"}};

struct Service {
    SessionService service;
    int port;
    httplib::Client client;

    explicit Service(ServiceOptions options = make_options())
        : service(std::move(options)), port(service.start_background()), client("127.0.0.1", port) {
        client.set_read_timeout(30, 0);
    }

    static ServiceOptions make_options() {
        ServiceOptions o;
        o.port = 0;
        return o;
    }

    std::string create(const json& body) {
        auto r = client.Post("/sessions", body.dump(), "application/json");
        REQUIRE(r);
        REQUIRE(r->status == 201);
        return json::parse(r->body).at("session_id").get<std::string>();
    }

    httplib::Result upload(const std::string& id, const std::string& content, const json& mapping = kMapping) {
        httplib::MultipartFormDataItems items{{"file", content, "focus.csv", "text/csv"},
                                              {"mapping", mapping.dump(), "", "application/json"}};
        return client.Post("/sessions/" + id + "/dataset", items);
    }

    json status(const std::string& id) {
        auto r = client.Get("/sessions/" + id + "/status");
        REQUIRE(r);
        REQUIRE(r->status == 200);
        return json::parse(r->body);
    }

    json wait_finished(const std::string& id) {
        const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(30);
        while (std::chrono::steady_clock::now() < deadline) {
            auto s = status(id);
            if (s["status"] == "complete" || s["status"] == "aborted") return s;
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
        FAIL("run did not finish");
        return {};
    }
};

std::string fixture_script() { return qt::read_text(qt::fixture_mock_script()); }

std::string slow_script() {
    return json{{"latency_ms", 200}, {"steps", json::parse(fixture_script())}}.dump();
}

}  // namespace

TEST_CASE("loopback hosts") {
    for (const auto* h : {"127.0.0.1", "127.1.2.3", "localhost", "::1"}) CHECK(is_loopback_host(h));
    for (const auto* h : {"0.0.0.0", "192.168.1.10", "example.com", "127.example.com", "", "::"}) {
        CHECK_FALSE(is_loopback_host(h));
    }
}

TEST_CASE("the service refuses to bind a non-loopback address") {
    ServiceOptions o;
    o.host = "0.0.0.0";
    o.port = 0;
    SessionService service(o);
    try {
        service.bind();
        FAIL("expected a refusal");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::bad_request);
    }
}

TEST_CASE("full session lifecycle over HTTP") {
    Service svc;
    const auto id = svc.create({{"backend", "mock"}, {"mock_script", fixture_script()}});
    CHECK(id.size() == 32);

    auto r = svc.client.Get("/sessions/" + id + "/result");
    REQUIRE(r);
    CHECK(r->status == 409);
    CHECK(json::parse(r->body)["code"] == "ResultNotReady");

    r = svc.client.Post("/sessions/" + id + "/run", kRunConfig.dump(), "application/json");
    REQUIRE(r);
    CHECK(r->status == 400);

    r = svc.upload(id, qt::read_text(qt::fixture_csv()));
    REQUIRE(r);
    REQUIRE(r->status == 200);
    const auto summary = json::parse(r->body);
    CHECK(summary["records"] == 345);
    CHECK(summary["words"] == 9309);
    CHECK(summary["speakers"].size() >= 9);

    r = svc.client.Post("/sessions/" + id + "/run", kRunConfig.dump(), "application/json");
    REQUIRE(r);
    CHECK(r->status == 202);
    const auto status = svc.wait_finished(id);
    CHECK(status["status"] == "complete");
    CHECK(status["batches_done"] == status["batches_total"]);
    CHECK(status["provenance"]["verification_rate"] == 1.0);

    r = svc.client.Get("/sessions/" + id + "/result");
    REQUIRE(r);
    REQUIRE(r->status == 200);
    const auto result = json::parse(r->body);
    CHECK(result["table"]["entries"].size() == 20);
    for (const auto& e : result["table"]["entries"]) {
        for (const auto& q : e["quotes"]) {
            CHECK(q["verified"] == true);
            CHECK(result["sources"].contains(q["matched_record_id"].get<std::string>()));
        }
    }

    r = svc.client.Get("/sessions/" + id + "/result.csv");
    REQUIRE(r);
    CHECK(r->status == 200);
    CHECK(r->get_header_value("Content-Type").find("text/csv") == 0);
    CHECK(r->body == render_csv(*svc.service.registry().snapshot(id).merged));

    r = svc.client.Get("/sessions/" + id + "/transcript.txt");
    REQUIRE(r);
    CHECK(r->status == 200);
    CHECK(r->body.find("== SECTION: RESULT ==") != std::string::npos);

    r = svc.client.Delete("/sessions/" + id);
    REQUIRE(r);
    CHECK(r->status == 200);
    for (const auto* path : {"/status", "/result", "/result.csv", "/transcript.txt"}) {
        r = svc.client.Get("/sessions/" + id + path);
        REQUIRE(r);
        CHECK(r->status == 404);
        CHECK(json::parse(r->body)["code"] == "SessionNotFound");
    }
    r = svc.client.Delete("/sessions/" + id);
    REQUIRE(r);
    CHECK(r->status == 404);
    CHECK(svc.service.registry().size() == 0);
}

TEST_CASE("erasing a running session stops it and forgets everything") {
    Service svc;
    const std::string key = "sk-live-key-never-stored-1234567890";
    const auto id = svc.create({{"backend", "mock"}, {"api_key", key}, {"mock_script", slow_script()}});
    REQUIRE(svc.upload(id, qt::read_text(qt::fixture_csv()))->status == 200);
    CHECK(svc.service.registry().dump().find("\"held\"") != std::string::npos);
    REQUIRE(svc.client.Post("/sessions/" + id + "/run", kRunConfig.dump(), "application/json")->status == 202);
    std::this_thread::sleep_for(std::chrono::milliseconds(50));

    auto r = svc.client.Post("/sessions/" + id + "/run", kRunConfig.dump(), "application/json");
    REQUIRE(r);
    CHECK(r->status == 409);
    CHECK(json::parse(r->body)["code"] == "SessionBusy");
    CHECK(svc.service.registry().dump().find(key) == std::string::npos);

    const auto start = std::chrono::steady_clock::now();
    r = svc.client.Delete("/sessions/" + id);
    REQUIRE(r);
    CHECK(r->status == 200);
    CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(2));
    r = svc.client.Get("/sessions/" + id + "/status");
    REQUIRE(r);
    CHECK(r->status == 404);
    CHECK(svc.service.registry().dump() == "[]");
}

TEST_CASE("the key never reaches the transcript") {
    Service svc;
    const std::string key = "sk-test-ABCDEFGHIJKLMNOP";
    auto script = json::parse(fixture_script());
    const auto id = svc.create({{"backend", "mock"}, {"api_key", key}, {"mock_script", script}});
    auto csv = qt::read_text(qt::fixture_csv());
    csv += "t999,Alex,My password is " + key + " so keep it safe\n";
    REQUIRE(svc.upload(id, csv)->status == 200);
    REQUIRE(svc.client.Post("/sessions/" + id + "/run", kRunConfig.dump(), "application/json")->status == 202);
    svc.wait_finished(id);
    auto r = svc.client.Get("/sessions/" + id + "/transcript.txt");
    REQUIRE(r);
    CHECK(r->status == 200);
    CHECK(r->body.find(key) == std::string::npos);
    CHECK(r->body.find("My password is [redacted]") != std::string::npos);
}

TEST_CASE("session ids are distinct") {
    SessionRegistry registry;
    std::set<std::string> ids;
    for (int i = 0; i < 200; ++i) ids.insert(registry.create(CreateSessionRequest{}));
    CHECK(ids.size() == 200);
    CHECK(registry.size() == 200);
}

TEST_CASE("request errors map to status codes") {
    Service svc;
    auto r = svc.client.Post("/sessions", "{not json", "application/json");
    REQUIRE(r);
    CHECK(r->status == 400);
    r = svc.client.Post("/sessions", json{{"backend", "other"}}.dump(), "application/json");
    REQUIRE(r);
    CHECK(r->status == 400);
    r = svc.client.Post("/sessions", json{{"backend", "real"}}.dump(), "application/json");
    REQUIRE(r);
    CHECK(r->status == 401);
    r = svc.client.Post("/sessions", json{{"backend", "mock"}, {"mock_script", "[{\"match\": 1}]"}}.dump(),
                        "application/json");
    REQUIRE(r);
    CHECK(r->status == 422);
    r = svc.client.Get("/nowhere");
    REQUIRE(r);
    CHECK(r->status == 404);
    CHECK(json::parse(r->body)["code"] == "NotFound");

    const auto id = svc.create({{"backend", "mock"}});
    r = svc.upload(id, "id,name,message\n1,A,hello\n", json{{"text_column", "nope"}});
    REQUIRE(r);
    CHECK(r->status == 422);
    CHECK(json::parse(r->body)["code"] == "MappingError");
    r = svc.client.Post("/sessions/" + id + "/dataset", "plain body", "text/plain");
    REQUIRE(r);
    CHECK(r->status == 400);
    REQUIRE(svc.upload(id, qt::read_text(qt::fixture_csv()))->status == 200);
    r = svc.client.Post("/sessions/" + id + "/run", json{{"theme_count", 0}}.dump(), "application/json");
    REQUIRE(r);
    CHECK(r->status == 422);
    CHECK(json::parse(r->body)["code"] == "ConfigInvalid");
}

TEST_CASE("a gateway abort is reported in the status") {
    Service svc;
    const json steps = json::array({{{"match", 1}, {"error", "network"}}, {{"match", 1}, {"error", "network"}},
                                    {{"match", 1}, {"error", "network"}}, {{"match", 1}, {"error", "network"}},
                                    {{"match", 1}, {"error", "network"}}, {{"match", 1}, {"error", "network"}}});
    const auto id = svc.create({{"backend", "mock"}, {"mock_script", steps}});
    REQUIRE(svc.upload(id, qt::read_text(qt::fixture_csv()))->status == 200);
    REQUIRE(svc.client.Post("/sessions/" + id + "/run", kRunConfig.dump(), "application/json")->status == 202);
    const auto s = svc.wait_finished(id);
    CHECK(s["status"] == "aborted");
    CHECK(s["abort"]["class"] == "gateway");
    CHECK(s["abort"]["exit_code"] == 3);
    CHECK(s["recovery_log"].size() == 6);
    auto r = svc.client.Get("/sessions/" + id + "/transcript.txt");
    REQUIRE(r);
    CHECK(r->status == 200);
    CHECK(r->body.find("== SECTION: ABORTED ==") != std::string::npos);
}

TEST_CASE("a rejected key fails session creation") {
    httplib::Server fake;
    fake.Post("/v1/chat/completions", [](const httplib::Request& req, httplib::Response& res) {
        if (req.get_header_value("Authorization") != "Bearer good-key") {
            res.status = 401;
            res.set_content(R"({"error":{"message":"Incorrect API key provided"}})", "application/json");
            return;
        }
        res.set_content(R"({"choices":[{"message":{"content":"ok"}}],"usage":{"prompt_tokens":1,"completion_tokens":1}})",
                        "application/json");
    });
    const auto fake_port = fake.bind_to_any_port("127.0.0.1");
    std::jthread fake_thread([&] { fake.listen_after_bind(); });
    fake.wait_until_ready();
    const auto endpoint = "http://127.0.0.1:" + std::to_string(fake_port) + "/v1/chat/completions";

    Service svc;
    auto r = svc.client.Post("/sessions", json{{"backend", "real"}, {"api_key", "bad-key"}, {"endpoint", endpoint}}.dump(),
                             "application/json");
    REQUIRE(r);
    CHECK(r->status == 401);
    CHECK(json::parse(r->body)["code"] == "AuthFailed");
    CHECK(r->body.find("bad-key") == std::string::npos);
    r = svc.client.Post("/sessions", json{{"backend", "real"}, {"api_key", "good-key"}, {"endpoint", endpoint}}.dump(),
                        "application/json");
    REQUIRE(r);
    CHECK(r->status == 201);
    CHECK(svc.service.registry().dump().find("good-key") == std::string::npos);
    fake.stop();
}

TEST_CASE("browser preflight from a local page") {
    Service svc;
    auto r = svc.client.Options("/sessions", {{"Origin", "http://localhost:5173"}});
    REQUIRE(r);
    CHECK(r->status == 204);
    CHECK(r->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");
    r = svc.client.Get("/health", {{"Origin", "http://evil.example"}});
    REQUIRE(r);
    CHECK(r->status == 200);
    CHECK_FALSE(r->has_header("Access-Control-Allow-Origin"));
}
