#include <algorithm>
#include <map>
#include <set>

#include "doctest.h"
#include "quali/error.hpp"
#include "quali/pipeline.hpp"
#include "quali/text.hpp"
#include "test_support.hpp"

using namespace quali;
namespace qt = quali::testing;

namespace {

Dataset synthetic_dataset(std::size_t records) {
    std::vector<std::pair<std::string, std::string>> rows;
    for (std::size_t i = 0; i < records; ++i) {
        rows.push_back({"Speaker" + std::to_string(i % 7),
                        "Item " + std::to_string(i) + " from speaker " + std::to_string(i % 7) +
                            " notes that working from home changed the daily rhythm of meetings, errands, "
                            "breaks and the quiet hours spent on focused tasks at the kitchen table."});
    }
    return qt::make_dataset(rows);
}

PromptConfig small_config() {
    PromptConfig c;
    c.theme_count = 3;
    c.dataset_description = "Remote work interviews";
    return c;
}

struct Run {
    AnalysisSession session;
    std::chrono::milliseconds slept{0};
    std::vector<LlmRequest> requests;
};

Run run_script(const Dataset& data, const PromptConfig& config, std::vector<MockStep> steps,
               RunOptions options = {}) {
    MockBackend backend(MockScript{std::move(steps), {}});
    VirtualClock clock;
    SessionState state;
    run_analysis(state, [&] { return data; }, config, backend, clock, options);
    return Run{state.snapshot(), clock.total_slept(), backend.requests()};
}

MockStep reply(std::size_t batch, std::string text) { return MockStep{batch, std::move(text), std::nullopt}; }
MockStep fail(std::size_t batch, ErrorKind kind) { return MockStep{batch, std::nullopt, kind}; }

std::vector<std::string> labels(const AnalysisSession& s) {
    std::vector<std::string> out;
    for (const auto& x : s.exchanges) out.push_back(x.label);
    return out;
}

std::vector<ActionKind> actions(const AnalysisSession& s) {
    std::vector<ActionKind> out;
    for (const auto& r : s.recovery_log) out.push_back(r.action);
    return out;
}

std::string strip_edges(std::string s) {
    auto edge = [](unsigned char c) { return std::ispunct(c) || std::isspace(c); };
    while (!s.empty() && edge(s.back())) s.pop_back();
    while (!s.empty() && edge(s.front())) s.erase(s.begin());
    return s;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

}  // namespace

TEST_CASE("prepare_run rejects unusable input") {
    RunOptions options;
    auto bad = small_config();
    bad.theme_count = 0;
    CHECK_THROWS_AS(prepare_run(synthetic_dataset(3), bad, options), Error);
    CHECK_THROWS_AS(prepare_run(Dataset{}, small_config(), options), Error);
    options.budget = TokenBudget{850, 600, 200};
    try {
        prepare_run(synthetic_dataset(3), small_config(), options);
        FAIL("expected budget_too_small");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::budget_too_small);
    }
}

TEST_CASE("prepare_run grows the prompt reserve to the longest prompt") {
    RunOptions options;
    options.budget.prompt_reserve = 100;
    const auto data = synthetic_dataset(80);
    const auto run = prepare_run(data, small_config(), options);
    CHECK(run.budget.prompt_reserve > 100);
    CHECK(run.plan.budget.prompt_reserve == run.budget.prompt_reserve);
    REQUIRE_FALSE(run.notes.empty());
    CHECK(run.notes[0].find("prompt reserve raised") != std::string::npos);
    const auto worst = augmented_prompt(compose(small_config(), run.plan.batches.size(), run.plan.batches.size()),
                                        true, true);
    CHECK(heuristic_counter()(worst) <= run.budget.prompt_reserve);
}

TEST_CASE("fixture run completes with every quote verified") {
    const auto data = qt::load_fixture();
    PromptConfig config;
    config.data_type = DataType::focus_group;
    config.role_playing = true;
    config.theme_count = 20;
    config.dataset_description = "Focus group on the transition to remote work";
    const auto script = MockScript::from_file(qt::fixture_mock_script());
    const auto run = run_script(data, config, script.steps);
    const auto& s = run.session;
    REQUIRE(s.status == RunStatus::complete);
    REQUIRE(s.merged);
    CHECK(s.merged->entries.size() == 20);
    REQUIRE(s.provenance);
    CHECK(s.provenance->unmatched.empty());
    CHECK(s.provenance->verification_rate == doctest::Approx(1.0));
    CHECK(s.results.size() == s.plan.batches.size());
    CHECK(s.recovery_log.empty());
    CHECK(run.slept.count() == 0);
    const auto expected = estimate_cost(s.plan, compose(config, 1, s.plan.batches.size()), RunOptions{}.rates);
    CHECK(s.cost.total_micros == expected.total_micros);
    CHECK(s.cost.input_tokens == expected.input_tokens);

    SUBCASE("participant counts equal a hand tally of distinct speakers") {
        for (const auto& e : s.merged->entries) {
            std::set<std::string> speakers;
            for (const auto& q : e.quotes) {
                const auto needle = lower(strip_edges(q.text));
                for (const auto& r : data.records) {
                    if (lower(r.text).find(needle) != std::string::npos) {
                        speakers.insert(r.speaker_label);
                        break;
                    }
                }
            }
            CHECK(e.participant_count == speakers.size());
        }
    }

    SUBCASE("parallel execution gives the same result") {
        RunOptions options;
        options.parallelism = 4;
        const auto parallel = run_script(data, config, script.steps, options);
        REQUIRE(parallel.session.merged);
        CHECK(*parallel.session.merged == *s.merged);
        CHECK(labels(parallel.session) == labels(s));
    }
}

TEST_CASE("each request carries its batch and the composed prompt") {
    const auto data = synthetic_dataset(80);
    const auto prepared = prepare_run(data, small_config(), RunOptions{});
    REQUIRE(prepared.plan.batches.size() >= 2);
    const std::vector<MockStep> wildcards(prepared.plan.batches.size(),
                                          MockStep{std::nullopt, qt::valid_reply(prepared.plan.batches[0], 3), {}});
    const auto run = run_script(data, small_config(), wildcards);
    REQUIRE(run.session.status == RunStatus::complete);
    REQUIRE(run.requests.size() == prepared.plan.batches.size());
    for (std::size_t i = 0; i < run.requests.size(); ++i) {
        const auto& b = prepared.plan.batches[i];
        CHECK(run.requests[i].batch_number == b.number);
        CHECK(run.requests[i].payload == b.payload());
        CHECK(run.requests[i].prompt == compose(small_config(), b.number, prepared.plan.batches.size()).assembled);
    }
}

TEST_CASE("recovery per error kind") {
    const auto data = synthetic_dataset(80);
    const auto config = small_config();
    const auto plan = prepare_run(data, config, RunOptions{}).plan;
    REQUIRE(plan.batches.size() >= 2);
    const auto& b1 = plan.batches[0];
    auto ok_rest = [&](std::vector<MockStep> steps) {
        for (std::size_t i = 1; i < plan.batches.size(); ++i) steps.push_back(reply(i + 1, qt::valid_reply(plan.batches[i], 3)));
        return steps;
    };
    const auto total = plan.batches.size();

    SUBCASE("network error backs off and retries") {
        const auto run = run_script(data, config, ok_rest({fail(1, ErrorKind::network), reply(1, qt::valid_reply(b1, 3))}));
        CHECK(run.session.status == RunStatus::complete);
        CHECK(actions(run.session) == std::vector<ActionKind>{ActionKind::retry_backoff});
        CHECK(run.slept == std::chrono::milliseconds(1000));
    }
    SUBCASE("not processed backs off and retries") {
        const auto run = run_script(data, config,
                                    ok_rest({fail(1, ErrorKind::not_processed), fail(1, ErrorKind::not_processed),
                                             reply(1, qt::valid_reply(b1, 3))}));
        CHECK(run.session.status == RunStatus::complete);
        CHECK(run.slept == std::chrono::milliseconds(3000));
    }
    SUBCASE("rate limit waits a minute") {
        const auto run = run_script(data, config, ok_rest({fail(1, ErrorKind::rate_limit), reply(1, qt::valid_reply(b1, 3))}));
        CHECK(run.session.status == RunStatus::complete);
        CHECK(actions(run.session) == std::vector<ActionKind>{ActionKind::wait_then_retry});
        CHECK(run.slept == std::chrono::seconds(60));
    }
    SUBCASE("token limit on batch 2 re-splits it and completes") {
        const auto& b2 = plan.batches[1];
        std::vector<MockStep> steps{reply(1, qt::valid_reply(b1, 3)), fail(2, ErrorKind::token_limit),
                                    reply(2, qt::valid_reply(b2, 3))};
        for (std::size_t i = 2; i < total; ++i) steps.push_back(reply(i + 1, qt::valid_reply(plan.batches[i], 3)));
        const auto run = run_script(data, config, steps);
        REQUIRE(run.session.status == RunStatus::complete);
        CHECK(actions(run.session) == std::vector<ActionKind>{ActionKind::resplit_smaller});
        const auto l = labels(run.session);
        CHECK(std::count(l.begin(), l.end(), "2.1") == 1);
        CHECK(std::count(l.begin(), l.end(), "2.2") == 1);
        std::string rejoined;
        std::size_t pieces = 0;
        for (const auto& x : run.session.exchanges) {
            if (x.label.rfind("2.", 0) == 0) {
                rejoined += (pieces++ ? "\n" : "") + x.payload;
                CHECK(heuristic_counter()(x.payload) <= plan.budget.effective_budget() / 2 + 64);
            }
        }
        CHECK(rejoined == b2.payload());
        CHECK(run.session.results.size() == total + pieces - 1);
    }
    SUBCASE("refusal and policy violation re-clarify the prompt") {
        for (auto kind : {ErrorKind::refusal, ErrorKind::policy_violation}) {
            const auto run = run_script(data, config, ok_rest({fail(1, kind), reply(1, qt::valid_reply(b1, 3))}));
            REQUIRE(run.session.status == RunStatus::complete);
            CHECK(actions(run.session) == std::vector<ActionKind>{ActionKind::reclarify_prompt});
            CHECK(run.requests[1].prompt == augmented_prompt(compose(config, 1, total), true, false));
            CHECK(run.requests[1].payload == run.requests[0].payload);
        }
    }
    SUBCASE("too few rows re-inject the unprocessed tail") {
        REQUIRE(b1.fragments.size() > 8);
        Batch late;
        late.fragments.assign(b1.fragments.begin() + 5, b1.fragments.end());
        const auto run = run_script(data, config,
                                    ok_rest({reply(1, qt::valid_reply(late, 2)), reply(1, qt::valid_reply(late, 1, 2))}));
        REQUIRE(run.session.status == RunStatus::complete);
        CHECK(actions(run.session) == std::vector<ActionKind>{ActionKind::reinject_tail});
        CHECK(labels(run.session)[1] == "1+tail");
        auto tail_config = config;
        tail_config.theme_count = 1;
        CHECK(run.requests[1].prompt == compose(tail_config, 1, total).assembled);
        CHECK(run.requests[1].payload == late.payload());
        CHECK(run.session.results[0].entries.size() == 3);
    }
    SUBCASE("format errors re-assert the output format") {
        const auto run = run_script(data, config,
                                    ok_rest({fail(1, ErrorKind::format_error), reply(1, qt::valid_reply(b1, 3))}));
        REQUIRE(run.session.status == RunStatus::complete);
        CHECK(actions(run.session) == std::vector<ActionKind>{ActionKind::reassert_format});
        CHECK(run.requests[1].prompt == augmented_prompt(compose(config, 1, total), false, true));
    }
    SUBCASE("unparseable text is a format error") {
        const auto run = run_script(data, config, ok_rest({reply(1, "I found several themes."), reply(1, qt::valid_reply(b1, 3))}));
        REQUIRE(run.session.status == RunStatus::complete);
        REQUIRE(run.session.recovery_log.size() == 1);
        CHECK(run.session.recovery_log[0].error == ErrorKind::format_error);
    }
    SUBCASE("invented quotes are re-asserted") {
        ThemeTable invented;
        for (int i = 0; i < 3; ++i) {
            invented.entries.push_back({"T" + std::to_string(i), "d", {{"nothing like the data", {}}}, 1, {}});
        }
        const auto run = run_script(data, config, ok_rest({reply(1, render_pipe_table(invented)), reply(1, qt::valid_reply(b1, 3))}));
        REQUIRE(run.session.status == RunStatus::complete);
        REQUIRE(run.session.recovery_log.size() == 1);
        CHECK(run.session.recovery_log[0].error == ErrorKind::content_misread);
        CHECK(run.session.recovery_log[0].action == ActionKind::reassert_format);
    }
    SUBCASE("six network errors abort as a gateway failure") {
        std::vector<MockStep> steps(6, fail(1, ErrorKind::network));
        const auto run = run_script(data, config, ok_rest(steps));
        const auto& s = run.session;
        CHECK(s.status == RunStatus::aborted);
        REQUIRE(s.abort);
        CHECK(s.abort->failure == FailureClass::gateway);
        CHECK(s.abort->code == "network");
        REQUIRE(s.recovery_log.size() == 6);
        CHECK(s.recovery_log.back().action == ActionKind::abort);
        CHECK(run.slept == std::chrono::milliseconds(31000));
        CHECK_FALSE(s.merged);
        CHECK(s.exchanges.size() == 6);
    }
    SUBCASE("persistent format errors abort as a parse failure") {
        const auto run = run_script(data, config, ok_rest({reply(1, "no table")}));
        REQUIRE(run.session.abort);
        CHECK(run.session.abort->failure == FailureClass::parse);
        CHECK(run.session.exchanges.size() == 4);
    }
}

TEST_CASE("a stop request cancels the run") {
    class StoppingBackend final : public Backend {
    public:
        StoppingBackend(std::stop_source& source, std::string text) : source_(source), text_(std::move(text)) {}
        BackendReply complete(const LlmRequest&) override {
            ++calls;
            source_.request_stop();
            return BackendReply{200, text_, {}};
        }
        bool ping() override { return true; }
        std::string name() const override { return "stopping"; }
        int calls = 0;

    private:
        std::stop_source& source_;
        std::string text_;
    };
    const auto data = synthetic_dataset(80);
    const auto plan = prepare_run(data, small_config(), RunOptions{}).plan;
    std::stop_source source;
    StoppingBackend backend(source, qt::valid_reply(plan.batches[0], 3));
    VirtualClock clock;
    SessionState state;
    run_analysis(state, [&] { return data; }, small_config(), backend, clock, RunOptions{}, source.get_token());
    const auto s = state.snapshot();
    CHECK(s.status == RunStatus::aborted);
    REQUIRE(s.abort);
    CHECK(s.abort->code == "Cancelled");
    CHECK(backend.calls == 1);
}

TEST_CASE("ingest failures abort before any request") {
    MockBackend backend(MockScript{});
    VirtualClock clock;
    SessionState state;
    run_analysis(state, [] { return Dataset{}; }, small_config(), backend, clock, RunOptions{});
    auto s = state.snapshot();
    CHECK(s.status == RunStatus::aborted);
    REQUIRE(s.abort);
    CHECK(s.abort->code == "EmptyDataset");
    CHECK(s.abort->failure == FailureClass::ingest);

    run_analysis(state, []() -> Dataset { throw Error(ErrorCode::file_not_found, "gone"); }, small_config(), backend,
                 clock, RunOptions{});
    s = state.snapshot();
    CHECK(s.abort->code == "FileNotFound");
    CHECK(backend.requests().empty());
}

TEST_CASE("failure classes follow the exit codes") {
    CHECK(failure_class(ErrorCode::mapping_error) == FailureClass::ingest);
    CHECK(failure_class(ErrorCode::io_error) == FailureClass::io);
    CHECK(failure_class(ErrorCode::config_invalid) == FailureClass::usage);
    CHECK(static_cast<int>(FailureClass::gateway) == 3);
    CHECK(static_cast<int>(FailureClass::parse) == 4);
}
