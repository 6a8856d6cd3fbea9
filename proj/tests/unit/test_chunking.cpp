#include <map>
#include <random>

#include "doctest.h"
#include "quali/chunking.hpp"
#include "quali/corpus.hpp"
#include "quali/error.hpp"
#include "test_support.hpp"

using namespace quali;
namespace qt = quali::testing;

namespace {

// Exact cl100k_base count of the fixture's message texts joined by newlines,
// produced by tests/oracles/token_count_oracle.py.
constexpr std::size_t kFixtureExactTokens = 10362;

std::size_t oracle_cost(const RecordFragment& f) {
    const auto line = f.speaker_label.empty() ? f.text : f.speaker_label + ": " + f.text;
    return (line.size() + 1 + 3) / 4;
}

void check_plan_invariants(const Dataset& ds, const BatchPlan& plan) {
    const auto budget = plan.budget.effective_budget();
    std::map<std::string, std::string> rebuilt;
    std::vector<std::string> order;
    std::size_t total = 0;
    for (std::size_t b = 0; b < plan.batches.size(); ++b) {
        const auto& batch = plan.batches[b];
        CHECK(batch.number == b + 1);
        std::size_t sum = 0;
        for (const auto& f : batch.fragments) {
            sum += oracle_cost(f);
            if (!rebuilt.count(f.record_id)) order.push_back(f.record_id);
            rebuilt[f.record_id] += f.text;
        }
        CHECK(sum == batch.estimated_tokens);
        CHECK(sum <= budget);
        total += sum;
    }
    CHECK(total == plan.total_estimated_tokens);
    REQUIRE(order.size() == ds.records.size());
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        CHECK(order[i] == ds.records[i].record_id);
        CHECK(rebuilt[ds.records[i].record_id] == ds.records[i].text);
    }
}

Dataset unlabeled(const std::vector<std::size_t>& byte_sizes) {
    std::vector<std::pair<std::string, std::string>> rows;
    for (auto n : byte_sizes) rows.push_back({"", std::string(n, 'a')});
    return qt::make_dataset(rows);
}

}  // namespace

TEST_CASE("token heuristic") {
    CHECK(estimate_tokens("") == 0);
    CHECK(estimate_tokens(std::string(400, 'x')) == 100);
    CHECK(estimate_tokens("abc") == 1);
    CHECK(estimate_tokens("abcde") == 2);
    CHECK(estimate_tokens("\xC3\xA9\xC3\xA9\xC3\xA9") == 2);
}

TEST_CASE("heuristic is within 30 percent of an exact tokenizer on the fixture") {
    const auto ds = qt::load_fixture();
    std::size_t heuristic = 0;
    for (const auto& r : ds.records) heuristic += estimate_tokens(r.text);
    CHECK(heuristic == 12423);
    const double ratio = static_cast<double>(heuristic) / static_cast<double>(kFixtureExactTokens);
    CHECK(ratio >= 0.7);
    CHECK(ratio <= 1.3);
}

TEST_CASE("effective budget") {
    CHECK(TokenBudget{}.effective_budget() == 2296);
    CHECK(TokenBudget{4096, 500, 500}.effective_budget() == 3096);
    CHECK(TokenBudget{1000, 600, 400}.effective_budget() == 0);
}

TEST_CASE("greedy packing of 1000, 1000 and 1500 token records") {
    const TokenBudget budget{4096, 500, 500};
    const auto ds = unlabeled({3999, 3999, 5999});
    std::vector<std::size_t> costs;
    for (const auto& r : ds.records) costs.push_back((r.text.size() + 1 + 3) / 4);
    REQUIRE(costs == std::vector<std::size_t>{1000, 1000, 1500});

    // oracle: walk prefix sums, closing a batch whenever the next sum would pass the budget
    std::vector<std::vector<std::size_t>> expected{{}};
    std::size_t running = 0;
    for (auto c : costs) {
        if (running + c > budget.effective_budget() && !expected.back().empty()) {
            expected.push_back({});
            running = 0;
        }
        expected.back().push_back(c);
        running += c;
    }
    REQUIRE(expected.size() == 2);

    const auto plan = plan_batches(ds, budget);
    REQUIRE(plan.batches.size() == expected.size());
    for (std::size_t b = 0; b < expected.size(); ++b) {
        REQUIRE(plan.batches[b].fragments.size() == expected[b].size());
        for (std::size_t i = 0; i < expected[b].size(); ++i) {
            CHECK(fragment_cost(plan.batches[b].fragments[i], heuristic_counter()) == expected[b][i]);
        }
    }
    check_plan_invariants(ds, plan);
}

TEST_CASE("a record exactly filling the remaining space joins the batch") {
    const TokenBudget budget{4096, 500, 500};
    const auto ds = unlabeled({3999, 8383});
    REQUIRE((8383 + 1 + 3) / 4 == 2096);
    const auto plan = plan_batches(ds, budget);
    CHECK(plan.batches.size() == 1);
}

TEST_CASE("empty dataset gives an empty plan") {
    const auto plan = plan_batches(Dataset{}, TokenBudget{});
    CHECK(plan.batches.empty());
    CHECK(plan.total_estimated_tokens == 0);
}

TEST_CASE("budget below the minimum fragment size") {
    CHECK_THROWS_AS(plan_batches(unlabeled({10}), TokenBudget{1000, 600, 400}), Error);
    try {
        plan_batches(unlabeled({10}), TokenBudget{1000, 468, 469});
        FAIL("expected budget_too_small");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::budget_too_small);
    }
    CHECK_NOTHROW(plan_batches(unlabeled({10}), TokenBudget{1000, 468, 468}));
}

TEST_CASE("a record twice the budget is split and restored") {
    const TokenBudget budget;
    std::string text;
    int n = 0;
    while (text.size() < budget.effective_budget() * 8) {
        text += "Sentence number " + std::to_string(n++) + " talks about remote work and commuting. ";
    }
    text.pop_back();
    const auto ds = qt::make_dataset({{"P1", text}});
    const auto plan = plan_batches(ds, budget);
    std::size_t fragments = 0;
    std::string rebuilt;
    for (const auto& b : plan.batches) {
        for (const auto& f : b.fragments) {
            ++fragments;
            CHECK(oracle_cost(f) <= budget.effective_budget());
            CHECK(f.record_id == "r0");
            rebuilt += f.text;
        }
    }
    CHECK(fragments >= 2);
    CHECK(rebuilt == text);
    check_plan_invariants(ds, plan);
}

TEST_CASE("two sentences that each fit split at the sentence boundary") {
    const std::string first = "The first sentence is about flexible hours and it goes on for a while to fill space "
                              "with ordinary words that carry no meaning for the test at all, really.";
    const std::string second = "The second sentence is about the commute and it also continues for some time so "
                               "that the whole record ends up larger than the small budget here.";
    Record r;
    r.record_id = "x";
    r.text = first + " " + second;
    REQUIRE((first.size() + 2 + 3) / 4 <= 64);
    REQUIRE((r.text.size() + 1 + 3) / 4 > 64);
    const auto pieces = split_oversized_record(r, 64);
    REQUIRE(pieces.size() == 2);
    CHECK(pieces[0].text.find(first) == 0);
    CHECK(pieces[1].text.find(second) != std::string::npos);
    CHECK(pieces[0].text + pieces[1].text == r.text);
    CHECK(pieces[0].fragment_index == 0);
    CHECK(pieces[1].fragment_index == 1);
    CHECK(pieces[1].fragment_count == 2);
    CHECK(pieces[1].record_id == "x");
}

TEST_CASE("splitting falls back to whitespace and then to characters") {
    Record words;
    words.record_id = "w";
    for (int i = 0; i < 200; ++i) words.text += "word ";
    const auto word_pieces = split_oversized_record(words, 64);
    for (std::size_t i = 0; i < word_pieces.size(); ++i) {
        CHECK(oracle_cost(word_pieces[i]) <= 64);
        if (i + 1 < word_pieces.size()) CHECK(word_pieces[i].text.back() == ' ');
    }

    Record solid;
    solid.record_id = "s";
    for (int i = 0; i < 300; ++i) solid.text += "\xE2\x82\xAC";
    std::string rebuilt;
    for (const auto& p : split_oversized_record(solid, 64)) {
        CHECK(oracle_cost(p) <= 64);
        CHECK(p.text.size() % 3 == 0);
        rebuilt += p.text;
    }
    CHECK(rebuilt == solid.text);
}

TEST_CASE("split preconditions") {
    Record r;
    r.record_id = "a";
    r.text = "small";
    try {
        split_oversized_record(r, 100);
        FAIL("expected precondition_violated");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::precondition_violated);
    }
    r.text = std::string(1000, 'x');
    try {
        split_oversized_record(r, 10);
        FAIL("expected budget_too_small");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::budget_too_small);
    }
}

TEST_CASE("random 10,000-character records concatenate back exactly") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        Record r;
        r.record_id = "t" + std::to_string(trial);
        r.speaker_label = trial % 2 ? "Speaker" : "";
        r.text = qt::random_text(rng, 10000);
        const std::size_t budget = 64 + rng() % 900;
        const auto pieces = split_oversized_record(r, budget);
        std::string rebuilt;
        for (const auto& p : pieces) {
            CHECK(oracle_cost(p) <= budget);
            rebuilt += p.text;
        }
        CHECK(rebuilt == r.text);
    }
}

TEST_CASE("labels count towards the line cost") {
    RecordFragment f;
    f.speaker_label = "Moderator";
    f.text = "Hi";
    CHECK(render_fragment_line(f) == "Moderator: Hi");
    CHECK(fragment_cost(f, heuristic_counter()) == 4);
    Batch b;
    b.fragments = {f, f};
    CHECK(b.payload() == "Moderator: Hi\nModerator: Hi");
}

TEST_CASE("a pluggable counter drives packing") {
    const auto ds = qt::make_dataset({{"", "a"}, {"", "b"}, {"", "c"}, {"", "d"}});
    const TokenCounter fixed = [](std::string_view) -> std::size_t { return 100; };
    const auto plan = plan_batches(ds, TokenBudget{2000, 0, 1800}, fixed);
    REQUIRE(plan.batches.size() == 2);
    CHECK(plan.batches[0].fragments.size() == 2);
    CHECK(plan.total_estimated_tokens == 400);
}

TEST_CASE("pack_fragments re-splits oversized fragments") {
    const auto ds = unlabeled({3000, 3000, 3000});
    const auto plan = plan_batches(ds, TokenBudget{4096, 500, 500});
    REQUIRE(plan.batches.size() == 1);
    const auto smaller = pack_fragments(plan.batches[0].fragments, 1548);
    CHECK(smaller.size() == 2);
    const auto tiny = pack_fragments(plan.batches[0].fragments, 300);
    std::map<std::string, std::string> rebuilt;
    for (const auto& b : tiny) {
        CHECK(b.estimated_tokens <= 300);
        for (const auto& f : b.fragments) rebuilt[f.record_id] += f.text;
    }
    for (const auto& r : ds.records) CHECK(rebuilt[r.record_id] == r.text);
}

TEST_CASE("plan properties over random datasets") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 150; ++trial) {
        const std::size_t context = 400 + rng() % 4000;
        const TokenBudget budget{context, rng() % (context / 4), rng() % (context / 4)};
        if (budget.effective_budget() < kMinFragmentTokens) continue;
        std::vector<std::pair<std::string, std::string>> rows;
        const auto count = 1 + rng() % 40;
        for (std::size_t i = 0; i < count; ++i) {
            const auto bytes = 1 + rng() % (budget.effective_budget() * 4 * 3);
            rows.push_back({rng() % 3 ? "P" + std::to_string(rng() % 5) : "", qt::random_text(rng, bytes)});
        }
        const auto ds = qt::make_dataset(rows);
        const auto plan = plan_batches(ds, budget);
        check_plan_invariants(ds, plan);
        CHECK(plan == plan_batches(ds, budget));

        auto bigger = budget;
        bigger.context_limit += 1 + rng() % 2000;
        CHECK(plan_batches(ds, bigger).batches.size() <= plan.batches.size());
    }
}
