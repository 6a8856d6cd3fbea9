#include <random>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "quali/chunking.hpp"
#include "quali/corpus.hpp"
#include "quali/exporter.hpp"
#include "quali/themeparse.hpp"

namespace {

using namespace quali;

Dataset synthetic(std::size_t records, std::size_t words_per_record) {
    static const std::vector<std::string> words{"remote", "work", "changed", "my", "day", "and", "the", "team",
                                                "meetings", "feel", "longer", "quiet", "home", "office"};
    std::mt19937_64 rng(7);
    Dataset ds;
    for (std::size_t i = 0; i < records; ++i) {
        Record r;
        r.record_id = "r" + std::to_string(i);
        r.ordinal = i;
        r.speaker_label = "P" + std::to_string(i % 10);
        for (std::size_t w = 0; w < words_per_record; ++w) {
            if (w) r.text += (w % 12 == 0) ? ". " : " ";
            r.text += words[rng() % words.size()];
        }
        ds.records.push_back(std::move(r));
    }
    return ds;
}

ThemeTable synthetic_table(const Dataset& ds, std::size_t themes) {
    ThemeTable t;
    for (std::size_t i = 0; i < themes; ++i) {
        ThemeEntry e;
        e.theme = "Theme " + std::to_string(i + 1);
        e.description = "Participants describe pattern " + std::to_string(i + 1) + ", in their own words.";
        for (std::size_t q = 0; q < 3; ++q) {
            const auto& text = ds.records[(i * 3 + q) % ds.records.size()].text;
            e.quotes.push_back({text.substr(0, std::min<std::size_t>(60, text.size())), std::nullopt});
        }
        e.participant_count = 3;
        t.entries.push_back(std::move(e));
    }
    return t;
}

void plan_batches_bench(benchmark::State& state) {
    const auto ds = synthetic(static_cast<std::size_t>(state.range(0)), 27);
    for (auto _ : state) benchmark::DoNotOptimize(plan_batches(ds, TokenBudget{}));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(plan_batches_bench)->Arg(345)->Arg(5000);

void plan_oversized_bench(benchmark::State& state) {
    const auto ds = synthetic(20, 3000);
    for (auto _ : state) benchmark::DoNotOptimize(plan_batches(ds, TokenBudget{}));
}
BENCHMARK(plan_oversized_bench);

void parse_theme_table_bench(benchmark::State& state) {
    const auto ds = synthetic(345, 27);
    const auto raw = "Here is the table.\n\n" + render_pipe_table(synthetic_table(ds, 20));
    for (auto _ : state) benchmark::DoNotOptimize(parse_theme_table(raw, 20));
    state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(raw.size()));
}
BENCHMARK(parse_theme_table_bench);

void verify_quotes_bench(benchmark::State& state) {
    const auto ds = synthetic(static_cast<std::size_t>(state.range(0)), 27);
    const auto table = synthetic_table(ds, 20);
    const QuoteIndex index(ds);
    for (auto _ : state) {
        auto t = table;
        benchmark::DoNotOptimize(verify_quotes(t, index));
    }
}
BENCHMARK(verify_quotes_bench)->Arg(345)->Arg(5000);

void csv_round_trip_bench(benchmark::State& state) {
    const auto ds = synthetic(345, 27);
    const auto table = synthetic_table(ds, static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(parse_csv(render_csv(table)));
}
BENCHMARK(csv_round_trip_bench)->Arg(20)->Arg(200);

}  // namespace

BENCHMARK_MAIN();
