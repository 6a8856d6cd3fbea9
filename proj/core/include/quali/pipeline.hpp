#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <stop_token>
#include <string>
#include <vector>

#include "quali/clock.hpp"
#include "quali/error.hpp"
#include "quali/llmgateway.hpp"
#include "quali/promptforge.hpp"
#include "quali/session.hpp"
#include "quali/validation.hpp"

namespace quali {

struct RunOptions {
    TokenBudget budget;
    RecoveryLimits limits;
    std::string model_id{kDefaultModel};
    double temperature = 0.2;
    Rates rates = RatesTable::defaults().lookup(kDefaultModel);
    /// Batches in flight at once.
    std::size_t parallelism = 1;
    /// Records re-sent before the unprocessed tail on a row-count mismatch.
    std::size_t tail_overlap = 2;
    TokenCounter counter = heuristic_counter();
    const PresetLibrary* presets = nullptr;  // nullptr: builtin

    const PresetLibrary& preset_library() const { return presets ? *presets : PresetLibrary::builtin(); }
};

/// Everything decided before the first request: the plan, the prompt for
/// batch 1 and the up-front cost estimate. `budget` may carry a larger
/// prompt reserve than requested when the longest prompt variant needs it.
struct PreparedRun {
    BatchPlan plan;
    PromptBundle first_prompt;
    CostEstimate cost;
    TokenBudget budget;
    ValidationReport validation;
    std::vector<std::string> notes;
};

/// Validation, planning, composition and cost, without contacting a model.
/// Errors: config_invalid, empty_dataset, format_mismatch (blocking dataset
/// findings), budget_too_small.
PreparedRun prepare_run(const Dataset& dataset, const PromptConfig& config, const RunOptions& options);

/// Session record shared between a running analysis and its observers.
/// Reads take the lock briefly and copy.
class SessionState {
public:
    explicit SessionState(AnalysisSession session = {}) : session_(std::move(session)) {}

    AnalysisSession snapshot() const {
        std::lock_guard lock(mutex_);
        return session_;
    }

    template <class F>
    auto read(F&& f) const {
        std::lock_guard lock(mutex_);
        return f(session_);
    }

    template <class F>
    auto update(F&& f) {
        std::lock_guard lock(mutex_);
        return f(session_);
    }

private:
    mutable std::mutex mutex_;
    AnalysisSession session_;
};

using DatasetSource = std::function<Dataset()>;

/// ingest -> validate -> plan -> compose -> submit (with recovery) -> parse
/// -> verify -> recount -> merge. The outcome lands in `state`: status
/// complete with a merged table, or aborted with a cause. A stop request is
/// honoured between requests and during waits. Never throws for pipeline
/// failures.
void run_analysis(SessionState& state, const DatasetSource& ingest, const PromptConfig& config,
                  Backend& backend, Clock& clock, const RunOptions& options, std::stop_token stop = {});

/// VirtualClock for simulated backends, SystemClock otherwise.
std::unique_ptr<Clock> clock_for(const Backend& backend);

/// Exit code / failure class for an ingest or configuration error.
FailureClass failure_class(ErrorCode code) noexcept;

}  // namespace quali
