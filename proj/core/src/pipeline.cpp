#include "quali/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <deque>
#include <optional>
#include <set>
#include <thread>

#include "quali/consolidate.hpp"
#include "quali/error.hpp"
#include "quali/text.hpp"
#include "quali/themeparse.hpp"

namespace quali {

std::string_view to_string(RunStatus s) noexcept {
    switch (s) {
        case RunStatus::idle: return "idle";
        case RunStatus::running: return "running";
        case RunStatus::needs_attention: return "needs_attention";
        case RunStatus::complete: return "complete";
        case RunStatus::aborted: return "aborted";
    }
    return "idle";
}

std::string_view to_string(FailureClass f) noexcept {
    switch (f) {
        case FailureClass::usage: return "usage";
        case FailureClass::ingest: return "ingest";
        case FailureClass::gateway: return "gateway";
        case FailureClass::parse: return "parse";
        case FailureClass::io: return "io";
    }
    return "usage";
}

std::string_view to_string(BatchStatus s) noexcept {
    switch (s) {
        case BatchStatus::pending: return "pending";
        case BatchStatus::running: return "running";
        case BatchStatus::recovering: return "recovering";
        case BatchStatus::done: return "done";
        case BatchStatus::failed: return "failed";
    }
    return "pending";
}

FailureClass failure_class(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::file_not_found:
        case ErrorCode::format_mismatch:
        case ErrorCode::mapping_error:
        case ErrorCode::empty_dataset: return FailureClass::ingest;
        case ErrorCode::io_error:
        case ErrorCode::header_mismatch:
        case ErrorCode::row_arity_error: return FailureClass::io;
        case ErrorCode::auth_failed: return FailureClass::gateway;
        default: return FailureClass::usage;
    }
}

std::unique_ptr<Clock> clock_for(const Backend& backend) {
    if (backend.simulated()) return std::make_unique<VirtualClock>();
    return std::make_unique<SystemClock>();
}

// ---- preparation ----------------------------------------------------------------

namespace {

std::size_t worst_prompt_tokens(const PromptConfig& config, std::size_t total, const RunOptions& options) {
    const auto& presets = options.preset_library();
    const auto bundle = compose(config, total, total, presets);
    return options.counter(augmented_prompt(bundle, true, true, presets));
}

}  // namespace

PreparedRun prepare_run(const Dataset& dataset, const PromptConfig& config, const RunOptions& options) {
    PreparedRun run;
    const auto config_report = validate_config(config);
    for (const auto& f : config_report.findings) {
        if (f.severity == Severity::blocking) throw Error(ErrorCode::config_invalid, f.message);
    }
    if (dataset.records.empty()) throw Error(ErrorCode::empty_dataset, "the dataset has no records");
    run.validation = validate_dataset(dataset);
    for (const auto& f : run.validation.findings) {
        if (f.severity == Severity::blocking) throw Error(ErrorCode::format_mismatch, f.message);
    }
    for (const auto& f : config_report.findings) run.validation.findings.push_back(f);

    run.budget = options.budget;
    std::size_t batches = 1;
    for (int round = 0; round < 4; ++round) {
        const auto need = worst_prompt_tokens(config, std::max<std::size_t>(batches, 1), options);
        if (need > run.budget.prompt_reserve) {
            run.notes.push_back("prompt reserve raised from " + std::to_string(run.budget.prompt_reserve) + " to " +
                                std::to_string(need) + " tokens to fit the longest prompt");
            run.budget.prompt_reserve = need;
        }
        run.plan = plan_batches(dataset, run.budget, options.counter);
        if (run.plan.batches.size() == batches) break;
        batches = run.plan.batches.size();
    }
    run.first_prompt = compose(config, 1, run.plan.batches.size(), options.preset_library());
    run.cost = estimate_cost(run.plan, run.first_prompt, options.rates, options.counter);
    return run;
}

// ---- execution ------------------------------------------------------------------

namespace {

struct WorkItem {
    std::string label;
    std::vector<RecordFragment> fragments;  // the unit this item answers for
    std::vector<RecordFragment> send;       // what the next request carries
    std::size_t budget = 0;
    AttemptState attempt;
    bool clarify = false;
    bool reassert = false;
    ThemeTable kept;  // rows already accepted from earlier partial replies
    bool tail = false;
};

struct BatchOutcome {
    std::vector<ThemeTable> tables;
    std::optional<AbortCause> abort;
    bool cancelled = false;
};

std::string payload_of(const std::vector<RecordFragment>& fragments) {
    std::string out;
    for (std::size_t i = 0; i < fragments.size(); ++i) {
        if (i) out += '\n';
        out += render_fragment_line(fragments[i]);
    }
    return out;
}

FailureClass class_of(ErrorKind k) {
    switch (k) {
        case ErrorKind::count_mismatch:
        case ErrorKind::format_error:
        case ErrorKind::content_misread: return FailureClass::parse;
        default: return FailureClass::gateway;
    }
}

// Appends rows of `extra` whose theme is not in `into` yet.
void absorb(ThemeTable& into, const ThemeTable& extra) {
    std::set<std::string> seen;
    for (const auto& e : into.entries) seen.insert(normalize_theme(e.theme));
    for (const auto& e : extra.entries) {
        if (seen.insert(normalize_theme(e.theme)).second) into.entries.push_back(e);
    }
}

// Fragments after the last one any quote of `partial` points into, with
// `overlap` earlier fragments re-sent for context.
std::vector<RecordFragment> unprocessed_tail(const std::vector<RecordFragment>& sent, const ThemeTable& partial,
                                             std::size_t overlap) {
    std::vector<std::string> normalized;
    normalized.reserve(sent.size());
    for (const auto& f : sent) normalized.push_back(normalize_record_text(f.text));
    std::optional<std::size_t> last;
    for (const auto& e : partial.entries) {
        for (const auto& q : e.quotes) {
            const auto needle = normalize_quote(q.text);
            if (needle.empty()) continue;
            for (std::size_t i = sent.size(); i-- > 0;) {
                if (normalized[i].find(needle) != std::string::npos) {
                    if (!last || i > *last) last = i;
                    break;
                }
            }
        }
    }
    if (!last) return sent;
    const auto next = *last + 1;
    const auto start = next > overlap ? next - overlap : 0;
    return std::vector<RecordFragment>(sent.begin() + static_cast<std::ptrdiff_t>(start), sent.end());
}

class Runner {
public:
    Runner(SessionState& state, const PromptConfig& config, Backend& backend, Clock& clock,
           const RunOptions& options, const Dataset& dataset, const BatchPlan& plan, std::stop_token stop)
        : state_(state),
          config_(config),
          backend_(backend),
          clock_(clock),
          options_(options),
          dataset_(dataset),
          plan_(plan),
          index_(dataset),
          stop_(std::move(stop)) {}

    BatchOutcome run_batch(const Batch& batch) {
        BatchOutcome outcome;
        const auto total = plan_.batches.size();
        const auto& presets = options_.preset_library();
        const auto base = compose(config_, batch.number, total, presets);

        std::deque<WorkItem> queue;
        WorkItem first;
        first.label = std::to_string(batch.number);
        first.fragments = batch.fragments;
        first.send = batch.fragments;
        first.budget = plan_.budget.effective_budget();
        first.attempt.effective_budget = first.budget;
        first.attempt.batch_records = batch.fragments.size();
        queue.push_back(std::move(first));

        set_batch(batch.number, BatchStatus::running, std::nullopt);
        const auto expected_total = static_cast<std::size_t>(config_.theme_count);
        std::size_t attempt_no = 0;

        while (!queue.empty()) {
            auto item = std::move(queue.front());
            queue.pop_front();
            while (true) {
                if (stop_.stop_requested() || halted_.load()) {
                    outcome.cancelled = true;
                    return outcome;
                }
                const auto remaining = expected_total - std::min(expected_total, item.kept.entries.size());
                PromptBundle bundle = base;
                if (item.tail && remaining != expected_total) {
                    auto cfg = config_;
                    cfg.theme_count = static_cast<int>(remaining);
                    bundle = compose(cfg, batch.number, total, presets);
                }
                LlmRequest request;
                request.model_id = options_.model_id;
                request.temperature = options_.temperature;
                request.max_completion_tokens = plan_.budget.completion_reserve;
                request.context_limit = plan_.budget.context_limit;
                request.batch_number = batch.number;
                request.prompt = augmented_prompt(bundle, item.clarify, item.reassert, presets);
                request.payload = payload_of(item.send);

                ++attempt_no;
                const auto label = item.tail ? item.label + "+tail" : item.label;
                SubmitResult result;
                try {
                    result = submit(request, backend_, options_.counter);
                } catch (const Error& e) {
                    outcome.abort = AbortCause{FailureClass::usage, std::string(to_string(e.code())), e.what()};
                    set_batch(batch.number, BatchStatus::failed, std::nullopt);
                    return outcome;
                }
                Exchange exchange{batch.number, label, attempt_no, request.prompt, request.payload, {}, std::nullopt};

                std::optional<GatewayError> error;
                std::optional<ThemeTable> accepted;
                if (auto* raw = std::get_if<RawResponse>(&result)) {
                    exchange.response = raw->text;
                    auto parsed = parse_theme_table(raw->text, remaining);
                    if (auto* table = std::get_if<ThemeTable>(&parsed)) {
                        ThemeTable combined = item.kept;
                        absorb(combined, *table);
                        if (combined.entries.size() != expected_total) {
                            error = GatewayError::of(ErrorKind::count_mismatch,
                                                     "repeated themes left " +
                                                         std::to_string(combined.entries.size()) + " of " +
                                                         std::to_string(expected_total));
                            item.kept = combined;
                            item.tail = true;
                        } else {
                            auto check = combined;
                            const auto report = verify_quotes(check, index_);
                            if (report.total() > 0 && report.verified == 0) {
                                error = GatewayError::of(ErrorKind::content_misread,
                                                         "none of the quotes occur in the data");
                                item.kept = ThemeTable{};
                            } else {
                                accepted = std::move(check);
                            }
                        }
                    } else {
                        auto& failure = std::get<ParseFailure>(parsed);
                        error = failure.error;
                        if (failure.error.kind == ErrorKind::count_mismatch && failure.partial) {
                            if (failure.partial->entries.size() > remaining) {
                                // surplus rows: ask again for the same data
                                error->raw_message += "; asking again";
                            } else {
                                absorb(item.kept, *failure.partial);
                                item.send = unprocessed_tail(item.send, *failure.partial, options_.tail_overlap);
                                item.tail = true;
                            }
                        }
                    }
                } else {
                    error = std::get<GatewayError>(result);
                    exchange.response = error->raw_message;
                }
                if (error) exchange.error = error->kind;
                log_exchange(std::move(exchange));

                if (accepted) {
                    accepted->source_batch = item.label;
                    accepted->model_id = options_.model_id;
                    accepted->preset_version = base.preset_version;
                    accepted->temperature = options_.temperature;
                    recount_participants(*accepted, dataset_);
                    outcome.tables.push_back(std::move(*accepted));
                    clear_attention();
                    break;
                }

                const auto action = recovery_policy(*error, item.attempt, options_.limits);
                log_recovery(RecoveryEntry{batch.number, label, error->kind, action.action,
                                           action.reason, action.delay});
                if (action.action == ActionKind::abort) {
                    outcome.abort = AbortCause{class_of(error->kind), std::string(to_string(error->kind)),
                                               "batch " + label + ": " + action.reason};
                    set_batch(batch.number, BatchStatus::failed, error->kind);
                    return outcome;
                }
                set_batch(batch.number, BatchStatus::recovering, error->kind);
                ++item.attempt.retries[action.action];
                bool requeued = false;

                switch (action.action) {
                    case ActionKind::retry_backoff:
                    case ActionKind::wait_then_retry:
                        if (!clock_.sleep_for(action.delay, stop_)) {
                            outcome.cancelled = true;
                            return outcome;
                        }
                        break;
                    case ActionKind::resplit_smaller: {
                        auto pieces = pack_fragments(item.fragments, action.new_budget, options_.counter);
                        item.budget = action.new_budget;
                        item.attempt.effective_budget = action.new_budget;
                        item.kept = ThemeTable{};
                        item.tail = false;
                        if (pieces.size() <= 1) {
                            item.fragments = pieces.empty() ? item.fragments : pieces.front().fragments;
                            item.send = item.fragments;
                            break;
                        }
                        std::vector<WorkItem> subs;
                        for (std::size_t p = 0; p < pieces.size(); ++p) {
                            WorkItem sub;
                            sub.label = item.label + "." + std::to_string(p + 1);
                            sub.fragments = pieces[p].fragments;
                            sub.send = sub.fragments;
                            sub.budget = action.new_budget;
                            sub.attempt = item.attempt;
                            sub.attempt.batch_records = sub.fragments.size();
                            sub.clarify = item.clarify;
                            sub.reassert = item.reassert;
                            subs.push_back(std::move(sub));
                        }
                        for (auto it = subs.rbegin(); it != subs.rend(); ++it) queue.push_front(std::move(*it));
                        requeued = true;
                        break;
                    }
                    case ActionKind::reclarify_prompt: item.clarify = true; break;
                    case ActionKind::reassert_format:
                        item.reassert = true;
                        item.send = item.fragments;
                        item.kept = ThemeTable{};
                        item.tail = false;
                        break;
                    case ActionKind::reinject_tail: break;
                    case ActionKind::abort: break;
                }
                if (requeued) break;
            }
        }
        set_batch(batch.number, BatchStatus::done, std::nullopt);
        return outcome;
    }

    void halt() { halted_.store(true); }

private:
    void set_batch(std::size_t number, BatchStatus status, std::optional<ErrorKind> error) {
        state_.update([&](AnalysisSession& s) {
            for (auto& b : s.batches) {
                if (b.number != number) continue;
                b.status = status;
                if (status == BatchStatus::running || status == BatchStatus::recovering) ++b.attempts;
                if (error) b.last_error = error;
            }
            if (status == BatchStatus::recovering && s.status == RunStatus::running) {
                s.status = RunStatus::needs_attention;
            }
        });
    }

    void clear_attention() {
        state_.update([](AnalysisSession& s) {
            if (s.status == RunStatus::needs_attention) s.status = RunStatus::running;
        });
    }

    void log_exchange(Exchange x) {
        state_.update([&](AnalysisSession& s) { s.exchanges.push_back(std::move(x)); });
    }

    void log_recovery(RecoveryEntry r) {
        state_.update([&](AnalysisSession& s) { s.recovery_log.push_back(std::move(r)); });
    }

    SessionState& state_;
    const PromptConfig& config_;
    Backend& backend_;
    Clock& clock_;
    const RunOptions& options_;
    const Dataset& dataset_;
    const BatchPlan& plan_;
    QuoteIndex index_;
    std::stop_token stop_;
    std::atomic<bool> halted_{false};
};

void abort_session(SessionState& state, AbortCause cause) {
    state.update([&](AnalysisSession& s) {
        s.status = RunStatus::aborted;
        s.abort = std::move(cause);
    });
}

}  // namespace

void run_analysis(SessionState& state, const DatasetSource& ingest, const PromptConfig& config, Backend& backend,
                  Clock& clock, const RunOptions& options, std::stop_token stop) {
    state.update([&](AnalysisSession& s) {
        s.status = RunStatus::running;
        s.config = config;
        s.model_id = options.model_id;
        s.backend = backend.name();
        s.abort.reset();
        s.results.clear();
        s.merged.reset();
        s.provenance.reset();
        s.exchanges.clear();
        s.recovery_log.clear();
        s.warnings.clear();
        s.batches.clear();
    });

    Dataset dataset;
    PreparedRun prepared;
    try {
        dataset = ingest();
        state.update([&](AnalysisSession& s) { s.dataset = dataset; });
        prepared = prepare_run(dataset, config, options);
    } catch (const Error& e) {
        abort_session(state, AbortCause{failure_class(e.code()), std::string(to_string(e.code())), e.what()});
        return;
    } catch (const std::exception& e) {
        abort_session(state, AbortCause{FailureClass::ingest, "FormatMismatch", e.what()});
        return;
    }

    state.update([&](AnalysisSession& s) {
        s.plan = prepared.plan;
        s.cost = prepared.cost;
        s.preset_version = prepared.first_prompt.preset_version;
        for (const auto& f : prepared.validation.findings) s.warnings.push_back(f.message);
        for (const auto& n : prepared.notes) s.warnings.push_back(n);
        for (const auto& b : prepared.plan.batches) {
            BatchState st;
            st.number = b.number;
            s.batches.push_back(st);
        }
    });

    const auto& plan = prepared.plan;
    Runner runner(state, config, backend, clock, options, dataset, plan, stop);
    std::vector<BatchOutcome> outcomes(plan.batches.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            const auto i = next.fetch_add(1);
            if (i >= plan.batches.size()) return;
            outcomes[i] = runner.run_batch(plan.batches[i]);
            if (outcomes[i].abort) runner.halt();
        }
    };
    const auto threads = std::clamp<std::size_t>(options.parallelism, 1, std::max<std::size_t>(plan.batches.size(), 1));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }

    // order the logs by batch
    state.update([](AnalysisSession& s) {
        std::stable_sort(s.exchanges.begin(), s.exchanges.end(),
                         [](const Exchange& a, const Exchange& b) { return a.batch < b.batch; });
        std::stable_sort(s.recovery_log.begin(), s.recovery_log.end(),
                         [](const RecoveryEntry& a, const RecoveryEntry& b) { return a.batch < b.batch; });
    });

    for (const auto& o : outcomes) {
        if (o.abort) {
            abort_session(state, *o.abort);
            return;
        }
    }
    const bool cancelled = stop.stop_requested() ||
                           std::any_of(outcomes.begin(), outcomes.end(), [](const BatchOutcome& o) { return o.cancelled; });
    if (cancelled) {
        abort_session(state, AbortCause{FailureClass::usage, "Cancelled", "the run was cancelled"});
        return;
    }

    std::vector<ThemeTable> tables;
    for (auto& o : outcomes) {
        for (auto& t : o.tables) tables.push_back(std::move(t));
    }
    auto merged = merge_tables(tables, static_cast<std::size_t>(config.theme_count), dataset);
    const auto report = verify_quotes(merged.table, dataset);
    state.update([&](AnalysisSession& s) {
        s.results = std::move(tables);
        s.merged = std::move(merged.table);
        s.provenance = report;
        for (auto& w : merged.warnings) s.warnings.push_back(std::move(w));
        s.status = RunStatus::complete;
    });
}

}  // namespace quali
