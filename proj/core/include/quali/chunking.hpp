#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace quali {

struct Dataset;
struct Record;

/// Token counting contract: deterministic, non-negative. The default is the
/// byte heuristic below; an exact tokenizer can be plugged in anywhere a
/// TokenCounter is accepted.
using TokenCounter = std::function<std::size_t(std::string_view)>;

/// ceil(utf8_bytes / 4).
std::size_t estimate_tokens(std::string_view text) noexcept;

const TokenCounter& heuristic_counter();

inline constexpr std::size_t kMinFragmentTokens = 64;

struct TokenBudget {
    std::size_t context_limit = 4096;
    std::size_t prompt_reserve = 600;
    std::size_t completion_reserve = 1200;

    /// context_limit - prompt_reserve - completion_reserve, or 0 when the
    /// reserves consume the whole context.
    std::size_t effective_budget() const noexcept {
        const auto reserved = prompt_reserve + completion_reserve;
        return reserved >= context_limit ? 0 : context_limit - reserved;
    }
};

/// A contiguous byte range of one record. An unsplit record is a single
/// fragment with fragment_count == 1.
struct RecordFragment {
    std::string record_id;
    std::size_t ordinal = 0;
    std::string speaker_label;
    std::size_t fragment_index = 0;
    std::size_t fragment_count = 1;
    std::string text;

    bool operator==(const RecordFragment&) const = default;
};

/// How a fragment appears in the batch payload: "LABEL: text", or the bare
/// text when the record has no speaker label.
std::string render_fragment_line(const RecordFragment& fragment);

/// Token cost of one payload line (rendered fragment plus its newline).
std::size_t fragment_cost(const RecordFragment& fragment, const TokenCounter& counter);

struct Batch {
    std::size_t number = 1;  // 1-based position in the plan
    std::vector<RecordFragment> fragments;
    std::size_t estimated_tokens = 0;

    /// Payload text sent to the model: rendered lines joined by '\n'.
    std::string payload() const;

    bool operator==(const Batch&) const = default;
};

struct BatchPlan {
    std::vector<Batch> batches;
    TokenBudget budget;
    std::size_t total_estimated_tokens = 0;

    bool operator==(const BatchPlan& o) const {
        return batches == o.batches && total_estimated_tokens == o.total_estimated_tokens &&
               budget.context_limit == o.budget.context_limit &&
               budget.prompt_reserve == o.budget.prompt_reserve &&
               budget.completion_reserve == o.budget.completion_reserve;
    }
};

/// Cuts a record whose payload line exceeds `effective_budget` into ordered
/// fragments, each within budget. Cuts prefer sentence boundaries, then
/// whitespace, then any UTF-8 character boundary; fragment texts concatenate
/// back to the record text exactly.
/// Errors: precondition_violated when the record already fits,
/// budget_too_small when effective_budget < kMinFragmentTokens.
std::vector<RecordFragment> split_oversized_record(const Record& record, std::size_t effective_budget,
                                                   const TokenCounter& counter = heuristic_counter());

/// Greedy in-order packing: fragments join the current batch while the sum
/// of their costs stays <= effective budget; oversized records are split
/// first. Errors: budget_too_small.
BatchPlan plan_batches(const Dataset& dataset, const TokenBudget& budget,
                       const TokenCounter& counter = heuristic_counter());

/// Packing step on an explicit fragment list (used when a batch has to be
/// re-split with a smaller budget). Fragments whose cost exceeds the budget
/// are split further; already-split fragments keep their parent identity.
std::vector<Batch> pack_fragments(const std::vector<RecordFragment>& fragments,
                                  std::size_t effective_budget,
                                  const TokenCounter& counter = heuristic_counter());

}  // namespace quali
