#include "quali/chunking.hpp"

#include <map>

#include "quali/corpus.hpp"
#include "quali/error.hpp"
#include "quali/text.hpp"

namespace quali {

std::size_t estimate_tokens(std::string_view text) noexcept {
    return (text.size() + 3) / 4;
}

const TokenCounter& heuristic_counter() {
    static const TokenCounter counter = [](std::string_view s) { return estimate_tokens(s); };
    return counter;
}

std::string render_fragment_line(const RecordFragment& fragment) {
    if (fragment.speaker_label.empty()) return fragment.text;
    return fragment.speaker_label + ": " + fragment.text;
}

std::size_t fragment_cost(const RecordFragment& fragment, const TokenCounter& counter) {
    return counter(render_fragment_line(fragment) + "\n");
}

std::string Batch::payload() const {
    std::string out;
    for (std::size_t i = 0; i < fragments.size(); ++i) {
        if (i > 0) out.push_back('\n');
        out += render_fragment_line(fragments[i]);
    }
    return out;
}

namespace {

void require_budget(std::size_t effective_budget) {
    if (effective_budget < kMinFragmentTokens) {
        throw Error(ErrorCode::budget_too_small,
                    "effective budget " + std::to_string(effective_budget) +
                        " tokens is below the minimum fragment size of " +
                        std::to_string(kMinFragmentTokens));
    }
}

bool is_continuation_byte(char c) {
    return (static_cast<unsigned char>(c) & 0xC0) == 0x80;
}

bool is_closing_mark(char c) {
    return c == '"' || c == '\'' || c == ')' || c == ']';
}

// Byte offsets where a new fragment may start. `sentence` holds offsets that
// follow a sentence terminator and its whitespace; `space` holds offsets that
// follow any whitespace run.
struct CutPoints {
    std::vector<std::size_t> sentence;
    std::vector<std::size_t> space;
};

CutPoints find_cut_points(std::string_view s) {
    CutPoints cuts;
    std::size_t i = 0;
    while (i < s.size()) {
        if (!text::is_space(s[i])) {
            ++i;
            continue;
        }
        const auto run_begin = i;
        bool has_newline = false;
        while (i < s.size() && text::is_space(s[i])) {
            has_newline = has_newline || s[i] == '\n';
            ++i;
        }
        if (i >= s.size() || run_begin == 0) continue;
        cuts.space.push_back(i);
        auto k = run_begin;
        while (k > 0 && is_closing_mark(s[k - 1])) --k;
        bool terminated = false;
        if (k > 0) {
            const char t = s[k - 1];
            terminated = t == '.' || t == '!' || t == '?';
            // U+2026 horizontal ellipsis
            if (!terminated && k >= 3) terminated = s.substr(k - 3, 3) == "\xE2\x80\xA6";
        }
        if (terminated || has_newline) cuts.sentence.push_back(i);
    }
    return cuts;
}

RecordFragment piece_of(const RecordFragment& parent, std::string_view text) {
    RecordFragment f;
    f.record_id = parent.record_id;
    f.ordinal = parent.ordinal;
    f.speaker_label = parent.speaker_label;
    f.text = std::string(text);
    return f;
}

// Farthest candidate in (start, limit], or 0.
std::size_t farthest(const std::vector<std::size_t>& cuts, std::size_t start, std::size_t limit) {
    std::size_t best = 0;
    for (auto c : cuts) {
        if (c > limit) break;
        if (c > start) best = c;
    }
    return best;
}

std::vector<RecordFragment> split_text(const RecordFragment& parent, std::size_t budget,
                                       const TokenCounter& counter) {
    require_budget(budget);
    const std::string_view s = parent.text;
    const auto cuts = find_cut_points(s);
    auto fits = [&](std::size_t from, std::size_t to) {
        return fragment_cost(piece_of(parent, s.substr(from, to - from)), counter) <= budget;
    };

    std::vector<RecordFragment> out;
    std::size_t start = 0;
    while (start < s.size()) {
        if (fits(start, s.size())) {
            out.push_back(piece_of(parent, s.substr(start)));
            break;
        }
        // Largest end offset that still fits.
        std::size_t lo = start;
        std::size_t hi = s.size();
        while (lo < hi) {
            const auto mid = lo + (hi - lo + 1) / 2;
            if (fits(start, mid)) lo = mid;
            else hi = mid - 1;
        }
        std::size_t cut = farthest(cuts.sentence, start, lo);
        if (cut == 0) cut = farthest(cuts.space, start, lo);
        if (cut == 0) {
            cut = lo;
            while (cut > start && cut < s.size() && is_continuation_byte(s[cut])) --cut;
        }
        if (cut <= start) {
            throw Error(ErrorCode::budget_too_small,
                        "budget of " + std::to_string(budget) +
                            " tokens cannot hold a single character of record " + parent.record_id);
        }
        out.push_back(piece_of(parent, s.substr(start, cut - start)));
        start = cut;
    }
    return out;
}

RecordFragment whole(const Record& r) {
    RecordFragment f;
    f.record_id = r.record_id;
    f.ordinal = r.ordinal;
    f.speaker_label = r.speaker_label;
    f.text = r.text;
    return f;
}

void number_fragments(std::vector<Batch>& batches) {
    std::map<std::string, std::size_t> totals;
    for (const auto& b : batches)
        for (const auto& f : b.fragments) ++totals[f.record_id];
    std::map<std::string, std::size_t> seen;
    for (auto& b : batches) {
        for (auto& f : b.fragments) {
            f.fragment_index = seen[f.record_id]++;
            f.fragment_count = totals[f.record_id];
        }
    }
}

}  // namespace

std::vector<RecordFragment> split_oversized_record(const Record& record, std::size_t effective_budget,
                                                   const TokenCounter& counter) {
    require_budget(effective_budget);
    const auto parent = whole(record);
    if (fragment_cost(parent, counter) <= effective_budget) {
        throw Error(ErrorCode::precondition_violated,
                    "record " + record.record_id + " already fits the budget; nothing to split");
    }
    auto pieces = split_text(parent, effective_budget, counter);
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        pieces[i].fragment_index = i;
        pieces[i].fragment_count = pieces.size();
    }
    return pieces;
}

std::vector<Batch> pack_fragments(const std::vector<RecordFragment>& fragments, std::size_t effective_budget,
                                  const TokenCounter& counter) {
    require_budget(effective_budget);
    std::vector<Batch> batches;
    Batch current;
    auto place = [&](RecordFragment f) {
        const auto cost = fragment_cost(f, counter);
        if (!current.fragments.empty() && current.estimated_tokens + cost > effective_budget) {
            batches.push_back(std::move(current));
            current = Batch{};
        }
        current.estimated_tokens += cost;
        current.fragments.push_back(std::move(f));
    };
    for (const auto& f : fragments) {
        if (fragment_cost(f, counter) <= effective_budget) {
            place(f);
            continue;
        }
        for (auto& piece : split_text(f, effective_budget, counter)) place(std::move(piece));
    }
    if (!current.fragments.empty()) batches.push_back(std::move(current));
    for (std::size_t i = 0; i < batches.size(); ++i) batches[i].number = i + 1;
    number_fragments(batches);
    return batches;
}

BatchPlan plan_batches(const Dataset& dataset, const TokenBudget& budget, const TokenCounter& counter) {
    const auto effective = budget.effective_budget();
    require_budget(effective);
    std::vector<RecordFragment> fragments;
    fragments.reserve(dataset.records.size());
    for (const auto& r : dataset.records) fragments.push_back(whole(r));

    BatchPlan plan;
    plan.budget = budget;
    plan.batches = pack_fragments(fragments, effective, counter);
    for (const auto& b : plan.batches) plan.total_estimated_tokens += b.estimated_tokens;
    return plan;
}

}  // namespace quali
