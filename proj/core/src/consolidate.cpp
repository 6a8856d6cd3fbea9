#include "quali/consolidate.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "quali/error.hpp"
#include "quali/text.hpp"

namespace quali {

std::string merge_key(std::string_view theme) {
    std::string folded = text::casefold(theme);
    std::string out;
    out.reserve(folded.size());
    for (char c : folded) {
        switch (c) {
            case '-':
            case '_':
            case '/': out += ' '; break;
            case '.':
            case ',':
            case ';':
            case ':':
            case '!':
            case '?':
            case '\'':
            case '"':
            case '(':
            case ')':
            case '[':
            case ']': break;
            default: out += c;
        }
    }
    return text::collapse_whitespace(out);
}

namespace {

struct Group {
    ThemeEntry entry;
    std::set<std::string> quote_keys;
    std::size_t first_seen = 0;
    std::size_t verified = 0;
};

}  // namespace

MergeResult merge_tables(const std::vector<ThemeTable>& tables, std::size_t target_count, const Dataset& dataset) {
    if (tables.empty()) throw Error(ErrorCode::precondition_violated, "nothing to merge");
    if (target_count < 1) throw Error(ErrorCode::precondition_violated, "target theme count must be at least 1");

    std::vector<Group> groups;
    std::map<std::string, std::size_t> by_key;
    std::size_t order = 0;
    for (const auto& table : tables) {
        for (const auto& e : table.entries) {
            const auto key = merge_key(e.theme);
            auto [it, inserted] = by_key.try_emplace(key, groups.size());
            if (inserted) {
                Group g;
                g.entry.theme = e.theme;
                g.entry.description = e.description;
                g.first_seen = order;
                groups.push_back(std::move(g));
            }
            auto& g = groups[it->second];
            if (e.description.size() > g.entry.description.size()) g.entry.description = e.description;
            const auto claimed = e.claimed_count.value_or(e.participant_count);
            g.entry.claimed_count = std::max(g.entry.claimed_count.value_or(0), claimed);
            for (const auto& q : e.quotes) {
                if (g.quote_keys.insert(normalize_quote(q.text)).second) g.entry.quotes.push_back(q);
            }
            ++order;
        }
    }

    ThemeTable merged;
    merged.source_batch = "merged";
    merged.model_id = tables.front().model_id;
    merged.preset_version = tables.front().preset_version;
    merged.temperature = tables.front().temperature;
    for (auto& g : groups) merged.entries.push_back(std::move(g.entry));

    verify_quotes(merged, dataset);
    recount_participants(merged, dataset);
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const auto& qs = merged.entries[i].quotes;
        groups[i].verified = static_cast<std::size_t>(
            std::count_if(qs.begin(), qs.end(), [](const Quote& q) { return q.matched_record_id.has_value(); }));
    }

    std::vector<std::size_t> idx(groups.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const auto& ea = merged.entries[a];
        const auto& eb = merged.entries[b];
        if (ea.participant_count != eb.participant_count) return ea.participant_count > eb.participant_count;
        if (groups[a].verified != groups[b].verified) return groups[a].verified > groups[b].verified;
        return groups[a].first_seen < groups[b].first_seen;
    });

    MergeResult result;
    if (groups.size() < target_count) {
        result.warnings.push_back("only " + std::to_string(groups.size()) + " distinct themes for a target of " +
                                  std::to_string(target_count));
    }
    const auto keep = std::min(target_count, idx.size());
    result.table.source_batch = merged.source_batch;
    result.table.model_id = merged.model_id;
    result.table.preset_version = merged.preset_version;
    result.table.temperature = merged.temperature;
    for (std::size_t i = 0; i < keep; ++i) result.table.entries.push_back(std::move(merged.entries[idx[i]]));
    return result;
}

}  // namespace quali
