#include "mockgen.hpp"

#include <set>

#include "quali/text.hpp"
#include "quali/themeparse.hpp"

namespace quali::tools {

namespace {

const std::vector<std::string> kNames = {
    "Flexibility of schedule",     "Time saved on commuting",    "Work-life balance",
    "Social isolation",            "Technical difficulties",     "Communication challenges",
    "Productivity gains",          "Home workspace setup",       "Caregiving responsibilities",
    "Managerial trust",            "Remote onboarding",          "Physical and mental health",
    "Meeting fatigue",             "Career visibility",          "Changes in personal costs",
    "Setting boundaries",          "Collaboration tools",        "Team culture",
    "Preference for hybrid work",  "Working across time zones",
};

std::string excerpt(std::string_view text, std::size_t max_words) {
    std::vector<std::string_view> words;
    for (auto w : text::split(text, ' ')) {
        if (!w.empty()) words.push_back(w);
    }
    const auto n = std::min(words.size(), max_words);
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) out += ' ';
        out += words[i];
    }
    return text::strip_edge_punctuation(out);
}

}  // namespace

std::vector<std::string> theme_names(std::size_t count) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < count; ++i) {
        out.push_back(i < kNames.size() ? kNames[i] : "Additional theme " + std::to_string(i + 1));
    }
    return out;
}

MockScript generate_mock_script(const Dataset& dataset, const BatchPlan& plan, const MockGenOptions& options) {
    MockScript script;
    const auto names = theme_names(options.themes);
    for (const auto& batch : plan.batches) {
        std::vector<const RecordFragment*> pool;
        for (const auto& f : batch.fragments) {
            const auto* r = dataset.find(f.record_id);
            const bool lead = r && (r->role == Role::moderator || r->role == Role::interviewer);
            if (!lead && !excerpt(f.text, options.quote_words).empty()) pool.push_back(&f);
        }
        if (pool.empty()) {
            for (const auto& f : batch.fragments) {
                if (!excerpt(f.text, options.quote_words).empty()) pool.push_back(&f);
            }
        }
        ThemeTable table;
        std::size_t cursor = 0;
        for (const auto& name : names) {
            ThemeEntry e;
            e.theme = name;
            e.description = "Participants described experiences related to " + text::casefold(name) + ".";
            std::set<std::string> speakers;
            for (std::size_t q = 0; q < options.quotes_per_theme && !pool.empty(); ++q) {
                const auto* f = pool[cursor++ % pool.size()];
                e.quotes.push_back({excerpt(f->text, options.quote_words), std::nullopt});
                if (!f->speaker_label.empty()) speakers.insert(f->speaker_label);
            }
            e.participant_count = speakers.size();
            table.entries.push_back(std::move(e));
        }
        MockStep step;
        step.batch = batch.number;
        step.reply = "Here is the thematic analysis of this part of the data.\n\n" + render_pipe_table(table);
        script.steps.push_back(std::move(step));
    }
    return script;
}

}  // namespace quali::tools
