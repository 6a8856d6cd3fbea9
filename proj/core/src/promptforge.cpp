#include "quali/promptforge.hpp"

#include <array>
#include <fstream>
#include <iterator>

#include "quali/error.hpp"
#include "quali/text.hpp"

namespace quali {

namespace detail {
// Generated from core/presets/*.txt at configure time.
const std::map<std::string, std::string>& embedded_presets();
}  // namespace detail

std::string_view to_string(Tier t) noexcept {
    switch (t) {
        case Tier::fixed: return "fixed";
        case Tier::user_choice: return "user_choice";
        case Tier::dynamic: return "dynamic";
    }
    return "fixed";
}

std::string_view preset_asset_name(DataType type) noexcept {
    return to_string(type);
}

namespace {

constexpr std::string_view kVersionHeader = "#preset-version:";
constexpr std::array<std::string_view, 5> kAssetNames = {"common", "persona", "interview", "focus_group",
                                                         "social_media"};

bool is_semver(std::string_view v) {
    const auto parts = text::split(v, '.');
    if (parts.size() != 3) return false;
    for (auto p : parts) {
        if (p.empty() || p.find_first_not_of("0123456789") != std::string_view::npos) return false;
    }
    return true;
}

std::string replace_all(std::string s, std::string_view key, std::string_view value) {
    for (auto pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos + value.size())) {
        s.replace(pos, key.size(), value);
    }
    return s;
}

}  // namespace

PresetLibrary PresetLibrary::from_texts(const std::map<std::string, std::string>& assets) {
    PresetLibrary lib;
    for (const auto& [name, body] : assets) {
        auto lines = text::split(body, '\n');
        if (lines.empty() || !lines.front().starts_with(kVersionHeader)) {
            throw Error(ErrorCode::format_mismatch, "preset '" + name + "' lacks a #preset-version header");
        }
        Asset asset;
        asset.version = std::string(text::trim(lines.front().substr(kVersionHeader.size())));
        if (!is_semver(asset.version)) {
            throw Error(ErrorCode::format_mismatch,
                        "preset '" + name + "' has a non-semver version '" + asset.version + "'");
        }
        std::string current;
        std::string content;
        auto flush = [&] {
            if (current.empty()) return;
            while (!content.empty() && (content.back() == '\n' || content.back() == '\r')) content.pop_back();
            asset.sections[current] = content;
            content.clear();
        };
        for (std::size_t i = 1; i < lines.size(); ++i) {
            auto line = lines[i];
            if (line.ends_with('\r')) line.remove_suffix(1);
            if (line.size() > 2 && line.front() == '[' && line.back() == ']') {
                flush();
                current = std::string(line.substr(1, line.size() - 2));
                continue;
            }
            if (current.empty()) continue;
            content.append(line);
            content.push_back('\n');
        }
        flush();
        lib.assets_[name] = std::move(asset);
    }
    return lib;
}

const PresetLibrary& PresetLibrary::builtin() {
    static const PresetLibrary lib = from_texts(detail::embedded_presets());
    return lib;
}

PresetLibrary PresetLibrary::from_directory(const std::filesystem::path& dir) {
    std::map<std::string, std::string> assets;
    for (auto name : kAssetNames) {
        const auto path = dir / (std::string(name) + ".txt");
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(ErrorCode::file_not_found, "preset asset not found: " + path.string());
        assets[std::string(name)] = std::string(std::istreambuf_iterator<char>(in), {});
    }
    return from_texts(assets);
}

const std::string& PresetLibrary::section(std::string_view asset, std::string_view name) const {
    const auto a = assets_.find(asset);
    if (a == assets_.end()) {
        throw Error(ErrorCode::config_invalid, "preset asset '" + std::string(asset) + "' is missing");
    }
    const auto s = a->second.sections.find(name);
    if (s == a->second.sections.end()) {
        throw Error(ErrorCode::config_invalid,
                    "preset '" + std::string(asset) + "' has no section [" + std::string(name) + "]");
    }
    return s->second;
}

const std::string& PresetLibrary::version(std::string_view asset) const {
    const auto a = assets_.find(asset);
    if (a == assets_.end()) {
        throw Error(ErrorCode::config_invalid, "preset asset '" + std::string(asset) + "' is missing");
    }
    return a->second.version;
}

std::string PresetLibrary::version_string(DataType type, bool role_playing) const {
    const auto family = preset_asset_name(type);
    std::string out = "common@" + version("common") + " " + std::string(family) + "@" + version(family);
    if (role_playing) out += " persona@" + version("persona");
    return out;
}

ValidationReport validate_config(const PromptConfig& config) {
    ValidationReport report;
    if (config.theme_count < kMinThemeCount || config.theme_count > kMaxThemeCount) {
        report.block("theme_count " + std::to_string(config.theme_count) + " is outside [" +
                     std::to_string(kMinThemeCount) + ", " + std::to_string(kMaxThemeCount) + "]");
    }
    if (text::trim(config.dataset_description).empty()) {
        report.warn("dataset description is empty; the prompt will carry no context about the data");
    }
    return report;
}

namespace {

// Builds one component while recording the tier of every byte range.
class ComponentBuilder {
public:
    explicit ComponentBuilder(std::vector<TracedFragment>& trace) : trace_(trace) {}

    void add(std::string_view fragment, Tier tier) {
        if (fragment.empty()) return;
        text_.append(fragment);
        trace_.push_back({std::string(fragment), tier});
    }

    void line(std::string_view fragment, Tier tier) {
        add(fragment, tier);
        add("\n", Tier::fixed);
    }

    std::string take() { return std::move(text_); }

private:
    std::vector<TracedFragment>& trace_;
    std::string text_;
};

}  // namespace

PromptBundle compose(const PromptConfig& config, std::size_t batch_index, std::size_t batch_total,
                     const PresetLibrary& presets) {
    const auto report = validate_config(config);
    if (!report.is_ok()) throw Error(ErrorCode::config_invalid, report.findings.front().message);
    if (batch_total == 0 || batch_index == 0 || batch_index > batch_total) {
        throw Error(ErrorCode::config_invalid, "batch " + std::to_string(batch_index) + " of " +
                                                   std::to_string(batch_total) + " is out of range");
    }
    const auto family = preset_asset_name(config.data_type);
    auto common = [&](std::string_view name) -> const std::string& { return presets.section("common", name); };

    PromptBundle bundle;
    std::vector<TracedFragment> background_trace;
    std::vector<TracedFragment> task_trace;
    std::vector<TracedFragment> process_trace;
    std::vector<TracedFragment> output_trace;

    {
        ComponentBuilder b(background_trace);
        b.line(common("heading.background"), Tier::fixed);
        b.line(presets.section(family, "marker"), Tier::user_choice);
        b.line(presets.section(family, "background"), Tier::user_choice);
        auto frame = replace_all(common("batch_frame"), "{batch_index}", std::to_string(batch_index));
        frame = replace_all(std::move(frame), "{batch_total}", std::to_string(batch_total));
        b.line(frame, Tier::fixed);
        if (!text::trim(config.dataset_description).empty()) {
            b.line(common("description_label"), Tier::fixed);
            b.line(config.dataset_description, Tier::dynamic);
        }
        bundle.background = b.take();
    }
    {
        ComponentBuilder b(task_trace);
        b.line(common("heading.task"), Tier::fixed);
        if (config.role_playing) {
            b.add(presets.section("persona", "persona") + "\n", Tier::user_choice);
        }
        b.line(common("task"), Tier::fixed);
        b.line(presets.section(family, "task"), Tier::user_choice);
        bundle.task = b.take();
    }
    {
        ComponentBuilder b(process_trace);
        b.line(common("heading.process"), Tier::fixed);
        b.line(common("process"), Tier::fixed);
        b.line(presets.section(family, "process"), Tier::user_choice);
        if (!text::trim(config.extra_instructions).empty()) {
            b.line(common("extra_label"), Tier::fixed);
            b.line(config.extra_instructions, Tier::dynamic);
        }
        bundle.process = b.take();
    }
    {
        ComponentBuilder b(output_trace);
        b.line(common("heading.output"), Tier::fixed);
        b.line(common("output"), Tier::fixed);
        b.line(replace_all(common("theme_count"), "{theme_count}", std::to_string(config.theme_count)),
               Tier::user_choice);
        bundle.output_spec = b.take();
    }

    const std::string separator = "\n";
    auto append = [&](std::vector<TracedFragment>& part, const std::string& text, bool last) {
        for (auto& f : part) bundle.tier_trace.push_back(std::move(f));
        bundle.assembled += text;
        if (!last) {
            bundle.assembled += separator;
            bundle.tier_trace.push_back({separator, Tier::fixed});
        }
    };
    append(background_trace, bundle.background, false);
    append(task_trace, bundle.task, false);
    append(process_trace, bundle.process, false);
    append(output_trace, bundle.output_spec, true);
    bundle.preset_version = presets.version_string(config.data_type, config.role_playing);
    return bundle;
}

std::string preview(const PromptConfig& config, const PresetLibrary& presets) {
    return compose(config, 1, 1, presets).assembled;
}

std::string augmented_prompt(const PromptBundle& bundle, bool clarify, bool reassert_format,
                             const PresetLibrary& presets) {
    std::string out;
    if (clarify) {
        out += presets.section("common", "clarifier");
        out += "\n\n";
    }
    out += bundle.assembled;
    if (reassert_format) {
        out += "\n";
        out += presets.section("common", "format_reminder");
        out += "\n";
        out += bundle.output_spec;
    }
    return out;
}

}  // namespace quali
