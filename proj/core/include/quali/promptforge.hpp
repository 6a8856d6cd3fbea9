#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "quali/corpus.hpp"
#include "quali/validation.hpp"

namespace quali {

inline constexpr int kMinThemeCount = 1;
inline constexpr int kMaxThemeCount = 50;

struct PromptConfig {
    DataType data_type = DataType::interview;
    bool role_playing = false;
    int theme_count = 10;
    std::string extra_instructions;
    std::string dataset_description;
};

/// fixed: preset scaffolding shared by every run. user_choice: predefined
/// options the analyst toggles (data type family, persona, theme count).
/// dynamic: free text typed by the analyst.
enum class Tier { fixed, user_choice, dynamic };
std::string_view to_string(Tier t) noexcept;

struct TracedFragment {
    std::string text;
    Tier tier = Tier::fixed;
};

struct PromptBundle {
    std::string background;
    std::string task;
    std::string process;
    std::string output_spec;
    /// background, task, process and output_spec joined by blank lines.
    std::string assembled;
    /// Concatenating every fragment's text reproduces `assembled` exactly.
    std::vector<TracedFragment> tier_trace;
    std::string preset_version;
};

/// The versioned text assets behind the fixed and user-choice tiers. Each
/// asset starts with `#preset-version: <semver>` and is split into
/// `[section]` blocks.
class PresetLibrary {
public:
    /// Assets compiled into the library from core/presets/.
    static const PresetLibrary& builtin();

    /// Loads common.txt, persona.txt, interview.txt, focus_group.txt and
    /// social_media.txt from `dir`. Errors: file_not_found, format_mismatch.
    static PresetLibrary from_directory(const std::filesystem::path& dir);

    /// `assets` maps asset name (e.g. "common") to its text.
    static PresetLibrary from_texts(const std::map<std::string, std::string>& assets);

    /// Throws Error(config_invalid) when the asset or section is missing.
    const std::string& section(std::string_view asset, std::string_view name) const;
    const std::string& version(std::string_view asset) const;

    /// e.g. "common@1.0.0 focus_group@1.0.0 persona@1.0.0".
    std::string version_string(DataType type, bool role_playing) const;

private:
    struct Asset {
        std::string version;
        std::map<std::string, std::string, std::less<>> sections;
    };
    std::map<std::string, Asset, std::less<>> assets_;
};

std::string_view preset_asset_name(DataType type) noexcept;

ValidationReport validate_config(const PromptConfig& config);

/// Deterministic composition of the four prompt components for batch
/// `batch_index` (1-based) of `batch_total`. Errors: config_invalid.
PromptBundle compose(const PromptConfig& config, std::size_t batch_index, std::size_t batch_total,
                     const PresetLibrary& presets = PresetLibrary::builtin());

/// compose(config, 1, 1).assembled.
std::string preview(const PromptConfig& config, const PresetLibrary& presets = PresetLibrary::builtin());

/// Prompt text actually sent for an attempt. `clarify` prepends the fixed
/// clarifier (after a policy block or refusal); `reassert_format` appends the
/// format reminder and the output specification once more (after a
/// malformed reply).
std::string augmented_prompt(const PromptBundle& bundle, bool clarify, bool reassert_format,
                             const PresetLibrary& presets = PresetLibrary::builtin());

}  // namespace quali
