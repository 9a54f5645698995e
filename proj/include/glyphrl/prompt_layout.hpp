#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "glyphrl/geometry.hpp"
#include "glyphrl/policy_net.hpp"

namespace glyphrl {

/// Keywords pulled out of a prompt: every double-quoted span, split on
/// whitespace, concatenated across spans in order.
struct PromptSpec {
    std::string raw_prompt;
    std::vector<std::string> keywords;
    std::string keyword_string;  // keywords joined with '/'
};

PromptSpec extract_keywords(const std::string& prompt);

struct LayoutEntry {
    std::string keyword;
    Rect box;
};

struct Layout {
    double window_size = 0.0;
    std::vector<LayoutEntry> entries;
    // Generator provenance.
    std::string checkpoint_id;
    std::uint64_t seed = 0;
    int steps_used = 0;
    double final_overlap = 0.0;
};

/// Runs a deterministic rollout and pairs keywords with the final boxes by
/// index. The environment is sized min(#keywords, policy box count); excess
/// keywords are merged into the last entry's label. When the prompt has
/// fewer keywords than the policy was trained for, the observation is
/// zero-padded up to the policy's input width and the surplus action rows
/// are dropped. `reading_order` re-sorts boxes top-to-bottom, left-to-right
/// before pairing. Throws EmptyLayoutError when there are no keywords.
Layout generate_layout(const PromptSpec& prompt, const Checkpoint& checkpoint,
                       const std::string& checkpoint_id, std::uint64_t seed,
                       bool reading_order = false);

/// Versioned JSON document; coordinates are rounded half away from zero to
/// integers and clamped to the window. serialize(parse(x)) == x byte for
/// byte. Throws EmptyLayoutError for a layout with no entries.
std::string serialize_layout(const Layout& layout);
Layout parse_layout(const std::string& text);

void save_layout(const std::filesystem::path& path, const Layout& layout);
Layout load_layout(const std::filesystem::path& path);

/// Standalone SVG: one rectangle outline plus one label per entry, stroke
/// colors cycling a fixed palette, canvas window_size * scale square.
std::string render_svg(const Layout& layout, double scale);

}  // namespace glyphrl
