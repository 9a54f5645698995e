#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "glyphrl/glyph_env.hpp"
#include "glyphrl/ppo_trainer.hpp"

namespace glyphrl {

/// Everything a run needs: environment, PPO hyperparameters, evaluation
/// protocol, and I/O. Field defaults are the single source of truth;
/// values resolve as CLI flag > config file > default.
struct RunConfig {
    EnvConfig env;
    PpoConfig ppo;
    std::uint64_t seed = 0;
    int episodes = 200;
    bool deterministic = true;
    std::string out_dir = "glyphrl_out";
};

/// One settable/printable field of RunConfig; names are the snake_case
/// field names, which are also the config-file keys (flags use the
/// kebab-case form of the same names).
struct ConfigField {
    std::string name;
    std::function<std::string()> get;
    std::function<void(const std::string&)> set;  // throws std::invalid_argument on bad values
};

std::vector<ConfigField> config_fields(RunConfig& config);

/// Kebab-case flag for a field name: "min_area" -> "--min-area".
std::string flag_for_field(const std::string& field_name);

/// Parses a flat `key = value` document ('#' starts a comment). Unknown
/// keys are rejected later, in apply_config_file.
std::map<std::string, std::string> parse_flat_config(const std::filesystem::path& path);

/// Applies file values to every field NOT in `overridden` (the fields the
/// user pinned on the command line). Throws InvalidConfigError on unknown
/// keys or unparsable values.
void apply_config_file(RunConfig& config, const std::map<std::string, std::string>& file_values,
                       const std::set<std::string>& overridden);

/// Ordered name=value pairs of the fully resolved config, for provenance
/// printing and CSV echo lines.
std::vector<std::pair<std::string, std::string>> resolved_entries(const RunConfig& config);

}  // namespace glyphrl
