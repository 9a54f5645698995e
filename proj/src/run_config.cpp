#include "glyphrl/run_config.hpp"

#include <fstream>
#include <stdexcept>

#include "glyphrl/errors.hpp"
#include "glyphrl/text_format.hpp"

namespace glyphrl {

namespace {

std::string trim(const std::string& text) {
    const auto begin = text.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = text.find_last_not_of(" \t\r");
    return text.substr(begin, end - begin + 1);
}

bool parse_bool(const std::string& text) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw std::invalid_argument("not a bool: '" + text + "' (use true/false)");
}

ConfigField int_field(std::string name, int& target) {
    return ConfigField{std::move(name), [&target] { return std::to_string(target); },
                       [&target](const std::string& v) { target = std::stoi(v); }};
}

ConfigField i64_field(std::string name, std::int64_t& target) {
    return ConfigField{std::move(name), [&target] { return std::to_string(target); },
                       [&target](const std::string& v) { target = std::stoll(v); }};
}

ConfigField u64_field(std::string name, std::uint64_t& target) {
    return ConfigField{std::move(name), [&target] { return std::to_string(target); },
                       [&target](const std::string& v) { target = std::stoull(v); }};
}

ConfigField double_field(std::string name, double& target) {
    return ConfigField{std::move(name), [&target] { return format_double(target); },
                       [&target](const std::string& v) { target = std::stod(v); }};
}

ConfigField bool_field(std::string name, bool& target) {
    return ConfigField{std::move(name), [&target] { return target ? "true" : "false"; },
                       [&target](const std::string& v) { target = parse_bool(v); }};
}

ConfigField string_field(std::string name, std::string& target) {
    return ConfigField{std::move(name), [&target] { return target; },
                       [&target](const std::string& v) { target = v; }};
}

}  // namespace

std::vector<ConfigField> config_fields(RunConfig& config) {
    std::vector<ConfigField> fields;
    // Environment.
    fields.push_back(double_field("window_size", config.env.window_size));
    fields.push_back(int_field("num_rectan", config.env.num_rectan));
    fields.push_back(double_field("min_area", config.env.min_area));
    fields.push_back(double_field("w_min", config.env.w_min));
    fields.push_back(double_field("h_min", config.env.h_min));
    fields.push_back(double_field("min_overlap", config.env.min_overlap));
    fields.push_back(int_field("max_steps", config.env.max_steps));
    fields.push_back(double_field("action_scale", config.env.action_scale));
    // PPO.
    fields.push_back(double_field("learning_rate", config.ppo.learning_rate));
    fields.push_back(int_field("rollout_horizon", config.ppo.rollout_horizon));
    fields.push_back(int_field("minibatch_size", config.ppo.minibatch_size));
    fields.push_back(int_field("epochs_per_update", config.ppo.epochs_per_update));
    fields.push_back(double_field("gamma", config.ppo.gamma));
    fields.push_back(double_field("gae_lambda", config.ppo.gae_lambda));
    fields.push_back(double_field("clip_range", config.ppo.clip_range));
    fields.push_back(double_field("entropy_coef", config.ppo.entropy_coef));
    fields.push_back(double_field("vf_coef", config.ppo.vf_coef));
    fields.push_back(double_field("max_grad_norm", config.ppo.max_grad_norm));
    fields.push_back(bool_field("normalize_advantages", config.ppo.normalize_advantages));
    fields.push_back(i64_field("total_timesteps", config.ppo.total_timesteps));
    fields.push_back(int_field("num_envs", config.ppo.num_envs));
    fields.push_back(int_field("workers", config.ppo.workers));
    fields.push_back(int_field("checkpoint_interval", config.ppo.checkpoint_interval));
    // Run protocol. The single run seed feeds every derived stream.
    fields.push_back(u64_field("seed", config.seed));
    fields.push_back(int_field("episodes", config.episodes));
    fields.push_back(bool_field("deterministic", config.deterministic));
    fields.push_back(string_field("out_dir", config.out_dir));
    return fields;
}

std::string flag_for_field(const std::string& field_name) {
    std::string flag = "--";
    for (const char c : field_name) flag += (c == '_') ? '-' : c;
    return flag;
}

std::map<std::string, std::string> parse_flat_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidConfigError("cannot open config file: " + path.string());
    std::map<std::string, std::string> values;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string trimmed = trim(line);
        if (trimmed.empty()) continue;
        const auto eq = trimmed.find('=');
        if (eq == std::string::npos) {
            throw InvalidConfigError("config file " + path.string() + " line " +
                                     std::to_string(line_no) + ": expected key = value");
        }
        values[trim(trimmed.substr(0, eq))] = trim(trimmed.substr(eq + 1));
    }
    return values;
}

void apply_config_file(RunConfig& config, const std::map<std::string, std::string>& file_values,
                       const std::set<std::string>& overridden) {
    auto fields = config_fields(config);
    for (const auto& [key, value] : file_values) {
        bool known = false;
        for (auto& field : fields) {
            if (field.name != key) continue;
            known = true;
            if (!overridden.contains(key)) {
                try {
                    field.set(value);
                } catch (const std::exception& e) {
                    throw InvalidConfigError("config key '" + key + "': " + e.what());
                }
            }
            break;
        }
        if (!known) throw InvalidConfigError("unknown config key '" + key + "'");
    }
}

std::vector<std::pair<std::string, std::string>> resolved_entries(const RunConfig& config) {
    // config_fields takes a mutable reference; resolution only reads.
    auto& mutable_config = const_cast<RunConfig&>(config);
    std::vector<std::pair<std::string, std::string>> entries;
    for (const auto& field : config_fields(mutable_config)) {
        entries.emplace_back(field.name, field.get());
    }
    return entries;
}

}  // namespace glyphrl
