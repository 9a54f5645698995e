#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "glyphrl/glyph_env.hpp"
#include "glyphrl/policy_net.hpp"
#include "glyphrl/ppo_trainer.hpp"

namespace glyphrl {

struct EpisodeMetrics {
    double episode_return = 0.0;
    int steps = 0;
    double final_overlap = 0.0;
    bool succeeded = false;  // done before truncation
};

struct BenchReport {
    int episodes = 0;
    double mean_reward = 0.0;
    double reward_std = 0.0;         // sample std dev over episodes
    double mean_final_overlap = 0.0;
    double success_rate = 0.0;
    double mean_steps = 0.0;
    std::uint64_t policy_bytes = 0;  // serialized checkpoint size; 0 for the random baseline
    // Median wall time per episode. Timing is inherently run-dependent, so
    // this never goes into the deterministic CSV outputs.
    double wall_time_per_episode_ms = 0.0;
};

/// Maps an observation to an action; lets the bench drive MLP policies,
/// random baselines and hand-written oracles through one episode runner.
using ActionFn = std::function<Action(const std::vector<double>& obs)>;

/// Runs one episode to done/truncation from a fresh env seeded with
/// `env_seed`; the return is the undiscounted reward sum.
EpisodeMetrics run_episode(const EnvConfig& cfg, std::uint64_t env_seed, const ActionFn& act);

struct EvalProtocol {
    int episodes = 200;
    bool deterministic = true;  // tanh(mean) actions; stochastic sampling otherwise
    std::uint64_t seed = 0;
    int workers = 1;            // episodes run embarrassingly parallel
};

/// Evaluates a policy over the protocol's episode count with per-episode
/// seeds derived from (seed, index). Aggregation is a fixed-order serial
/// reduce, so reports are identical for any worker count. Throws
/// ContractViolationError when the checkpoint was trained for a different
/// box count than env_cfg requests.
BenchReport evaluate_policy(const EnvConfig& env_cfg, const PolicyParams& policy,
                            const EvalProtocol& protocol,
                            std::vector<EpisodeMetrics>* per_episode = nullptr);

/// Same protocol with actions drawn uniform in [-1, 1]^(N x 4).
BenchReport random_baseline(const EnvConfig& env_cfg, const EvalProtocol& protocol,
                            std::vector<EpisodeMetrics>* per_episode = nullptr);

struct InferenceTiming {
    double ms_per_layout = 0.0;          // median over episodes, warm-up excluded
    std::uint64_t policy_bytes = 0;
    std::uint64_t peak_rss_delta_kb = 0; // VmHWM growth across the timed phase
};

InferenceTiming measure_inference(const EnvConfig& env_cfg, const PolicyParams& policy,
                                  int episodes, std::uint64_t seed);

// --- Ablation sweeps --------------------------------------------------------

struct AblationProtocol {
    PpoConfig ppo;                   // total_timesteps is the per-row training budget
    int episodes = 50;
    std::uint64_t seed = 0;
    bool keep_checkpoints = false;   // retain per-row checkpoints under work_dir
};

struct AblationRow {
    std::string sweep_key;    // e.g. "num_rectan"
    double setting = 0.0;
    bool ok = false;
    std::string error;        // infeasible configs are surfaced here, per row
    BenchReport report;
};

/// Trains a fresh policy per box count (identical PPO budget) and
/// evaluates it; rows appear in the order of `counts`.
std::vector<AblationRow> ablate_rectangles(std::span<const int> counts, const EnvConfig& base_cfg,
                                           const AblationProtocol& protocol,
                                           const std::filesystem::path& work_dir,
                                           std::ostream* progress = nullptr);

std::vector<AblationRow> ablate_min_area(std::span<const double> areas, const EnvConfig& base_cfg,
                                         const AblationProtocol& protocol,
                                         const std::filesystem::path& work_dir,
                                         std::ostream* progress = nullptr);

/// Trains with each listed run seed on an identical environment.
std::vector<AblationRow> seed_study(std::span<const std::uint64_t> seeds, const EnvConfig& cfg,
                                    const AblationProtocol& protocol,
                                    const std::filesystem::path& work_dir,
                                    std::ostream* progress = nullptr);

// --- CSV output -------------------------------------------------------------

using ConfigEcho = std::vector<std::pair<std::string, std::string>>;

inline constexpr const char* kEpisodesCsvHeader = "episode,return,steps,final_overlap,succeeded";
inline constexpr const char* kReportCsvHeader =
    "episodes,mean_reward,reward_std,mean_final_overlap,success_rate,mean_steps,policy_bytes";

/// Every writer prefixes '# key=value' comment lines echoing the full
/// configuration, then the fixed header, then data rows.
void write_episodes_csv(const std::filesystem::path& path, std::span<const EpisodeMetrics> episodes,
                        const ConfigEcho& echo);
void write_report_csv(const std::filesystem::path& path, const BenchReport& report,
                      const ConfigEcho& echo);
void write_ablation_csv(const std::filesystem::path& path, std::span<const AblationRow> rows,
                        const ConfigEcho& echo);

/// Recomputes a BenchReport from persisted per-episode rows (same order,
/// same arithmetic) — the aggregate file must match it bit for bit.
BenchReport aggregate_episodes(std::span<const EpisodeMetrics> episodes);

std::vector<EpisodeMetrics> read_episodes_csv(const std::filesystem::path& path);

}  // namespace glyphrl
