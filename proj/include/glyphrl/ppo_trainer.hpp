#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "glyphrl/glyph_env.hpp"
#include "glyphrl/policy_net.hpp"

namespace glyphrl {

/// PPO hyperparameters. Defaults are the reference setup: lr 3e-4, rollout
/// 2048, minibatch 64, 10 epochs, gamma 0.99, GAE lambda 0.95, clip 0.2,
/// entropy off, vf coefficient 0.5, gradient clipping at norm 0.5,
/// advantage normalization on.
struct PpoConfig {
    double learning_rate = 3e-4;
    int rollout_horizon = 2048;
    int minibatch_size = 64;
    int epochs_per_update = 10;
    double gamma = 0.99;
    double gae_lambda = 0.95;
    double clip_range = 0.2;
    double entropy_coef = 0.0;
    double vf_coef = 0.5;
    double max_grad_norm = 0.5;
    bool normalize_advantages = true;
    std::int64_t total_timesteps = 200000;
    int num_envs = 1;
    int workers = 1;               // OpenMP lanes for the gradient kernel
    int checkpoint_interval = 50;  // updates between periodic checkpoints, 0 = final only

    void validate() const;
};

/// Fixed-horizon transition storage; index layout is t * num_envs + e.
/// Termination (done) and truncation are tracked separately: a truncated
/// step carries the critic value of the state it was cut off in, a
/// terminated step bootstraps with zero.
struct RolloutBuffer {
    int horizon = 0;
    int num_envs = 0;

    std::vector<Vec> observations;
    std::vector<Vec> pre_squash;
    std::vector<double> log_probs;
    std::vector<double> rewards;
    std::vector<double> values;
    std::vector<std::uint8_t> dones;
    std::vector<std::uint8_t> truncateds;
    std::vector<double> truncation_values;  // V(next state) where truncateds is set, else 0

    // Populated by compute_gae.
    std::vector<double> advantages;
    std::vector<double> returns;
    bool finalized = false;

    // Episodes that completed inside this rollout, in completion order.
    std::vector<double> episode_returns;
    std::vector<int> episode_lengths;

    int size() const { return horizon * num_envs; }
    void allocate(int horizon_steps, int envs);
};

/// One environment plus its private action-sampling stream and running
/// episode accumulators; persists across rollouts.
struct EnvWorker {
    GlyphEnv env;
    RngStream action_rng;
    double episode_return = 0.0;
    int episode_length = 0;

    EnvWorker(EnvConfig cfg, std::uint64_t action_seed) : env(std::move(cfg)), action_rng(action_seed) {}
};

std::vector<EnvWorker> make_env_workers(const EnvConfig& base_cfg, int num_envs, std::uint64_t run_seed);

/// Steps every worker `horizon` times with the stochastic policy, storing
/// transitions and auto-resetting finished episodes. Rewards are stored
/// exactly as the environment emits them.
RolloutBuffer collect_rollout(std::vector<EnvWorker>& workers, const PolicyParams& policy,
                              int horizon);

/// Backward-recursive GAE. `last_values` holds the critic value of each
/// worker's current state after the rollout (ignored for workers whose last
/// stored step ended an episode). Fills advantages and returns.
void compute_gae(RolloutBuffer& buffer, double gamma, double gae_lambda,
                 std::span<const double> last_values);

/// Minibatch gathered out of a RolloutBuffer (or built directly in tests).
struct GatheredBatch {
    std::vector<Vec> observations;
    std::vector<Vec> pre_squash;
    std::vector<double> old_log_probs;
    std::vector<double> advantages;
    std::vector<double> returns;

    int size() const { return static_cast<int>(observations.size()); }
};

/// Copies the indexed samples; optionally normalizes the gathered
/// advantages to mean 0 / std 1 (population std, clamped to >= 1e-8).
GatheredBatch gather_minibatch(const RolloutBuffer& buffer, std::span<const int> indices,
                               bool normalize_advantages);

struct PpoLossTerms {
    double total = 0.0;
    double policy = 0.0;
    double value = 0.0;
    double entropy = 0.0;
    double clip_fraction = 0.0;
    double approx_kl = 0.0;
};

/// Clipped-surrogate loss:
///   -mean(min(r A, clip(r, 1-eps, 1+eps) A)) + vf_coef mean((V - ret)^2)
///   - entropy_coef mean(entropy),  r = exp(new_log_prob - old_log_prob).
/// Throws TrainingDivergenceError when the result is non-finite.
PpoLossTerms ppo_loss(const PolicyParams& params, const GatheredBatch& batch, double clip_range,
                      double vf_coef, double entropy_coef);

/// Scratch reused across gradient-kernel calls (per-sample caches and
/// pre-activation gradients).
struct PpoGradWorkspace {
    std::vector<MlpCache> actor_caches;
    std::vector<MlpCache> critic_caches;
    std::vector<std::vector<Vec>> actor_dpres;
    std::vector<std::vector<Vec>> critic_dpres;
    std::vector<Vec> log_std_grads;
    std::vector<double> per_sample_policy;
    std::vector<double> per_sample_value;
    std::vector<double> per_sample_kl;
    std::vector<std::uint8_t> per_sample_clipped;

    void resize(int batch_size, const PolicyParams& params);
};

/// Loss plus dL/dparams. The per-sample phase runs on `workers` OpenMP
/// threads; accumulation is a fixed-order serial reduce, so the result is
/// bit-identical for every worker count (workers <= 1 is the serial
/// reference path).
PpoLossTerms ppo_loss_and_grad(const PolicyParams& params, const GatheredBatch& batch,
                               double clip_range, double vf_coef, double entropy_coef,
                               PolicyGrads& grads, int workers, PpoGradWorkspace& workspace);

struct TrainResult {
    std::filesystem::path final_checkpoint;
    std::filesystem::path metrics_csv;
    std::int64_t timesteps_done = 0;
    int updates_done = 0;
    double final_ep_reward_mean = 0.0;
};

/// Full training run: rollouts, GAE, shuffled minibatch updates with
/// global-norm gradient clipping, a metrics CSV row per rollout, and a
/// final checkpoint. On divergence the last finite parameters are saved
/// before the error propagates. All randomness derives from `run_seed`.
TrainResult train(const EnvConfig& env_cfg, const PpoConfig& ppo_cfg,
                  const std::filesystem::path& out_dir, std::uint64_t run_seed,
                  std::ostream* progress = nullptr);

/// Header of the metrics CSV written by train().
inline constexpr const char* kMetricsCsvHeader =
    "timestep,ep_len_mean,ep_reward_mean,policy_loss,value_loss,entropy,total_loss,"
    "clip_fraction,approx_kl";

}  // namespace glyphrl
