#include "glyphrl/ppo_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

#include "glyphrl/errors.hpp"
#include "glyphrl/text_format.hpp"

namespace glyphrl {

namespace {

Vec to_vec(const std::vector<double>& values) {
    return Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

void PpoConfig::validate() const {
    const auto fail = [](const std::string& msg) { throw InvalidConfigError("invalid ppo config: " + msg); };
    if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
    if (rollout_horizon < 1) fail("rollout_horizon must be >= 1");
    if (minibatch_size < 1) fail("minibatch_size must be >= 1");
    if (rollout_horizon % minibatch_size != 0) fail("rollout_horizon must be divisible by minibatch_size");
    if (epochs_per_update < 1) fail("epochs_per_update must be >= 1");
    if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma must lie in (0, 1]");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) fail("gae_lambda must lie in [0, 1]");
    if (!(clip_range > 0.0)) fail("clip_range must be > 0");
    if (entropy_coef < 0.0) fail("entropy_coef must be >= 0");
    if (vf_coef < 0.0) fail("vf_coef must be >= 0");
    if (!(max_grad_norm > 0.0)) fail("max_grad_norm must be > 0");
    if (total_timesteps < 1) fail("total_timesteps must be >= 1");
    if (num_envs < 1) fail("num_envs must be >= 1");
    if (checkpoint_interval < 0) fail("checkpoint_interval must be >= 0");
}

void RolloutBuffer::allocate(int horizon_steps, int envs) {
    horizon = horizon_steps;
    num_envs = envs;
    const std::size_t n = static_cast<std::size_t>(horizon) * static_cast<std::size_t>(envs);
    observations.assign(n, Vec());
    pre_squash.assign(n, Vec());
    log_probs.assign(n, 0.0);
    rewards.assign(n, 0.0);
    values.assign(n, 0.0);
    dones.assign(n, 0);
    truncateds.assign(n, 0);
    truncation_values.assign(n, 0.0);
    advantages.assign(n, 0.0);
    returns.assign(n, 0.0);
    finalized = false;
    episode_returns.clear();
    episode_lengths.clear();
}

std::vector<EnvWorker> make_env_workers(const EnvConfig& base_cfg, int num_envs,
                                        std::uint64_t run_seed) {
    std::vector<EnvWorker> workers;
    workers.reserve(num_envs);
    for (int e = 0; e < num_envs; ++e) {
        EnvConfig cfg = base_cfg;
        cfg.seed = derive_seed(run_seed, "env", static_cast<std::uint64_t>(e));
        workers.emplace_back(cfg, derive_seed(run_seed, "action", static_cast<std::uint64_t>(e)));
    }
    return workers;
}

RolloutBuffer collect_rollout(std::vector<EnvWorker>& workers, const PolicyParams& policy,
                              int horizon) {
    const int num_envs = static_cast<int>(workers.size());
    RolloutBuffer buf;
    buf.allocate(horizon, num_envs);
    for (int t = 0; t < horizon; ++t) {
        for (int e = 0; e < num_envs; ++e) {
            EnvWorker& w = workers[e];
            const std::size_t idx = static_cast<std::size_t>(t) * num_envs + e;
            Vec obs = to_vec(w.env.observation());
            const auto [mean, log_std] = forward_actor(policy, obs);
            const SampledAction sampled = sample_action(mean, log_std, w.action_rng);
            const double value = forward_critic(policy, obs);

            Action act;
            act.deltas.assign(sampled.action.data(), sampled.action.data() + sampled.action.size());
            const StepOutcome out = w.env.step(act);

            buf.observations[idx] = std::move(obs);
            buf.pre_squash[idx] = sampled.pre_squash;
            buf.log_probs[idx] = sampled.log_prob;
            buf.rewards[idx] = out.reward;
            buf.values[idx] = value;
            buf.dones[idx] = out.done ? 1 : 0;
            buf.truncateds[idx] = out.truncated ? 1 : 0;

            w.episode_return += out.reward;
            w.episode_length = out.steps_elapsed;
            if (out.done || out.truncated) {
                if (out.truncated) {
                    // Bootstrap target for the cut-off episode: value of the
                    // state it was truncated in, before the reset below.
                    buf.truncation_values[idx] =
                        forward_critic(policy, to_vec(normalized_observation(
                                                   out.state, w.env.config().window_size)));
                }
                buf.episode_returns.push_back(w.episode_return);
                buf.episode_lengths.push_back(w.episode_length);
                w.episode_return = 0.0;
                w.episode_length = 0;
                w.env.reset();
            }
        }
    }
    return buf;
}

void compute_gae(RolloutBuffer& buffer, double gamma, double gae_lambda,
                 std::span<const double> last_values) {
    if (static_cast<int>(last_values.size()) != buffer.num_envs) {
        throw ContractViolationError("compute_gae: last_values size must equal num_envs");
    }
    const int num_envs = buffer.num_envs;
    for (int e = 0; e < num_envs; ++e) {
        double advantage_next = 0.0;
        for (int t = buffer.horizon - 1; t >= 0; --t) {
            const std::size_t idx = static_cast<std::size_t>(t) * num_envs + e;
            const bool done = buffer.dones[idx] != 0;
            const bool truncated = buffer.truncateds[idx] != 0;
            double next_value;
            if (done) {
                next_value = 0.0;
            } else if (truncated) {
                next_value = buffer.truncation_values[idx];
            } else if (t + 1 == buffer.horizon) {
                next_value = last_values[static_cast<std::size_t>(e)];
            } else {
                next_value = buffer.values[idx + num_envs];
            }
            const double delta = buffer.rewards[idx] + gamma * next_value - buffer.values[idx];
            // The GAE chain is cut at both kinds of episode end; they differ
            // only in the bootstrap value above.
            const double carry = (done || truncated) ? 0.0 : advantage_next;
            advantage_next = delta + gamma * gae_lambda * carry;
            buffer.advantages[idx] = advantage_next;
            buffer.returns[idx] = advantage_next + buffer.values[idx];
        }
    }
    buffer.finalized = true;
}

GatheredBatch gather_minibatch(const RolloutBuffer& buffer, std::span<const int> indices,
                               bool normalize_advantages) {
    if (!buffer.finalized) throw ContractViolationError("gather_minibatch: buffer not finalized");
    GatheredBatch batch;
    const std::size_t n = indices.size();
    batch.observations.reserve(n);
    batch.pre_squash.reserve(n);
    batch.old_log_probs.reserve(n);
    batch.advantages.reserve(n);
    batch.returns.reserve(n);
    for (const int idx : indices) {
        batch.observations.push_back(buffer.observations[idx]);
        batch.pre_squash.push_back(buffer.pre_squash[idx]);
        batch.old_log_probs.push_back(buffer.log_probs[idx]);
        batch.advantages.push_back(buffer.advantages[idx]);
        batch.returns.push_back(buffer.returns[idx]);
    }
    if (normalize_advantages && n > 0) {
        double mean = 0.0;
        for (const double a : batch.advantages) mean += a;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (const double a : batch.advantages) var += (a - mean) * (a - mean);
        const double std_dev = std::max(std::sqrt(var / static_cast<double>(n)), 1e-8);
        for (double& a : batch.advantages) a = (a - mean) / std_dev;
    }
    return batch;
}

namespace {

struct SampleTerms {
    double policy_term = 0.0;
    double value_term = 0.0;
    double kl = 0.0;
    bool clipped = false;
    double d_log_prob = 0.0;  // d(policy_term)/d(log_prob), before the 1/B scale
    double d_value = 0.0;     // d(value_term)/d(value), before vf_coef and 1/B
};

SampleTerms sample_terms(double log_prob, double old_log_prob, double advantage, double value,
                         double ret, double clip_range) {
    SampleTerms s;
    const double ratio = std::exp(log_prob - old_log_prob);
    const double clipped_ratio = std::clamp(ratio, 1.0 - clip_range, 1.0 + clip_range);
    const double pg_unclipped = -advantage * ratio;
    const double pg_clipped = -advantage * clipped_ratio;
    // Tie goes to the unclipped branch; inside the clip interval both agree.
    if (pg_unclipped >= pg_clipped) {
        s.policy_term = pg_unclipped;
        s.d_log_prob = -advantage * ratio;
    } else {
        s.policy_term = pg_clipped;
        s.d_log_prob = 0.0;  // clipped branch active: flat in the parameters
    }
    const double v_err = value - ret;
    s.value_term = v_err * v_err;
    s.d_value = 2.0 * v_err;
    s.kl = (ratio - 1.0) - std::log(ratio);
    s.clipped = std::abs(ratio - 1.0) > clip_range;
    return s;
}

PpoLossTerms finalize_terms(double policy_sum, double value_sum, double kl_sum, int clip_count,
                            int batch_size, double entropy, double vf_coef, double entropy_coef) {
    PpoLossTerms terms;
    const double inv = 1.0 / static_cast<double>(batch_size);
    terms.policy = policy_sum * inv;
    terms.value = value_sum * inv;
    terms.entropy = entropy;
    terms.clip_fraction = static_cast<double>(clip_count) * inv;
    terms.approx_kl = kl_sum * inv;
    terms.total = terms.policy + vf_coef * terms.value - entropy_coef * terms.entropy;
    if (!std::isfinite(terms.total)) {
        throw TrainingDivergenceError("non-finite PPO loss");
    }
    return terms;
}

}  // namespace

PpoLossTerms ppo_loss(const PolicyParams& params, const GatheredBatch& batch, double clip_range,
                      double vf_coef, double entropy_coef) {
    const int batch_size = batch.size();
    if (batch_size == 0) throw ContractViolationError("ppo_loss: empty batch");
    double policy_sum = 0.0;
    double value_sum = 0.0;
    double kl_sum = 0.0;
    int clip_count = 0;
    for (int i = 0; i < batch_size; ++i) {
        const EvalResult ev = evaluate(params, batch.observations[i], batch.pre_squash[i]);
        const SampleTerms s = sample_terms(ev.log_prob, batch.old_log_probs[i], batch.advantages[i],
                                           ev.value, batch.returns[i], clip_range);
        policy_sum += s.policy_term;
        value_sum += s.value_term;
        kl_sum += s.kl;
        clip_count += s.clipped ? 1 : 0;
    }
    return finalize_terms(policy_sum, value_sum, kl_sum, clip_count, batch_size,
                          gaussian_entropy(params.log_std), vf_coef, entropy_coef);
}

void PpoGradWorkspace::resize(int batch_size, const PolicyParams& params) {
    const std::size_t n = static_cast<std::size_t>(batch_size);
    actor_caches.resize(n);
    critic_caches.resize(n);
    actor_dpres.resize(n);
    critic_dpres.resize(n);
    log_std_grads.assign(n, Vec::Zero(params.log_std.size()));
    per_sample_policy.assign(n, 0.0);
    per_sample_value.assign(n, 0.0);
    per_sample_kl.assign(n, 0.0);
    per_sample_clipped.assign(n, 0);
}

PpoLossTerms ppo_loss_and_grad(const PolicyParams& params, const GatheredBatch& batch,
                               double clip_range, double vf_coef, double entropy_coef,
                               PolicyGrads& grads, int workers, PpoGradWorkspace& workspace) {
    const int batch_size = batch.size();
    if (batch_size == 0) throw ContractViolationError("ppo_loss_and_grad: empty batch");
    workspace.resize(batch_size, params);
    const int lanes = std::max(1, workers);
    const double inv_batch = 1.0 / static_cast<double>(batch_size);

    // Phase 1: per-sample forward/backward, independent across samples.
#pragma omp parallel for schedule(static) num_threads(lanes) if (lanes > 1)
    for (int i = 0; i < batch_size; ++i) {
        MlpCache& actor_cache = workspace.actor_caches[i];
        MlpCache& critic_cache = workspace.critic_caches[i];
        const Vec& obs = batch.observations[i];
        const Vec& z = batch.pre_squash[i];
        const Vec mean = mlp_forward(params.actor, obs, &actor_cache);
        const Vec value_out = mlp_forward(params.critic, obs, &critic_cache);
        const double log_prob = squashed_log_prob(z, mean, params.log_std);
        const SampleTerms s = sample_terms(log_prob, batch.old_log_probs[i], batch.advantages[i],
                                           value_out(0), batch.returns[i], clip_range);
        workspace.per_sample_policy[i] = s.policy_term;
        workspace.per_sample_value[i] = s.value_term;
        workspace.per_sample_kl[i] = s.kl;
        workspace.per_sample_clipped[i] = s.clipped ? 1 : 0;

        const double d_log_prob = s.d_log_prob * inv_batch;
        const double d_value = vf_coef * s.d_value * inv_batch;
        const double d_entropy = -entropy_coef * inv_batch;

        Vec d_mean(mean.size());
        Vec& d_log_std = workspace.log_std_grads[i];
        for (Eigen::Index k = 0; k < mean.size(); ++k) {
            const double inv_var = std::exp(-2.0 * params.log_std(k));
            const double diff = z(k) - mean(k);
            d_mean(k) = d_log_prob * diff * inv_var;
            d_log_std(k) = d_log_prob * (-1.0 + diff * diff * inv_var) + d_entropy;
        }
        mlp_backward_pairs(params.actor, actor_cache, d_mean, workspace.actor_dpres[i]);
        Vec d_value_vec(1);
        d_value_vec(0) = d_value;
        mlp_backward_pairs(params.critic, critic_cache, d_value_vec, workspace.critic_dpres[i]);
    }

    // Phase 2: fixed-order reduce; identical bits for any worker count.
    grads.set_zero();
    double policy_sum = 0.0;
    double value_sum = 0.0;
    double kl_sum = 0.0;
    int clip_count = 0;
    for (int i = 0; i < batch_size; ++i) {
        mlp_accumulate_pairs(workspace.actor_caches[i], workspace.actor_dpres[i], grads.actor);
        mlp_accumulate_pairs(workspace.critic_caches[i], workspace.critic_dpres[i], grads.critic);
        grads.log_std += workspace.log_std_grads[i];
        policy_sum += workspace.per_sample_policy[i];
        value_sum += workspace.per_sample_value[i];
        kl_sum += workspace.per_sample_kl[i];
        clip_count += workspace.per_sample_clipped[i];
    }
    return finalize_terms(policy_sum, value_sum, kl_sum, clip_count, batch_size,
                          gaussian_entropy(params.log_std), vf_coef, entropy_coef);
}

namespace {

double clip_global_norm(PolicyGrads& grads, double max_norm) {
    const double norm = std::sqrt(grads.squared_norm());
    if (norm > max_norm && norm > 0.0) grads.scale(max_norm / norm);
    return norm;
}

double window_mean(const std::deque<double>& window) {
    if (window.empty()) return std::numeric_limits<double>::quiet_NaN();
    double sum = 0.0;
    for (const double v : window) sum += v;
    return sum / static_cast<double>(window.size());
}

}  // namespace

TrainResult train(const EnvConfig& env_cfg, const PpoConfig& ppo_cfg,
                  const std::filesystem::path& out_dir, std::uint64_t run_seed,
                  std::ostream* progress) {
    env_cfg.validate();
    ppo_cfg.validate();
    std::filesystem::create_directories(out_dir);

    std::vector<EnvWorker> workers = make_env_workers(env_cfg, ppo_cfg.num_envs, run_seed);
    RngStream init_rng(derive_seed(run_seed, "policy-init"));
    const int io_dim = env_cfg.num_rectan * 4;
    PolicyParams params = PolicyParams::make(io_dim, io_dim, {64, 64}, init_rng);
    AdamState adam = AdamState::make_like(params);
    RngStream shuffle_rng(derive_seed(run_seed, "trainer"));

    const std::int64_t batch_size =
        static_cast<std::int64_t>(ppo_cfg.rollout_horizon) * ppo_cfg.num_envs;
    const int num_updates =
        static_cast<int>((ppo_cfg.total_timesteps + batch_size - 1) / batch_size);

    TrainResult result;
    result.metrics_csv = out_dir / "train_metrics.csv";
    result.final_checkpoint = out_dir / "policy_final.json";

    std::ofstream metrics(result.metrics_csv);
    if (!metrics) throw std::runtime_error("cannot open metrics log: " + result.metrics_csv.string());
    metrics << kMetricsCsvHeader << '\n';

    std::deque<double> recent_returns;
    std::deque<double> recent_lengths;
    constexpr std::size_t kEpisodeWindow = 100;

    PolicyGrads grads = PolicyGrads::zeros_like(params);
    PpoGradWorkspace workspace;
    PolicyParams last_good = params;

    std::vector<int> indices(static_cast<std::size_t>(batch_size));
    std::iota(indices.begin(), indices.end(), 0);
    std::vector<double> last_values(static_cast<std::size_t>(ppo_cfg.num_envs), 0.0);

    for (int update = 1; update <= num_updates; ++update) {
        RolloutBuffer buffer = collect_rollout(workers, params, ppo_cfg.rollout_horizon);
        for (std::size_t i = 0; i < buffer.episode_returns.size(); ++i) {
            recent_returns.push_back(buffer.episode_returns[i]);
            recent_lengths.push_back(static_cast<double>(buffer.episode_lengths[i]));
            if (recent_returns.size() > kEpisodeWindow) {
                recent_returns.pop_front();
                recent_lengths.pop_front();
            }
        }
        for (int e = 0; e < ppo_cfg.num_envs; ++e) {
            last_values[static_cast<std::size_t>(e)] =
                forward_critic(params, to_vec(workers[e].env.observation()));
        }
        compute_gae(buffer, ppo_cfg.gamma, ppo_cfg.gae_lambda, last_values);

        PpoLossTerms sums;
        int num_minibatches = 0;
        try {
            for (int epoch = 0; epoch < ppo_cfg.epochs_per_update; ++epoch) {
                shuffle_rng.shuffle(indices);
                for (std::int64_t start = 0; start < batch_size; start += ppo_cfg.minibatch_size) {
                    const std::span<const int> mb_indices(indices.data() + start,
                                                          static_cast<std::size_t>(ppo_cfg.minibatch_size));
                    const GatheredBatch mb =
                        gather_minibatch(buffer, mb_indices, ppo_cfg.normalize_advantages);
                    const PpoLossTerms terms =
                        ppo_loss_and_grad(params, mb, ppo_cfg.clip_range, ppo_cfg.vf_coef,
                                          ppo_cfg.entropy_coef, grads, ppo_cfg.workers, workspace);
                    clip_global_norm(grads, ppo_cfg.max_grad_norm);
                    adam_step(params, grads, adam, ppo_cfg.learning_rate);
                    sums.total += terms.total;
                    sums.policy += terms.policy;
                    sums.value += terms.value;
                    sums.entropy += terms.entropy;
                    sums.clip_fraction += terms.clip_fraction;
                    sums.approx_kl += terms.approx_kl;
                    ++num_minibatches;
                }
            }
        } catch (const TrainingDivergenceError&) {
            save_checkpoint(result.final_checkpoint, last_good, env_cfg);
            if (progress) {
                *progress << "training diverged at update " << update
                          << "; last good checkpoint written to " << result.final_checkpoint
                          << '\n';
            }
            throw;
        }
        last_good = params;

        const double inv_mb = 1.0 / static_cast<double>(num_minibatches);
        result.timesteps_done = static_cast<std::int64_t>(update) * batch_size;
        result.updates_done = update;
        result.final_ep_reward_mean = window_mean(recent_returns);
        metrics << result.timesteps_done << ',' << format_double(window_mean(recent_lengths)) << ','
                << format_double(result.final_ep_reward_mean) << ','
                << format_double(sums.policy * inv_mb) << ',' << format_double(sums.value * inv_mb)
                << ',' << format_double(sums.entropy * inv_mb) << ','
                << format_double(sums.total * inv_mb) << ','
                << format_double(sums.clip_fraction * inv_mb) << ','
                << format_double(sums.approx_kl * inv_mb) << '\n';
        metrics.flush();

        if (ppo_cfg.checkpoint_interval > 0 && update % ppo_cfg.checkpoint_interval == 0 &&
            update != num_updates) {
            save_checkpoint(out_dir / ("policy_ckpt_" + std::to_string(update) + ".json"), params,
                            env_cfg);
        }
        if (progress) {
            *progress << "update " << update << '/' << num_updates << "  timesteps "
                      << result.timesteps_done << "  ep_reward_mean "
                      << format_double(result.final_ep_reward_mean) << "  ep_len_mean "
                      << format_double(window_mean(recent_lengths)) << '\n';
            progress->flush();
        }
    }

    save_checkpoint(result.final_checkpoint, params, env_cfg);
    return result;
}

}  // namespace glyphrl
