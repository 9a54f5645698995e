#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "glyphrl/glyph_env.hpp"
#include "glyphrl/rng.hpp"

namespace glyphrl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

/// Fully-connected net, tanh hidden activations, linear output.
/// weights[l] has shape (dims[l+1], dims[l]).
struct Mlp {
    std::vector<int> dims;
    std::vector<Mat> weights;
    std::vector<Vec> biases;

    /// Orthogonal weight init (gain sqrt(2) on hidden layers, `out_gain` on
    /// the output layer), zero biases.
    static Mlp make(const std::vector<int>& dims, RngStream& rng, double out_gain);

    int input_dim() const { return dims.front(); }
    int output_dim() const { return dims.back(); }
    std::size_t num_layers() const { return weights.size(); }
};

/// Post-activation values per layer; activations[0] is the input and
/// activations[L] the linear output. Reused across samples to avoid churn.
struct MlpCache {
    std::vector<Vec> activations;
};

struct MlpGrads {
    std::vector<Mat> weights;
    std::vector<Vec> biases;

    static MlpGrads zeros_like(const Mlp& net);
    void set_zero();
};

Vec mlp_forward(const Mlp& net, const Vec& input, MlpCache* cache = nullptr);

/// Accumulates dL/dparams into `grads` given dL/doutput; requires the cache
/// of the matching forward pass.
void mlp_backward(const Mlp& net, const MlpCache& cache, const Vec& d_output, MlpGrads& grads);

/// Backward split into two phases so a batch kernel can compute the
/// per-sample half in parallel and keep the parameter-gradient accumulation
/// in a fixed serial order (bit-reproducible for any worker count):
/// _pairs computes the per-layer pre-activation gradients, _accumulate
/// turns them into rank-1 parameter updates.
void mlp_backward_pairs(const Mlp& net, const MlpCache& cache, const Vec& d_output,
                        std::vector<Vec>& d_pre_out);
void mlp_accumulate_pairs(const MlpCache& cache, const std::vector<Vec>& d_pre, MlpGrads& grads);

/// Actor-critic parameter set: two separate MLPs plus a state-independent
/// log-std vector (diagonal Gaussian squashed by tanh at sampling time).
struct PolicyParams {
    Mlp actor;    // obs_dim -> hidden... -> act_dim (pre-squash mean)
    Mlp critic;   // obs_dim -> hidden... -> 1
    Vec log_std;  // act_dim

    static PolicyParams make(int obs_dim, int act_dim, const std::vector<int>& hidden,
                             RngStream& rng);

    int obs_dim() const { return actor.input_dim(); }
    int act_dim() const { return actor.output_dim(); }
    bool all_finite() const;
    std::size_t num_scalars() const;
};

struct PolicyGrads {
    MlpGrads actor;
    MlpGrads critic;
    Vec log_std;

    static PolicyGrads zeros_like(const PolicyParams& params);
    void set_zero();
    void add(const PolicyGrads& other);           // this += other
    void scale(double factor);
    double squared_norm() const;
};

/// Pointers to every parameter scalar in a fixed documented order
/// (actor layers W then b, critic layers W then b, log_std); the gradient
/// order from grad_ptrs matches element for element.
std::vector<double*> param_ptrs(PolicyParams& params);
std::vector<double*> grad_ptrs(PolicyGrads& grads);

// --- Gaussian policy head -------------------------------------------------

/// Returns (mean, log_std); mean is the raw actor output before squashing.
std::pair<Vec, Vec> forward_actor(const PolicyParams& params, const Vec& obs);

double forward_critic(const PolicyParams& params, const Vec& obs);

/// log N(z; mean, diag exp(2 log_std)) minus the tanh change-of-variables
/// term sum log(1 - tanh(z)^2 + 1e-6).
double squashed_log_prob(const Vec& z, const Vec& mean, const Vec& log_std);

/// Gaussian part only (no squash correction).
double gaussian_log_prob(const Vec& z, const Vec& mean, const Vec& log_std);

double gaussian_entropy(const Vec& log_std);

struct SampledAction {
    Vec pre_squash;   // z ~ N(mean, sigma)
    Vec action;       // tanh(z), componentwise in (-1, 1)
    double log_prob;  // squash-corrected density of `action`
};

SampledAction sample_action(const Vec& mean, const Vec& log_std, RngStream& rng);

/// Deterministic action: tanh of the actor mean.
Vec deterministic_action(const PolicyParams& params, const Vec& obs);

struct EvalResult {
    double log_prob = 0.0;
    double value = 0.0;
    double entropy = 0.0;
};

/// Recomputes the density of a stored pre-squash action under the current
/// parameters, the critic value, and the Gaussian entropy.
EvalResult evaluate(const PolicyParams& params, const Vec& obs, const Vec& pre_squash);

/// evaluate() that also keeps the forward caches so backprop_sample can run.
EvalResult evaluate_with_cache(const PolicyParams& params, const Vec& obs, const Vec& pre_squash,
                               MlpCache& actor_cache, MlpCache& critic_cache);

/// Accumulates d(loss)/d(params) into `grads` for one sample, given the
/// upstream scalars dL/dlog_prob, dL/dvalue and dL/dentropy. Caches must
/// come from evaluate_with_cache on the same (obs, pre_squash).
void backprop_sample(const PolicyParams& params, const Vec& pre_squash,
                     const MlpCache& actor_cache, const MlpCache& critic_cache,
                     double d_log_prob, double d_value, double d_entropy, PolicyGrads& grads);

// --- Adam -----------------------------------------------------------------

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-5;
};

struct AdamState {
    PolicyGrads m;  // first moments, shape-matched to the parameters
    PolicyGrads v;  // second moments
    std::int64_t step = 0;
    AdamConfig config;

    static AdamState make_like(const PolicyParams& params, AdamConfig cfg = {});
};

/// Bias-corrected Adam update in place. log_std is projected back into
/// [kLogStdMin, kLogStdMax] after the step. Throws TrainingDivergenceError
/// on non-finite gradients; guarantees finite parameters afterwards.
void adam_step(PolicyParams& params, const PolicyGrads& grads, AdamState& state, double lr);

// --- Checkpoints ------------------------------------------------------------

/// Versioned JSON checkpoint (config echo, layer dims, flat parameter
/// arrays; doubles round-trip exactly). The string form is exactly what
/// save_checkpoint writes, so its size is the checkpoint byte size.
std::string checkpoint_json_string(const PolicyParams& params, const EnvConfig& env_cfg);

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params,
                     const EnvConfig& env_cfg);

struct Checkpoint {
    PolicyParams params;
    EnvConfig env_cfg;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace glyphrl
