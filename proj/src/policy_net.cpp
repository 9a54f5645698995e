#include "glyphrl/policy_net.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "glyphrl/errors.hpp"

namespace glyphrl {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178032973640562;  // 0.5*log(2*pi)
constexpr double kSquashEps = 1e-6;

/// tanh saturates to exactly +-1.0 in doubles for |z| > ~19; nudge such
/// values back so squashed actions stay strictly inside (-1, 1).
double squash(double z) {
    const double t = std::tanh(z);
    if (t >= 1.0) return std::nextafter(1.0, 0.0);
    if (t <= -1.0) return std::nextafter(-1.0, 0.0);
    return t;
}

/// Orthogonal matrix scaled by `gain`, the usual QR-of-Gaussian scheme with
/// sign correction from the R diagonal.
Mat orthogonal(int rows, int cols, double gain, RngStream& rng) {
    const int tall_rows = std::max(rows, cols);
    const int tall_cols = std::min(rows, cols);
    Mat gauss(tall_rows, tall_cols);
    for (int r = 0; r < tall_rows; ++r) {
        for (int c = 0; c < tall_cols; ++c) {
            gauss(r, c) = rng.normal();
        }
    }
    Eigen::HouseholderQR<Mat> qr(gauss);
    Mat q = qr.householderQ() * Mat::Identity(tall_rows, tall_cols);
    const Mat r_upper = qr.matrixQR().topRows(tall_cols).triangularView<Eigen::Upper>();
    for (int c = 0; c < tall_cols; ++c) {
        if (r_upper(c, c) < 0.0) q.col(c) = -q.col(c);
    }
    if (rows < cols) return gain * q.transpose();
    return gain * q;
}

}  // namespace

Mlp Mlp::make(const std::vector<int>& dims, RngStream& rng, double out_gain) {
    if (dims.size() < 2) throw ContractViolationError("Mlp needs at least input and output dims");
    Mlp net;
    net.dims = dims;
    const std::size_t layers = dims.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
        const double gain = (l + 1 == layers) ? out_gain : std::sqrt(2.0);
        net.weights.push_back(orthogonal(dims[l + 1], dims[l], gain, rng));
        net.biases.push_back(Vec::Zero(dims[l + 1]));
    }
    return net;
}

MlpGrads MlpGrads::zeros_like(const Mlp& net) {
    MlpGrads g;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        g.weights.push_back(Mat::Zero(net.weights[l].rows(), net.weights[l].cols()));
        g.biases.push_back(Vec::Zero(net.biases[l].size()));
    }
    return g;
}

void MlpGrads::set_zero() {
    for (auto& w : weights) w.setZero();
    for (auto& b : biases) b.setZero();
}

Vec mlp_forward(const Mlp& net, const Vec& input, MlpCache* cache) {
    if (input.size() != net.input_dim()) {
        throw ContractViolationError("mlp_forward: input dim " + std::to_string(input.size()) +
                                     " != expected " + std::to_string(net.input_dim()));
    }
    if (cache) {
        cache->activations.assign(net.num_layers() + 1, Vec());
        cache->activations[0] = input;
    }
    Vec activation = input;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        Vec pre = net.weights[l] * activation + net.biases[l];
        activation = (l + 1 == net.num_layers()) ? std::move(pre)
                                                 : Vec(pre.array().tanh().matrix());
        if (cache) cache->activations[l + 1] = activation;
    }
    return activation;
}

void mlp_backward_pairs(const Mlp& net, const MlpCache& cache, const Vec& d_output,
                        std::vector<Vec>& d_pre_out) {
    const int layers = static_cast<int>(net.num_layers());
    d_pre_out.resize(layers);
    Vec d = d_output;
    for (int l = layers - 1; l >= 0; --l) {
        // Output layer is linear; hidden layers need the tanh derivative,
        // recovered from the cached post-activation.
        if (l + 1 == layers) {
            d_pre_out[l] = d;
        } else {
            d_pre_out[l] = (d.array() * (1.0 - cache.activations[l + 1].array().square())).matrix();
        }
        if (l > 0) d = net.weights[l].transpose() * d_pre_out[l];
    }
}

void mlp_accumulate_pairs(const MlpCache& cache, const std::vector<Vec>& d_pre, MlpGrads& grads) {
    for (std::size_t l = 0; l < d_pre.size(); ++l) {
        grads.weights[l].noalias() += d_pre[l] * cache.activations[l].transpose();
        grads.biases[l] += d_pre[l];
    }
}

void mlp_backward(const Mlp& net, const MlpCache& cache, const Vec& d_output, MlpGrads& grads) {
    std::vector<Vec> d_pre;
    mlp_backward_pairs(net, cache, d_output, d_pre);
    mlp_accumulate_pairs(cache, d_pre, grads);
}

PolicyParams PolicyParams::make(int obs_dim, int act_dim, const std::vector<int>& hidden,
                                RngStream& rng) {
    std::vector<int> actor_dims{obs_dim};
    actor_dims.insert(actor_dims.end(), hidden.begin(), hidden.end());
    actor_dims.push_back(act_dim);
    std::vector<int> critic_dims{obs_dim};
    critic_dims.insert(critic_dims.end(), hidden.begin(), hidden.end());
    critic_dims.push_back(1);

    PolicyParams p;
    p.actor = Mlp::make(actor_dims, rng, 0.01);  // small output gain: near-uniform initial actions
    p.critic = Mlp::make(critic_dims, rng, 1.0);
    p.log_std = Vec::Zero(act_dim);
    return p;
}

bool PolicyParams::all_finite() const {
    for (const auto& w : actor.weights)
        if (!w.allFinite()) return false;
    for (const auto& b : actor.biases)
        if (!b.allFinite()) return false;
    for (const auto& w : critic.weights)
        if (!w.allFinite()) return false;
    for (const auto& b : critic.biases)
        if (!b.allFinite()) return false;
    return log_std.allFinite();
}

std::size_t PolicyParams::num_scalars() const {
    std::size_t n = static_cast<std::size_t>(log_std.size());
    for (const auto& w : actor.weights) n += static_cast<std::size_t>(w.size());
    for (const auto& b : actor.biases) n += static_cast<std::size_t>(b.size());
    for (const auto& w : critic.weights) n += static_cast<std::size_t>(w.size());
    for (const auto& b : critic.biases) n += static_cast<std::size_t>(b.size());
    return n;
}

PolicyGrads PolicyGrads::zeros_like(const PolicyParams& params) {
    PolicyGrads g;
    g.actor = MlpGrads::zeros_like(params.actor);
    g.critic = MlpGrads::zeros_like(params.critic);
    g.log_std = Vec::Zero(params.log_std.size());
    return g;
}

void PolicyGrads::set_zero() {
    actor.set_zero();
    critic.set_zero();
    log_std.setZero();
}

void PolicyGrads::add(const PolicyGrads& other) {
    for (std::size_t l = 0; l < actor.weights.size(); ++l) {
        actor.weights[l] += other.actor.weights[l];
        actor.biases[l] += other.actor.biases[l];
    }
    for (std::size_t l = 0; l < critic.weights.size(); ++l) {
        critic.weights[l] += other.critic.weights[l];
        critic.biases[l] += other.critic.biases[l];
    }
    log_std += other.log_std;
}

void PolicyGrads::scale(double factor) {
    for (auto& w : actor.weights) w *= factor;
    for (auto& b : actor.biases) b *= factor;
    for (auto& w : critic.weights) w *= factor;
    for (auto& b : critic.biases) b *= factor;
    log_std *= factor;
}

double PolicyGrads::squared_norm() const {
    double sum = 0.0;
    for (const auto& w : actor.weights) sum += w.squaredNorm();
    for (const auto& b : actor.biases) sum += b.squaredNorm();
    for (const auto& w : critic.weights) sum += w.squaredNorm();
    for (const auto& b : critic.biases) sum += b.squaredNorm();
    return sum + log_std.squaredNorm();
}

namespace {
// Fixed scalar ordering shared by param_ptrs/grad_ptrs: actor layers
// (weights row-major, then bias), critic layers, log_std.
template <typename MlpLike>
void collect_mlp_ptrs(MlpLike& net, std::vector<double*>& out) {
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        auto& w = net.weights[l];
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) out.push_back(&w(r, c));
        auto& b = net.biases[l];
        for (Eigen::Index i = 0; i < b.size(); ++i) out.push_back(&b(i));
    }
}
}  // namespace

std::vector<double*> param_ptrs(PolicyParams& params) {
    std::vector<double*> out;
    collect_mlp_ptrs(params.actor, out);
    collect_mlp_ptrs(params.critic, out);
    for (Eigen::Index i = 0; i < params.log_std.size(); ++i) out.push_back(&params.log_std(i));
    return out;
}

std::vector<double*> grad_ptrs(PolicyGrads& grads) {
    std::vector<double*> out;
    collect_mlp_ptrs(grads.actor, out);
    collect_mlp_ptrs(grads.critic, out);
    for (Eigen::Index i = 0; i < grads.log_std.size(); ++i) out.push_back(&grads.log_std(i));
    return out;
}

std::pair<Vec, Vec> forward_actor(const PolicyParams& params, const Vec& obs) {
    return {mlp_forward(params.actor, obs), params.log_std};
}

double forward_critic(const PolicyParams& params, const Vec& obs) {
    return mlp_forward(params.critic, obs)(0);
}

double gaussian_log_prob(const Vec& z, const Vec& mean, const Vec& log_std) {
    double lp = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        const double standardized = (z(i) - mean(i)) * std::exp(-log_std(i));
        lp += -log_std(i) - kHalfLog2Pi - 0.5 * standardized * standardized;
    }
    return lp;
}

double squashed_log_prob(const Vec& z, const Vec& mean, const Vec& log_std) {
    double correction = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        const double t = std::tanh(z(i));
        correction += std::log(1.0 - t * t + kSquashEps);
    }
    return gaussian_log_prob(z, mean, log_std) - correction;
}

double gaussian_entropy(const Vec& log_std) {
    return log_std.sum() + static_cast<double>(log_std.size()) * (kHalfLog2Pi + 0.5);
}

SampledAction sample_action(const Vec& mean, const Vec& log_std, RngStream& rng) {
    SampledAction out;
    out.pre_squash.resize(mean.size());
    out.action.resize(mean.size());
    for (Eigen::Index i = 0; i < mean.size(); ++i) {
        out.pre_squash(i) = mean(i) + std::exp(log_std(i)) * rng.normal();
        out.action(i) = squash(out.pre_squash(i));
    }
    out.log_prob = squashed_log_prob(out.pre_squash, mean, log_std);
    return out;
}

Vec deterministic_action(const PolicyParams& params, const Vec& obs) {
    Vec mean = mlp_forward(params.actor, obs);
    return mean.unaryExpr([](double z) { return squash(z); });
}

EvalResult evaluate(const PolicyParams& params, const Vec& obs, const Vec& pre_squash) {
    MlpCache actor_cache, critic_cache;
    return evaluate_with_cache(params, obs, pre_squash, actor_cache, critic_cache);
}

EvalResult evaluate_with_cache(const PolicyParams& params, const Vec& obs, const Vec& pre_squash,
                               MlpCache& actor_cache, MlpCache& critic_cache) {
    if (pre_squash.size() != params.act_dim()) {
        throw ContractViolationError("evaluate: action dim mismatch");
    }
    const Vec mean = mlp_forward(params.actor, obs, &actor_cache);
    const Vec value = mlp_forward(params.critic, obs, &critic_cache);
    EvalResult out;
    out.log_prob = squashed_log_prob(pre_squash, mean, params.log_std);
    out.value = value(0);
    out.entropy = gaussian_entropy(params.log_std);
    return out;
}

void backprop_sample(const PolicyParams& params, const Vec& pre_squash,
                     const MlpCache& actor_cache, const MlpCache& critic_cache,
                     double d_log_prob, double d_value, double d_entropy, PolicyGrads& grads) {
    if (d_log_prob != 0.0 || d_entropy != 0.0) {
        const Vec& mean = actor_cache.activations.back();
        Vec d_mean(mean.size());
        for (Eigen::Index i = 0; i < mean.size(); ++i) {
            const double inv_var = std::exp(-2.0 * params.log_std(i));
            const double diff = pre_squash(i) - mean(i);
            d_mean(i) = d_log_prob * diff * inv_var;
            // d logN / d log_std = -1 + ((z - mu)/sigma)^2; entropy adds 1 per dim.
            grads.log_std(i) += d_log_prob * (-1.0 + diff * diff * inv_var) + d_entropy;
        }
        if (d_log_prob != 0.0) mlp_backward(params.actor, actor_cache, d_mean, grads.actor);
    }
    if (d_value != 0.0) {
        Vec d_out(1);
        d_out(0) = d_value;
        mlp_backward(params.critic, critic_cache, d_out, grads.critic);
    }
}

AdamState AdamState::make_like(const PolicyParams& params, AdamConfig cfg) {
    AdamState state;
    state.m = PolicyGrads::zeros_like(params);
    state.v = PolicyGrads::zeros_like(params);
    state.step = 0;
    state.config = cfg;
    return state;
}

namespace {
template <typename Tensor>
void adam_update_tensor(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v,
                        double lr, const AdamConfig& cfg, double bc1, double bc2) {
    if (!grad.allFinite()) throw TrainingDivergenceError("non-finite gradient in adam_step");
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = (cfg.beta2 * v.array() + (1.0 - cfg.beta2) * grad.array().square()).matrix();
    param.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.epsilon);
}
}  // namespace

void adam_step(PolicyParams& params, const PolicyGrads& grads, AdamState& state, double lr) {
    const AdamConfig& cfg = state.config;
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t l = 0; l < params.actor.weights.size(); ++l) {
        adam_update_tensor(params.actor.weights[l], grads.actor.weights[l], state.m.actor.weights[l],
                           state.v.actor.weights[l], lr, cfg, bc1, bc2);
        adam_update_tensor(params.actor.biases[l], grads.actor.biases[l], state.m.actor.biases[l],
                           state.v.actor.biases[l], lr, cfg, bc1, bc2);
    }
    for (std::size_t l = 0; l < params.critic.weights.size(); ++l) {
        adam_update_tensor(params.critic.weights[l], grads.critic.weights[l],
                           state.m.critic.weights[l], state.v.critic.weights[l], lr, cfg, bc1, bc2);
        adam_update_tensor(params.critic.biases[l], grads.critic.biases[l],
                           state.m.critic.biases[l], state.v.critic.biases[l], lr, cfg, bc1, bc2);
    }
    adam_update_tensor(params.log_std, grads.log_std, state.m.log_std, state.v.log_std, lr, cfg,
                       bc1, bc2);
    // Keep the Gaussian well-conditioned: project log_std back into range.
    for (Eigen::Index i = 0; i < params.log_std.size(); ++i) {
        params.log_std(i) = std::clamp(params.log_std(i), kLogStdMin, kLogStdMax);
    }
    if (!params.all_finite()) throw TrainingDivergenceError("non-finite parameter after adam_step");
}

// --- Checkpoints ------------------------------------------------------------

namespace {

using nlohmann::json;

json mlp_to_json(const Mlp& net) {
    json j;
    j["dims"] = net.dims;
    json weights = json::array();
    json biases = json::array();
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        json w_flat = json::array();
        const Mat& w = net.weights[l];
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w_flat.push_back(w(r, c));
        weights.push_back(std::move(w_flat));
        json b_flat = json::array();
        const Vec& b = net.biases[l];
        for (Eigen::Index i = 0; i < b.size(); ++i) b_flat.push_back(b(i));
        biases.push_back(std::move(b_flat));
    }
    j["weights"] = std::move(weights);
    j["biases"] = std::move(biases);
    return j;
}

Mlp mlp_from_json(const json& j) {
    Mlp net;
    net.dims = j.at("dims").get<std::vector<int>>();
    if (net.dims.size() < 2) throw ContractViolationError("checkpoint: bad layer dims");
    const auto& weights = j.at("weights");
    const auto& biases = j.at("biases");
    if (weights.size() != net.dims.size() - 1 || biases.size() != net.dims.size() - 1) {
        throw ContractViolationError("checkpoint: layer count mismatch");
    }
    for (std::size_t l = 0; l + 1 < net.dims.size(); ++l) {
        const int rows = net.dims[l + 1];
        const int cols = net.dims[l];
        const auto& w_flat = weights[l];
        if (w_flat.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
            throw ContractViolationError("checkpoint: weight size mismatch in layer " + std::to_string(l));
        }
        Mat w(rows, cols);
        std::size_t k = 0;
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) w(r, c) = w_flat[k++].get<double>();
        net.weights.push_back(std::move(w));
        const auto& b_flat = biases[l];
        if (b_flat.size() != static_cast<std::size_t>(rows)) {
            throw ContractViolationError("checkpoint: bias size mismatch in layer " + std::to_string(l));
        }
        Vec b(rows);
        for (int i = 0; i < rows; ++i) b(i) = b_flat[i].get<double>();
        net.biases.push_back(std::move(b));
    }
    return net;
}

json env_to_json(const EnvConfig& cfg) {
    return json{{"window_size", cfg.window_size}, {"num_rectan", cfg.num_rectan},
                {"min_area", cfg.min_area},       {"w_min", cfg.w_min},
                {"h_min", cfg.h_min},             {"min_overlap", cfg.min_overlap},
                {"max_steps", cfg.max_steps},     {"action_scale", cfg.action_scale},
                {"seed", cfg.seed}};
}

EnvConfig env_from_json(const json& j) {
    EnvConfig cfg;
    cfg.window_size = j.at("window_size").get<double>();
    cfg.num_rectan = j.at("num_rectan").get<int>();
    cfg.min_area = j.at("min_area").get<double>();
    cfg.w_min = j.at("w_min").get<double>();
    cfg.h_min = j.at("h_min").get<double>();
    cfg.min_overlap = j.at("min_overlap").get<double>();
    cfg.max_steps = j.at("max_steps").get<int>();
    cfg.action_scale = j.at("action_scale").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

}  // namespace

std::string checkpoint_json_string(const PolicyParams& params, const EnvConfig& env_cfg) {
    if (!params.all_finite()) {
        throw TrainingDivergenceError("refusing to checkpoint non-finite parameters");
    }
    json j;
    j["format"] = "glyphrl-policy";
    j["version"] = 1;
    j["env"] = env_to_json(env_cfg);
    j["actor"] = mlp_to_json(params.actor);
    j["critic"] = mlp_to_json(params.critic);
    json ls = json::array();
    for (Eigen::Index i = 0; i < params.log_std.size(); ++i) ls.push_back(params.log_std(i));
    j["log_std"] = std::move(ls);
    return j.dump(1) + '\n';
}

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params,
                     const EnvConfig& env_cfg) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
    out << checkpoint_json_string(params, env_cfg);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
    json j = json::parse(in);
    if (j.value("format", "") != std::string("glyphrl-policy")) {
        throw ContractViolationError("not a policy checkpoint: " + path.string());
    }
    if (j.at("version").get<int>() != 1) {
        throw ContractViolationError("unsupported checkpoint version in " + path.string());
    }
    Checkpoint ckpt;
    ckpt.env_cfg = env_from_json(j.at("env"));
    ckpt.params.actor = mlp_from_json(j.at("actor"));
    ckpt.params.critic = mlp_from_json(j.at("critic"));
    const auto& ls = j.at("log_std");
    ckpt.params.log_std.resize(static_cast<Eigen::Index>(ls.size()));
    for (std::size_t i = 0; i < ls.size(); ++i) ckpt.params.log_std(static_cast<Eigen::Index>(i)) = ls[i].get<double>();

    if (ckpt.params.actor.input_dim() != ckpt.env_cfg.num_rectan * 4 ||
        ckpt.params.actor.output_dim() != ckpt.env_cfg.num_rectan * 4 ||
        ckpt.params.critic.input_dim() != ckpt.params.actor.input_dim() ||
        ckpt.params.critic.output_dim() != 1 ||
        ckpt.params.log_std.size() != ckpt.params.actor.output_dim()) {
        throw ContractViolationError("checkpoint dimensions inconsistent with its env config");
    }
    return ckpt;
}

}  // namespace glyphrl
