#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "glyphrl/errors.hpp"
#include "glyphrl/policy_net.hpp"
#include "glyphrl/rng.hpp"
#include "oracles.hpp"

using namespace glyphrl;

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178032973640562;

/// Plain-loop long-double forward pass, independent of the Eigen path.
std::vector<long double> naive_forward(const Mlp& net, const Vec& input) {
    std::vector<long double> activation(input.data(), input.data() + input.size());
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        const Mat& w = net.weights[l];
        const Vec& b = net.biases[l];
        std::vector<long double> next(static_cast<std::size_t>(w.rows()), 0.0L);
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            long double sum = b(r);
            for (Eigen::Index c = 0; c < w.cols(); ++c) {
                sum += static_cast<long double>(w(r, c)) * activation[static_cast<std::size_t>(c)];
            }
            next[static_cast<std::size_t>(r)] =
                (l + 1 == net.num_layers()) ? sum : std::tanh(sum);
        }
        activation = std::move(next);
    }
    return activation;
}

Vec random_vec(int n, RngStream& rng, double lo = 0.0, double hi = 1.0) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = rng.uniform(lo, hi);
    return v;
}

double stdnormal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("zero parameters map every observation to a zero mean") {
    RngStream rng(1);
    PolicyParams params = PolicyParams::make(8, 8, {16, 16}, rng);
    for (auto& w : params.actor.weights) w.setZero();
    for (auto& b : params.actor.biases) b.setZero();
    const auto [mean, log_std] = forward_actor(params, random_vec(8, rng));
    CHECK(mean.norm() == 0.0);
    CHECK(log_std.norm() == 0.0);
}

TEST_CASE("forward passes are pure") {
    RngStream rng(2);
    const PolicyParams params = PolicyParams::make(12, 12, {32, 32}, rng);
    const Vec obs = random_vec(12, rng);
    const Vec first = forward_actor(params, obs).first;
    const Vec second = forward_actor(params, obs).first;
    CHECK(first == second);
    CHECK(forward_critic(params, obs) == forward_critic(params, obs));
}

TEST_CASE("forward matches an independent long-double oracle within 1e-12") {
    RngStream rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        const PolicyParams params = PolicyParams::make(20, 20, {64, 64}, rng);
        const Vec obs = random_vec(20, rng);
        const Vec mean = forward_actor(params, obs).first;
        const auto expected = naive_forward(params.actor, obs);
        for (Eigen::Index i = 0; i < mean.size(); ++i) {
            CHECK(std::abs(mean(i) - static_cast<double>(expected[static_cast<std::size_t>(i)])) <
                  1e-12);
        }
        const auto critic_expected = naive_forward(params.critic, obs);
        CHECK(std::abs(forward_critic(params, obs) - static_cast<double>(critic_expected[0])) <
              1e-12);
    }
}

TEST_CASE("a floored log_std collapses sampling onto tanh(mean)") {
    RngStream rng(4);
    const Vec mean = random_vec(6, rng, -2.0, 2.0);
    const Vec log_std = Vec::Constant(6, kLogStdMin);
    const SampledAction s = sample_action(mean, log_std, rng);
    for (Eigen::Index i = 0; i < mean.size(); ++i) {
        // sigma = exp(-20) ~ 2e-9, so deviations sit below 1e-7.
        CHECK(std::abs(s.action(i) - std::tanh(mean(i))) < 1e-7);
    }
}

TEST_CASE("gaussian log density at the mean is the closed form") {
    RngStream rng(5);
    const Vec mean = random_vec(5, rng, -1.0, 1.0);
    const Vec log_std = random_vec(5, rng, -0.5, 0.5);
    const double lp = gaussian_log_prob(mean, mean, log_std);
    CHECK(lp == doctest::Approx(-(log_std.sum() + 5.0 * kHalfLog2Pi)).epsilon(1e-12));
}

TEST_CASE("exp(log_prob) matches a change-of-variables CDF oracle within 1e-8") {
    // Small z and a wide Gaussian keep the density small enough that the
    // 1e-6 squash guard perturbs it by less than the tolerance.
    const Vec mean = (Vec(3) << 0.1, -0.1, 0.0).finished();
    const Vec log_std = (Vec(3) << 2.0, 2.0, 2.0).finished();
    const Vec z = (Vec(3) << 0.2, -0.3, 0.25).finished();

    const double lp = squashed_log_prob(z, mean, log_std);

    // Density of a = tanh(z) estimated per dimension from the Gaussian CDF:
    // p(a_i) ~= [F(atanh(a_i + h)) - F(atanh(a_i - h))] / (2h).
    double density = 1.0;
    const double h = 1e-7;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        const double a = std::tanh(z(i));
        const double sigma = std::exp(log_std(i));
        const double hi = stdnormal_cdf((std::atanh(a + h) - mean(i)) / sigma);
        const double lo = stdnormal_cdf((std::atanh(a - h) - mean(i)) / sigma);
        density *= (hi - lo) / (2.0 * h);
    }
    CHECK(std::abs(std::exp(lp) - density) < 1e-8);
}

TEST_CASE("evaluate agrees with the density reported at sampling time") {
    RngStream rng(6);
    const PolicyParams params = PolicyParams::make(8, 8, {16, 16}, rng);
    const Vec obs = random_vec(8, rng);
    const auto [mean, log_std] = forward_actor(params, obs);
    const SampledAction s = sample_action(mean, log_std, rng);
    const EvalResult ev = evaluate(params, obs, s.pre_squash);
    CHECK(std::abs(ev.log_prob - s.log_prob) < 1e-12);
}

TEST_CASE("dimension mismatches are contract violations") {
    RngStream rng(18);
    const PolicyParams params = PolicyParams::make(8, 8, {16}, rng);
    const Vec obs = random_vec(8, rng);
    CHECK_THROWS_AS(evaluate(params, obs, Vec::Zero(5)), ContractViolationError);
    CHECK_THROWS_AS(forward_actor(params, Vec::Zero(3)), ContractViolationError);
}

TEST_CASE("entropy closed form at log_std = 0") {
    const Vec log_std = Vec::Zero(20);
    CHECK(gaussian_entropy(log_std) ==
          doctest::Approx(20.0 * 0.5 * std::log(2.0 * M_PI * M_E)).epsilon(1e-12));
}

TEST_CASE("sampled actions lie strictly inside (-1, 1)") {
    RngStream rng(7);
    const Vec mean = Vec::Constant(4, 50.0);  // extreme mean still squashes inside
    const Vec log_std = Vec::Constant(4, 1.5);
    for (int i = 0; i < 200; ++i) {
        const SampledAction s = sample_action(mean, log_std, rng);
        for (Eigen::Index k = 0; k < s.action.size(); ++k) {
            CHECK(s.action(k) > -1.0);
            CHECK(s.action(k) < 1.0);
        }
    }
}

TEST_CASE("log_prob gradients match central finite differences") {
    RngStream rng(8);
    PolicyParams params = PolicyParams::make(6, 6, {8}, rng);
    const Vec obs = random_vec(6, rng);
    const Vec z = random_vec(6, rng, -1.5, 1.5);

    PolicyGrads grads = PolicyGrads::zeros_like(params);
    MlpCache actor_cache, critic_cache;
    evaluate_with_cache(params, obs, z, actor_cache, critic_cache);
    backprop_sample(params, z, actor_cache, critic_cache, 1.0, 0.0, 0.0, grads);

    const auto ptrs = param_ptrs(params);
    const auto fd = oracle::finite_difference(
        ptrs, [&] { return evaluate(params, obs, z).log_prob; });
    auto gptrs = grad_ptrs(grads);
    REQUIRE(gptrs.size() == fd.size());
    for (std::size_t i = 0; i < fd.size(); ++i) {
        const double analytic = *gptrs[i];
        const double denom = std::max({std::abs(analytic), std::abs(fd[i]), 1e-6});
        CHECK(std::abs(analytic - fd[i]) / denom < 1e-4);
    }
}

TEST_CASE("value gradients match central finite differences") {
    RngStream rng(9);
    PolicyParams params = PolicyParams::make(4, 4, {8}, rng);
    const Vec obs = random_vec(4, rng);
    const Vec z = random_vec(4, rng, -1.0, 1.0);

    PolicyGrads grads = PolicyGrads::zeros_like(params);
    MlpCache actor_cache, critic_cache;
    evaluate_with_cache(params, obs, z, actor_cache, critic_cache);
    backprop_sample(params, z, actor_cache, critic_cache, 0.0, 1.0, 0.0, grads);

    const auto ptrs = param_ptrs(params);
    const auto fd = oracle::finite_difference(
        ptrs, [&] { return evaluate(params, obs, z).value; });
    auto gptrs = grad_ptrs(grads);
    for (std::size_t i = 0; i < fd.size(); ++i) {
        const double analytic = *gptrs[i];
        const double denom = std::max({std::abs(analytic), std::abs(fd[i]), 1e-6});
        CHECK(std::abs(analytic - fd[i]) / denom < 1e-4);
    }
}

TEST_CASE("adam leaves parameters fixed under zero gradients") {
    RngStream rng(10);
    PolicyParams params = PolicyParams::make(4, 4, {8}, rng);
    const PolicyParams before = params;
    AdamState adam = AdamState::make_like(params);
    const PolicyGrads zero = PolicyGrads::zeros_like(params);
    adam_step(params, zero, adam, 3e-4);
    adam_step(params, zero, adam, 3e-4);
    const auto a = param_ptrs(params);
    auto& mutable_before = const_cast<PolicyParams&>(before);
    const auto b = param_ptrs(mutable_before);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);
    CHECK(adam.step == 2);
}

TEST_CASE("adam first step moves a scalar parameter by about -lr") {
    // Single gradient of 1.0 at t = 1: bias-corrected moments are both 1, so
    // the update is -lr / (1 + eps).
    RngStream rng(11);
    PolicyParams params = PolicyParams::make(1, 1, {1}, rng);
    AdamState adam = AdamState::make_like(params);
    PolicyGrads grads = PolicyGrads::zeros_like(params);
    const double before = params.actor.weights[0](0, 0);
    grads.actor.weights[0](0, 0) = 1.0;
    adam_step(params, grads, adam, 3e-4);
    const double update = params.actor.weights[0](0, 0) - before;
    CHECK(update == doctest::Approx(-3e-4 / (1.0 + 1e-5)).epsilon(1e-12));
}

TEST_CASE("adam trajectories are deterministic") {
    const auto run = [] {
        RngStream rng(12);
        PolicyParams params = PolicyParams::make(4, 4, {8}, rng);
        AdamState adam = AdamState::make_like(params);
        PolicyGrads grads = PolicyGrads::zeros_like(params);
        RngStream grad_rng(13);
        for (int step = 0; step < 10; ++step) {
            for (double* g : grad_ptrs(grads)) *g = grad_rng.normal();
            adam_step(params, grads, adam, 1e-3);
        }
        return params;
    };
    PolicyParams a = run();
    PolicyParams b = run();
    const auto pa = param_ptrs(a);
    const auto pb = param_ptrs(b);
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i] == *pb[i]);
}

TEST_CASE("non-finite gradients abort the update") {
    RngStream rng(14);
    PolicyParams params = PolicyParams::make(4, 4, {8}, rng);
    AdamState adam = AdamState::make_like(params);
    PolicyGrads grads = PolicyGrads::zeros_like(params);
    grads.actor.weights[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(adam_step(params, grads, adam, 3e-4), TrainingDivergenceError);
}

TEST_CASE("adam projects log_std back into its range") {
    RngStream rng(15);
    PolicyParams params = PolicyParams::make(2, 2, {4}, rng);
    params.log_std = Vec::Constant(2, kLogStdMax);
    AdamState adam = AdamState::make_like(params);
    PolicyGrads grads = PolicyGrads::zeros_like(params);
    grads.log_std = Vec::Constant(2, -1.0);  // pushes log_std up
    adam_step(params, grads, adam, 1.0);
    for (Eigen::Index i = 0; i < params.log_std.size(); ++i) {
        CHECK(params.log_std(i) <= kLogStdMax);
        CHECK(params.log_std(i) >= kLogStdMin);
    }
}

TEST_CASE("checkpoints round-trip to bit-identical forward passes") {
    RngStream rng(16);
    PolicyParams params = PolicyParams::make(20, 20, {64, 64}, rng);
    // Exercise non-trivial log_std values too.
    for (Eigen::Index i = 0; i < params.log_std.size(); ++i) params.log_std(i) = rng.normal();
    EnvConfig cfg;
    cfg.seed = 99;

    const auto path = std::filesystem::temp_directory_path() / "glyphrl_ckpt_test.json";
    save_checkpoint(path, params, cfg);
    const Checkpoint loaded = load_checkpoint(path);
    std::filesystem::remove(path);

    CHECK(loaded.env_cfg.seed == cfg.seed);
    CHECK(loaded.env_cfg.min_area == cfg.min_area);
    const Vec obs = random_vec(20, rng);
    const Vec before = forward_actor(params, obs).first;
    const Vec after = forward_actor(loaded.params, obs).first;
    CHECK(before == after);
    CHECK(forward_critic(params, obs) == forward_critic(loaded.params, obs));
    CHECK(loaded.params.log_std == params.log_std);
}

TEST_CASE("checkpoint stays under the 2 MB budget") {
    RngStream rng(17);
    const PolicyParams params = PolicyParams::make(20, 20, {64, 64}, rng);
    EnvConfig cfg;
    const std::string blob = checkpoint_json_string(params, cfg);
    CHECK(blob.size() < 2 * 1024 * 1024);
}

TEST_CASE("mismatched checkpoints are rejected") {
    const auto path = std::filesystem::temp_directory_path() / "glyphrl_bad_ckpt.json";
    {
        std::FILE* f = std::fopen(path.c_str(), "w");
        std::fputs("{\"format\": \"something-else\"}", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_checkpoint(path), ContractViolationError);
    std::filesystem::remove(path);
}
