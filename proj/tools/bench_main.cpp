// Benchmark comparing the serial reference paths against the OpenMP kernels
// (PPO minibatch gradient, episode evaluation). Both must agree bit for bit;
// the table reports timings and verifies the agreement.

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include "glyphrl/eval_bench.hpp"
#include "glyphrl/glyph_env.hpp"
#include "glyphrl/policy_net.hpp"
#include "glyphrl/ppo_trainer.hpp"
#include "glyphrl/rng.hpp"

using namespace glyphrl;

namespace {

double time_ms(const std::function<void()>& fn, int repetitions) {
    double best = 1e300;
    for (int r = 0; r < repetitions; ++r) {
        const auto start = std::chrono::steady_clock::now();
        fn();
        const auto stop = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(stop - start).count());
    }
    return best;
}

double max_grad_diff(PolicyGrads& a, PolicyGrads& b) {
    const auto pa = grad_ptrs(a);
    const auto pb = grad_ptrs(b);
    double max_diff = 0.0;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        max_diff = std::max(max_diff, std::abs(*pa[i] - *pb[i]));
    }
    return max_diff;
}

GatheredBatch synthetic_batch(const PolicyParams& params, int batch_size, std::uint64_t seed) {
    RngStream rng(seed);
    GatheredBatch batch;
    for (int i = 0; i < batch_size; ++i) {
        Vec obs(params.obs_dim());
        for (Eigen::Index k = 0; k < obs.size(); ++k) obs(k) = rng.uniform();
        const auto [mean, log_std] = forward_actor(params, obs);
        const SampledAction s = sample_action(mean, log_std, rng);
        batch.observations.push_back(obs);
        batch.pre_squash.push_back(s.pre_squash);
        batch.old_log_probs.push_back(s.log_prob + 0.05 * rng.normal());
        batch.advantages.push_back(rng.normal());
        batch.returns.push_back(rng.normal());
    }
    return batch;
}

void bench_gradient_kernel(int threads) {
    RngStream init(7);
    const PolicyParams params = PolicyParams::make(20, 20, {64, 64}, init);

    for (const int batch_size : {64, 512, 2048}) {
        const GatheredBatch batch = synthetic_batch(params, batch_size, 11);
        PolicyGrads serial_grads = PolicyGrads::zeros_like(params);
        PolicyGrads parallel_grads = PolicyGrads::zeros_like(params);
        PpoGradWorkspace ws;

        const double serial_ms = time_ms(
            [&] { ppo_loss_and_grad(params, batch, 0.2, 0.5, 0.0, serial_grads, 1, ws); }, 5);
        const double parallel_ms = time_ms(
            [&] { ppo_loss_and_grad(params, batch, 0.2, 0.5, 0.0, parallel_grads, threads, ws); },
            5);
        const double diff = max_grad_diff(serial_grads, parallel_grads);
        std::printf("ppo_grad    batch=%-5d serial %8.3f ms   omp(%d) %8.3f ms   speedup %.2fx   max|diff| %g\n",
                    batch_size, serial_ms, threads, parallel_ms, serial_ms / parallel_ms, diff);
    }
}

void bench_episode_eval(int threads) {
    RngStream init(13);
    const PolicyParams params = PolicyParams::make(20, 20, {64, 64}, init);
    EnvConfig cfg;
    cfg.max_steps = 200;  // untrained policy episodes run to truncation

    for (const int episodes : {16, 64}) {
        EvalProtocol serial_protocol{episodes, true, 3, 1};
        EvalProtocol parallel_protocol{episodes, true, 3, threads};
        std::vector<EpisodeMetrics> serial_eps;
        std::vector<EpisodeMetrics> parallel_eps;

        const double serial_ms =
            time_ms([&] { evaluate_policy(cfg, params, serial_protocol, &serial_eps); }, 3);
        const double parallel_ms =
            time_ms([&] { evaluate_policy(cfg, params, parallel_protocol, &parallel_eps); }, 3);

        double diff = 0.0;
        for (std::size_t i = 0; i < serial_eps.size(); ++i) {
            diff = std::max(diff, std::abs(serial_eps[i].episode_return -
                                           parallel_eps[i].episode_return));
            diff = std::max(diff,
                            std::abs(serial_eps[i].final_overlap - parallel_eps[i].final_overlap));
        }
        std::printf("episode_eval n=%-5d serial %8.3f ms   omp(%d) %8.3f ms   speedup %.2fx   max|diff| %g\n",
                    episodes, serial_ms, threads, parallel_ms, serial_ms / parallel_ms, diff);
    }
}

}  // namespace

int main(int argc, char** argv) {
    int threads = omp_get_max_threads();
    if (argc > 1) threads = std::max(1, std::atoi(argv[1]));
    std::printf("glyphrl bench: serial reference vs OpenMP kernels (%d threads)\n", threads);
    bench_gradient_kernel(threads);
    bench_episode_eval(threads);
    return 0;
}
