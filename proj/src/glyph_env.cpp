#include "glyphrl/glyph_env.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "glyphrl/errors.hpp"

namespace glyphrl {

void EnvConfig::validate() const {
    const auto fail = [](const std::string& msg) { throw InvalidConfigError("invalid config: " + msg); };
    if (!(window_size > 0.0)) fail("window_size must be > 0");
    if (num_rectan < 1) fail("num_rectan must be >= 1");
    if (!(w_min > 0.0) || !(h_min > 0.0)) fail("w_min and h_min must be > 0");
    if (w_min > window_size) fail("w_min exceeds window_size");
    if (h_min > window_size) fail("h_min exceeds window_size");
    if (w_min * h_min > min_area) fail("min_area below w_min * h_min");
    if (min_area > (window_size - w_min) * (window_size - h_min))
        fail("min_area exceeds (window_size - w_min) * (window_size - h_min)");
    if (!(min_overlap > 0.0 && min_overlap < 1.0)) fail("min_overlap must lie in (0, 1)");
    if (max_steps < 1) fail("max_steps must be >= 1");
    if (!(action_scale > 0.0)) fail("action_scale must be > 0");
}

double reward_for_overlap(double overlap, double min_overlap) {
    if (overlap < min_overlap) {
        return 10.0 * (1.0 - overlap / min_overlap);
    }
    return -10.0 * (overlap - min_overlap) / (1.0 - min_overlap);
}

LayoutState generate_initial_state(const EnvConfig& cfg, RngStream& rng) {
    LayoutState state;
    state.rects.reserve(cfg.num_rectan);
    for (int i = 0; i < cfg.num_rectan; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            const double x1 = rng.uniform(0.0, cfg.window_size - cfg.w_min);
            const double y1 = rng.uniform(0.0, cfg.window_size - cfg.h_min);
            // Width interval keeping h = min_area / w inside [h_min, window - y1]
            // and the box inside the window.
            const double w_lo = std::max(cfg.w_min, cfg.min_area / (cfg.window_size - y1));
            const double w_hi = std::min(cfg.window_size - x1, cfg.min_area / cfg.h_min);
            if (w_lo > w_hi) continue;
            const double w = rng.uniform(w_lo, w_hi);
            const double h = cfg.min_area / w;
            // A draw at the interval edge can land an ulp past the window.
            state.rects.push_back(Rect{x1, y1, std::min(x1 + w, cfg.window_size),
                                       std::min(y1 + h, cfg.window_size)});
            placed = true;
        }
        if (!placed) {
            throw InvalidConfigError(
                "infeasible config: no placement found in 1000 attempts for box " + std::to_string(i) +
                "; min_area " + std::to_string(cfg.min_area) + " leaves no feasible width interval " +
                "within the " + std::to_string(cfg.window_size) + "-px window at w_min " +
                std::to_string(cfg.w_min) + ", h_min " + std::to_string(cfg.h_min));
        }
    }
    return state;
}

std::vector<double> normalized_observation(const LayoutState& state, double window_size) {
    std::vector<double> obs;
    obs.reserve(state.rects.size() * 4);
    for (const Rect& r : state.rects) {
        obs.push_back(r.x1 / window_size);
        obs.push_back(r.y1 / window_size);
        obs.push_back(r.x2 / window_size);
        obs.push_back(r.y2 / window_size);
    }
    return obs;
}

GlyphEnv::GlyphEnv(EnvConfig cfg) : cfg_(cfg), rng_(cfg.seed) {
    cfg_.validate();
    reset();
}

LayoutState GlyphEnv::reset(std::optional<std::uint64_t> seed) {
    if (seed) rng_ = RngStream(*seed);
    state_ = generate_initial_state(cfg_, rng_);
    steps_ = 0;
    episode_over_ = false;
    return state_;
}

StepOutcome GlyphEnv::step(const Action& action) {
    if (episode_over_) {
        throw ContractViolationError("step() called on a finished episode; call reset() first");
    }
    if (action.deltas.size() != static_cast<std::size_t>(cfg_.num_rectan) * 4) {
        throw ContractViolationError("action shape mismatch: expected " +
                                     std::to_string(cfg_.num_rectan * 4) + " deltas, got " +
                                     std::to_string(action.deltas.size()));
    }

    const double win = cfg_.window_size;
    for (int i = 0; i < cfg_.num_rectan; ++i) {
        Rect& r = state_.rects[i];
        const double* d = &action.deltas[static_cast<std::size_t>(i) * 4];
        const auto scaled = [this](double v) { return std::clamp(v, -1.0, 1.0) * cfg_.action_scale; };
        r.x1 += scaled(d[0]);
        r.y1 += scaled(d[1]);
        r.x2 += scaled(d[2]);
        r.y2 += scaled(d[3]);
        r = clip_to_window(r, win);
        if (r.x1 > r.x2) std::swap(r.x1, r.x2);
        if (r.y1 > r.y2) std::swap(r.y1, r.y2);
        // Minimum dimensions: grow toward the window bound, pull the other
        // corner back when blocked.
        if (r.width() < cfg_.w_min) {
            r.x2 = r.x1 + cfg_.w_min;
            if (r.x2 > win) {
                r.x2 = win;
                r.x1 = win - cfg_.w_min;
            }
        }
        if (r.height() < cfg_.h_min) {
            r.y2 = r.y1 + cfg_.h_min;
            if (r.y2 > win) {
                r.y2 = win;
                r.y1 = win - cfg_.h_min;
            }
        }
    }

    ++steps_;
    const double overlap = total_overlap(state_.rects);
    const double reward = reward_for_overlap(overlap, cfg_.min_overlap);
    const bool done = overlap < cfg_.min_overlap;
    const bool truncated = !done && steps_ >= cfg_.max_steps;
    episode_over_ = done || truncated;
    return StepOutcome{state_, reward, overlap, done, truncated, steps_};
}

void GlyphEnv::set_state(LayoutState state) {
    if (state.rects.size() != static_cast<std::size_t>(cfg_.num_rectan)) {
        throw ContractViolationError("set_state: expected " + std::to_string(cfg_.num_rectan) +
                                     " rects, got " + std::to_string(state.rects.size()));
    }
    for (Rect& r : state.rects) {
        r = clip_to_window(r, cfg_.window_size);
        if (r.x1 > r.x2) std::swap(r.x1, r.x2);
        if (r.y1 > r.y2) std::swap(r.y1, r.y2);
    }
    state_ = std::move(state);
    episode_over_ = false;
}

}  // namespace glyphrl
