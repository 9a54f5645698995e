#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "glyphrl/geometry.hpp"
#include "glyphrl/rng.hpp"

namespace glyphrl {

/// All environment parameters. Defaults are the reference configuration:
/// five boxes of at least 1500 px^2 in a 128x128 window.
struct EnvConfig {
    double window_size = 128.0;   // canvas side length, pixels
    int num_rectan = 5;           // number of boxes N
    double min_area = 1500.0;     // required box area at initialization
    double w_min = 10.0;          // minimum box width
    double h_min = 10.0;          // minimum box height
    double min_overlap = 0.1;     // success threshold m on total overlap
    int max_steps = 1000;         // episode truncation horizon
    double action_scale = 1.0;    // pixels moved per unit of action
    std::uint64_t seed = 0;       // environment RNG seed

    /// Throws InvalidConfigError naming the violated bound.
    void validate() const;
};

/// N boxes, the full environment state. Observations are this list
/// flattened row-major and divided by window_size.
struct LayoutState {
    std::vector<Rect> rects;
};

/// Per-box corner deltas (dx1, dy1, dx2, dy2), each in [-1, 1]. Stored
/// row-major, shape (num_rectan, 4).
struct Action {
    std::vector<double> deltas;

    static Action zeros(int num_rectan) { return Action{std::vector<double>(num_rectan * 4, 0.0)}; }
};

struct StepOutcome {
    LayoutState state;
    double reward = 0.0;
    double overlap = 0.0;  // total pairwise IoU after the move
    bool done = false;     // overlap dropped strictly below min_overlap
    bool truncated = false;
    int steps_elapsed = 0;
};

/// Reward for a given total overlap o:
///   o <  m ->  10 * (1 - o/m)
///   o >= m -> -10 * (o - m) / (1 - m)
/// Positive iff the episode succeeds this step; capped at +10, unbounded
/// below since o can reach N(N-1)/2.
double reward_for_overlap(double overlap, double min_overlap);

/// Samples N boxes of exactly min_area that satisfy the dimension and
/// boundary constraints. For each box: draw (x1, y1) uniform over the
/// feasible corner region, then draw the width uniform over the interval
/// that keeps both the height bound and the window bound satisfiable, and
/// derive the height as min_area / width. Resamples the corner when the
/// interval is empty; throws InvalidConfigError after 1000 failures.
LayoutState generate_initial_state(const EnvConfig& cfg, RngStream& rng);

/// Flattened observation: coordinates divided by window_size, in [0, 1].
std::vector<double> normalized_observation(const LayoutState& state, double window_size);

/// The layout environment. One instance is single-threaded (owns a mutable
/// step counter and RNG); run independent instances for parallel workers.
class GlyphEnv {
public:
    explicit GlyphEnv(EnvConfig cfg);

    /// Starts a fresh episode; reseeds the RNG stream when a seed is given.
    LayoutState reset(std::optional<std::uint64_t> seed = std::nullopt);

    /// Applies per-box deltas (clamped to [-1,1], scaled by action_scale),
    /// clips to the window, repairs corner ordering, re-enforces minimum
    /// dimensions, then scores the layout. Throws ContractViolationError on
    /// a wrong action shape or when the episode already ended.
    StepOutcome step(const Action& action);

    const EnvConfig& config() const { return cfg_; }
    const LayoutState& state() const { return state_; }
    std::vector<double> observation() const { return normalized_observation(state_, cfg_.window_size); }
    int steps_elapsed() const { return steps_; }
    bool episode_over() const { return episode_over_; }

    /// Replaces the current state (test and tooling hook). Coordinates are
    /// clipped to the window; the step counter is left untouched.
    void set_state(LayoutState state);

private:
    EnvConfig cfg_;
    RngStream rng_;
    LayoutState state_;
    int steps_ = 0;
    bool episode_over_ = false;
};

}  // namespace glyphrl
