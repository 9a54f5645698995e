#pragma once

#include <stdexcept>
#include <string>

namespace glyphrl {

/// Configuration that cannot produce a valid initial layout (or violates a
/// declared parameter bound). The message names the violated bound.
struct InvalidConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A caller broke an interface precondition (wrong action shape, stepping a
/// finished episode, mismatched checkpoint dimensions, ...).
struct ContractViolationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Non-finite loss, gradient, or parameter detected during training.
struct TrainingDivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A prompt yielded no keywords, so there is nothing to lay out.
struct EmptyLayoutError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace glyphrl
