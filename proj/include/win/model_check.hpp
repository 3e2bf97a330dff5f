#pragma once

// Whole-model finite-difference check in float64.

#include <cstdint>
#include <string>

#include "win/grad_check.hpp"
#include "win/model_config.hpp"

namespace win {

struct ModelGradCheck {
    double max_relative_error = 0;
    std::size_t coordinates = 0;
    /// Leaf holding the worst coordinate ("input" or a parameter name).
    std::string worst_name;
    std::size_t worst_index = 0;
    double worst_analytic = 0, worst_numeric = 0;
    /// Largest |analytic gradient| on the key slice of any qkv bias. Softmax
    /// is invariant to it, so the true value is 0 and central differences
    /// measure only roundoff there; these coordinates are checked against
    /// kKeyBiasTolerance instead of by relative error.
    double key_bias_max_abs = 0;

    bool passed(double tolerance) const;
    std::string text() const;
};

inline constexpr double kKeyBiasTolerance = 1e-12;
inline constexpr double kModelCheckEps = 1e-4;
inline constexpr double kModelCheckTolerance = 1e-4;

/// Loss = cross-entropy of model_forward (eval mode) on one uniform [-1, 1]
/// image with label seed % num_classes. Weights are init_params(cfg, seed)
/// plus uniform [-0.2, 0.2] noise so no coordinate sits at a degenerate zero.
/// Every input pixel is checked; each parameter tensor contributes
/// `coords_per_param` sampled coordinates (0: all).
ModelGradCheck model_grad_check(const ModelConfig& cfg, std::uint64_t seed, double eps = kModelCheckEps,
                                std::size_t coords_per_param = 16);

}  // namespace win
