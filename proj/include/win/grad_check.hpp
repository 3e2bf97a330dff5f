#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "win/tensor.hpp"

namespace win {

/// Central-difference gradient verification.
///
/// `f` recomputes the objective from the current leaf values; non-scalar
/// outputs are sum-reduced. For every checked coordinate the analytic
/// gradient a and the estimate n = (f(x+eps) - f(x-eps)) / 2eps are compared
/// as |a - n| / max(|a|, |n|, 1e-8); the maximum is returned.
template <typename T>
struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t coordinates = 0;
    std::size_t worst_tensor = 0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

template <typename T>
using Objective = std::function<Tensor<T>()>;

/// Selects coordinates to compare: (tensor position, flat index) -> keep.
using CoordinateFilter = std::function<bool(std::size_t, std::size_t)>;

/// Checks every coordinate of `x`.
template <typename T>
double grad_check(const Objective<T>& f, Tensor<T> x, double eps);

/// Checks several leaves. When `max_coords_per_tensor` is nonzero, each
/// tensor contributes at most that many coordinates, drawn with `seed`.
/// Coordinates rejected by `filter` are skipped before sampling.
template <typename T>
GradCheckResult<T> grad_check(const Objective<T>& f, std::vector<Tensor<T>> leaves, double eps,
                              std::size_t max_coords_per_tensor = 0, std::uint64_t seed = 0,
                              const CoordinateFilter& filter = {});

}  // namespace win
