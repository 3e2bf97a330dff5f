#include "win/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "win/autograd.hpp"
#include "win/ops.hpp"

namespace win {

namespace {

template <typename T>
Tensor<T> scalar_objective(const Objective<T>& f) {
    Tensor<T> y = f();
    return y.size() == 1 ? y : sum(y);
}

}  // namespace

template <typename T>
GradCheckResult<T> grad_check(const Objective<T>& f, std::vector<Tensor<T>> leaves, double eps,
                              std::size_t max_coords_per_tensor, std::uint64_t seed,
                              const CoordinateFilter& filter) {
    for (auto& leaf : leaves) {
        if (!leaf.is_leaf()) throw Error("grad_check perturbs leaves only");
        leaf.set_requires_grad(true);
        leaf.zero_grad();
    }
    Tensor<T> y = scalar_objective(f);
    backward(y);
    std::vector<std::vector<T>> analytic;
    analytic.reserve(leaves.size());
    for (const auto& leaf : leaves) analytic.push_back(leaf.grad());

    std::mt19937_64 rng(seed);
    GradCheckResult<T> result;
    NoGradGuard no_grad;
    for (std::size_t t = 0; t < leaves.size(); ++t) {
        auto values = leaves[t].mutable_values();
        std::vector<std::size_t> coords;
        coords.reserve(values.size());
        for (std::size_t i = 0; i < values.size(); ++i)
            if (!filter || filter(t, i)) coords.push_back(i);
        if (max_coords_per_tensor != 0 && coords.size() > max_coords_per_tensor) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(max_coords_per_tensor);
            std::sort(coords.begin(), coords.end());
        }
        for (auto i : coords) {
            const T saved = values[i];
            values[i] = static_cast<T>(saved + eps);
            const double plus = static_cast<double>(scalar_objective(f).item());
            values[i] = static_cast<T>(saved - eps);
            const double minus = static_cast<double>(scalar_objective(f).item());
            values[i] = saved;
            const double numeric = (plus - minus) / (2.0 * eps);
            const double a = static_cast<double>(analytic[t][i]);
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            const double err = std::abs(a - numeric) / denom;
            ++result.coordinates;
            if (err > result.max_relative_error) {
                result.max_relative_error = err;
                result.worst_tensor = t;
                result.worst_index = i;
                result.worst_analytic = a;
                result.worst_numeric = numeric;
            }
        }
    }
    return result;
}

template <typename T>
double grad_check(const Objective<T>& f, Tensor<T> x, double eps) {
    return grad_check<T>(f, std::vector<Tensor<T>>{std::move(x)}, eps).max_relative_error;
}

template GradCheckResult<float> grad_check(const Objective<float>&, std::vector<Tensor<float>>, double,
                                           std::size_t, std::uint64_t, const CoordinateFilter&);
template GradCheckResult<double> grad_check(const Objective<double>&, std::vector<Tensor<double>>, double,
                                            std::size_t, std::uint64_t, const CoordinateFilter&);
template double grad_check(const Objective<float>&, Tensor<float>, double);
template double grad_check(const Objective<double>&, Tensor<double>, double);

}  // namespace win
