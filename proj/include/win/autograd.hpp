#pragma once

#include <vector>

#include "win/tensor.hpp"

namespace win {

/// Topologically ordered record of the ops that produced an output.
///
/// Built by walking grad_fn links back from the output. backward() visits
/// each recorded node exactly once in reverse order. Intermediate gradients
/// are reset on every call; leaf gradients accumulate.
template <typename T>
class ComputeGraph {
public:
    explicit ComputeGraph(const Tensor<T>& output);

    /// Number of recorded (non-leaf) nodes.
    std::size_t size() const { return order_.size(); }
    /// Op names in forward (topological) order.
    std::vector<std::string> op_names() const;
    /// Leaves reachable from the output that require a gradient.
    std::vector<Tensor<T>> leaves() const;

    void backward(const Tensor<T>& seed);
    void backward(std::span<const T> seed);

    /// Zeroes every reachable leaf gradient.
    void zero_leaf_grads();

private:
    std::shared_ptr<detail::TensorImpl<T>> output_;
    std::vector<detail::TensorImpl<T>*> order_;  // post-order: inputs before consumers
    std::vector<std::shared_ptr<detail::TensorImpl<T>>> leaves_;
};

extern template class ComputeGraph<float>;
extern template class ComputeGraph<double>;

/// Backpropagates `seed` (same shape as output) through output's history.
template <typename T>
void backward(const Tensor<T>& output, const Tensor<T>& seed) {
    ComputeGraph<T>(output).backward(seed);
}

/// Backpropagates a unit seed from a single-element output.
template <typename T>
void backward(const Tensor<T>& output) {
    if (output.size() != 1) {
        throw ShapeError("backward without seed needs a single-element output, got " +
                         shape_str(output.shape()));
    }
    ComputeGraph<T>(output).backward(Tensor<T>(output.shape(), T(1)));
}

}  // namespace win
