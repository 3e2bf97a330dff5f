#include "win/autograd.hpp"

#include <unordered_set>
#include <utility>

namespace win {

template <typename T>
ComputeGraph<T>::ComputeGraph(const Tensor<T>& output) : output_(output.impl()) {
    using Impl = detail::TensorImpl<T>;
    std::unordered_set<const Impl*> seen;
    // Iterative DFS producing a post-order over impls that carry a grad_fn.
    std::vector<std::pair<Impl*, std::size_t>> stack;
    auto visit = [&](const std::shared_ptr<Impl>& impl) {
        if (!impl || seen.count(impl.get())) return;
        seen.insert(impl.get());
        if (impl->grad_fn) {
            stack.emplace_back(impl.get(), 0);
        } else if (impl->requires_grad) {
            leaves_.push_back(impl);
        }
    };
    visit(output_);
    while (!stack.empty()) {
        auto& [impl, next] = stack.back();
        const auto& inputs = impl->grad_fn->inputs;
        if (next < inputs.size()) {
            const auto& child = inputs[next++];
            visit(child);
        } else {
            order_.push_back(impl);
            stack.pop_back();
        }
    }
}

template <typename T>
std::vector<std::string> ComputeGraph<T>::op_names() const {
    std::vector<std::string> names;
    names.reserve(order_.size());
    for (auto* impl : order_) names.push_back(impl->grad_fn->op);
    return names;
}

template <typename T>
std::vector<Tensor<T>> ComputeGraph<T>::leaves() const {
    std::vector<Tensor<T>> out;
    for (const auto& l : leaves_) out.emplace_back(l);
    return out;
}

template <typename T>
void ComputeGraph<T>::backward(const Tensor<T>& seed) {
    if (seed.shape() != output_->shape) {
        throw ShapeError("backward seed shape " + shape_str(seed.shape()) +
                         " does not match output shape " + shape_str(output_->shape));
    }
    backward(seed.values());
}

template <typename T>
void ComputeGraph<T>::backward(std::span<const T> seed) {
    if (seed.size() != output_->data.size()) {
        throw ShapeError("backward seed has " + std::to_string(seed.size()) +
                         " values, output has " + std::to_string(output_->data.size()));
    }
    for (auto* impl : order_) impl->grad.assign(impl->data.size(), T(0));
    auto g = output_->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        (*it)->grad_fn->backward(**it);
    }
}

template <typename T>
void ComputeGraph<T>::zero_leaf_grads() {
    for (const auto& l : leaves_) l->grad.assign(l->data.size(), T(0));
}

template class ComputeGraph<float>;
template class ComputeGraph<double>;

}  // namespace win
