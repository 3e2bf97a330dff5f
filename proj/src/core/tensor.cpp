#include "win/tensor.hpp"

#include <cmath>
#include <sstream>

namespace win {

namespace {
thread_local bool g_grad_mode = true;
}

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

bool grad_mode_enabled() { return g_grad_mode; }

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::string op,
                      std::vector<std::shared_ptr<TensorImpl<T>>> inputs,
                      std::function<void(const TensorImpl<T>&)> backward) {
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    if (g_grad_mode) {
        bool any = false;
        for (const auto& in : inputs) any = any || (in && in->needs_grad());
        if (any) {
            auto node = std::make_shared<Node<T>>();
            node->op = std::move(op);
            node->inputs = std::move(inputs);
            node->backward = std::move(backward);
            impl->grad_fn = std::move(node);
        }
    }
    return Tensor<T>(std::move(impl));
}

template Tensor<float> make_result(Shape, std::vector<float>, std::string,
                                   std::vector<std::shared_ptr<TensorImpl<float>>>,
                                   std::function<void(const TensorImpl<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>, std::string,
                                    std::vector<std::shared_ptr<TensorImpl<double>>>,
                                    std::function<void(const TensorImpl<double>&)>);

}  // namespace detail

NoGradGuard::NoGradGuard() : previous_(g_grad_mode) { g_grad_mode = false; }
NoGradGuard::~NoGradGuard() { g_grad_mode = previous_; }

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : impl_(std::make_shared<Impl>()) {
    for (auto e : shape) {
        if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
    }
    impl_->data.assign(numel(shape), fill);
    impl_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : impl_(std::make_shared<Impl>()) {
    for (auto e : shape) {
        if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
    }
    if (numel(shape) != values.size()) {
        throw ShapeError("shape " + shape_str(shape) + " holds " + std::to_string(numel(shape)) +
                         " values, got " + std::to_string(values.size()));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::initializer_list<T> values)
    : Tensor(std::move(shape), std::vector<T>(values)) {}

template <typename T>
T Tensor<T>::item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::size_t> index) const {
    if (index.size() != rank()) throw ShapeError("index rank mismatch for " + shape_str(shape()));
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= impl_->shape[axis]) throw ShapeError("index out of range for " + shape_str(shape()));
        flat = flat * impl_->shape[axis] + i;
        ++axis;
    }
    return impl_->data[flat];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
    if (!is_leaf()) throw Error("requires_grad can only be set on leaf tensors");
    impl_->requires_grad = on;
    return *this;
}

template <typename T>
std::vector<T> Tensor<T>::grad() const {
    if (has_grad()) return impl_->grad;
    return std::vector<T>(size(), T(0));
}

template <typename T>
void Tensor<T>::zero_grad() {
    impl_->grad.assign(impl_->data.size(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    return Tensor<T>(impl_->shape, impl_->data);
}

template <typename T>
const std::string& Tensor<T>::op_name() const {
    static const std::string leaf = "leaf";
    return impl_->grad_fn ? impl_->grad_fn->op : leaf;
}

template <typename T>
bool all_finite(const Tensor<T>& x) {
    for (auto v : x.values()) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

template class Tensor<float>;
template class Tensor<double>;
template bool all_finite(const Tensor<float>&);
template bool all_finite(const Tensor<double>&);

}  // namespace win
