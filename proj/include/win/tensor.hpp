#pragma once

// Dense row-major tensor with an attached reverse-mode autodiff node.
//
// A Tensor is a cheap handle: copies share storage. Forward ops produce new
// tensors; only leaves (parameters, inputs) are mutated in place, and only
// between forward passes.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "win/errors.hpp"

namespace win {

using Shape = std::vector<std::size_t>;

/// Number of elements described by a shape (1 for rank 0).
std::size_t numel(const Shape& shape);

/// "[2, 3, 4]"
std::string shape_str(const Shape& shape);

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::f32; }
template <>
constexpr DType dtype_of<double>() { return DType::f64; }

template <typename T>
class Tensor;

namespace detail {

template <typename T>
struct TensorImpl;

template <typename T>
struct Node {
    std::string op;
    std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
    // Reads out.grad and accumulates cotangents into the inputs.
    std::function<void(const TensorImpl<T>& out)> backward;
};

template <typename T>
struct TensorImpl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until a cotangent arrives
    bool requires_grad = false;
    std::shared_ptr<Node<T>> grad_fn;

    bool needs_grad() const { return requires_grad || grad_fn != nullptr; }

    /// Gradient buffer, zero-initialised on first use.
    std::span<T> grad_buffer() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
        return grad;
    }
};

bool grad_mode_enabled();

/// Wraps freshly computed values into a tensor and, when any input needs a
/// gradient and grad mode is on, records the op in the graph.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::string op,
                      std::vector<std::shared_ptr<TensorImpl<T>>> inputs,
                      std::function<void(const TensorImpl<T>&)> backward);

}  // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

template <typename T>
class Tensor {
public:
    using value_type = T;
    using Impl = detail::TensorImpl<T>;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0));
    Tensor(Shape shape, std::vector<T> values);
    Tensor(Shape shape, std::initializer_list<T> values);
    explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

    static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t extent(std::size_t axis) const { return impl_->shape.at(axis); }
    std::size_t size() const { return impl_->data.size(); }
    static constexpr DType dtype() { return dtype_of<T>(); }

    std::span<const T> values() const { return impl_->data; }
    /// In-place access; only meaningful on leaves between forward passes.
    std::span<T> mutable_values() { return impl_->data; }
    T operator[](std::size_t flat) const { return impl_->data[flat]; }
    T item() const;
    T at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool on = true);
    bool is_leaf() const { return impl_->grad_fn == nullptr; }
    bool has_grad() const { return impl_->grad.size() == impl_->data.size(); }
    /// Accumulated gradient; zeros if nothing has been accumulated yet.
    std::vector<T> grad() const;
    std::span<T> mutable_grad() { return impl_->grad_buffer(); }
    void zero_grad();

    /// Same values, no graph history, fresh storage.
    Tensor detach() const;
    Tensor clone() const { return detach(); }

    const std::shared_ptr<Impl>& impl() const { return impl_; }
    const std::string& op_name() const;

private:
    std::shared_ptr<Impl> impl_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

/// Converts values between precisions (no graph).
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& x) {
    std::vector<To> out(x.size());
    auto in = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<To>(in[i]);
    return Tensor<To>(x.shape(), std::move(out));
}

/// True when every value is finite.
template <typename T>
bool all_finite(const Tensor<T>& x);

}  // namespace win
