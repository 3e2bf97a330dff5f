#pragma once

// Differentiable dense ops. Every op validates shapes, computes its forward
// values eagerly and, when an operand needs a gradient, records a backward
// rule. Channels-last layout throughout: feature maps are [B, H, W, C].

#include <memory>
#include <span>
#include <vector>

#include "win/tensor.hpp"

namespace win {

// Elementwise. Operands must have identical shapes.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> add(const Tensor<T>& a, T scalar);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, T scalar);

/// Batched product [.., m, k] x [.., k, n] -> [.., m, n]. Batch extents must
/// match, or one side must be a plain matrix (broadcast over the batch).
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// x[.., m] * W[m, n] + b[n]. `b` may be an undefined tensor (no bias).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

/// Max-subtracted softmax along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

inline constexpr double kLayerNormEps = 1e-5;

/// Normalises over the last axis, then applies per-channel gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = static_cast<T>(kLayerNormEps));

/// Exact GELU: x * Phi(x).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

/// Depthwise k x k convolution over [B, H, W, C], stride 1, zero padding
/// (k-1)/2. kernel is [k, k, C]; bias [C] is optional (undefined tensor).
template <typename T>
Tensor<T> dwconv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// Axis permutation: out.shape[i] = x.shape[axes[i]].
template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes);

/// out[i] = x[index[i]] (flat offsets). The index is shared, not copied.
template <typename T>
Tensor<T> gather(const Tensor<T>& x, std::shared_ptr<const std::vector<std::size_t>> index,
                 Shape shape);

/// Slice [start, start + length) along `axis`.
template <typename T>
Tensor<T> narrow(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length);

/// Sum of all elements, rank-0 result.
template <typename T>
Tensor<T> sum(const Tensor<T>& x);

/// Mean along `axis`; the axis is removed.
template <typename T>
Tensor<T> mean(const Tensor<T>& x, std::size_t axis);

/// Multiplies slice i of the leading axis by the constant factors[i].
template <typename T>
Tensor<T> scale_slices(const Tensor<T>& x, std::vector<T> factors);

/// Mean cross-entropy of logits [B, K] against integer labels.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

/// Row-major strides for a shape.
std::vector<std::size_t> strides_of(const Shape& shape);

}  // namespace win
