#include "win/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "win/kernels.hpp"

namespace win {

namespace {

template <typename T>
using ImplPtr = std::shared_ptr<detail::TensorImpl<T>>;

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
    if (a != b) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
    }
}

// C[m,n] += A[m,k] * B[k,n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
    const auto& kt = kernels::active<T>();
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        const T* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            if (arow[p] != T(0)) kt.axpy(n, arow[p], b + p * n, crow);
        }
    }
}

// dA[m,k] += dC[m,n] * B[k,n]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const T* dc, const T* b, T* da) {
    const auto& kt = kernels::active<T>();
    for (std::size_t i = 0; i < m; ++i) {
        const T* grow = dc + i * n;
        T* arow = da + i * k;
        for (std::size_t p = 0; p < k; ++p) arow[p] += kt.dot(n, grow, b + p * n);
    }
}

// dB[k,n] += A[m,k]^T * dC[m,n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* dc, T* db) {
    const auto& kt = kernels::active<T>();
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        const T* grow = dc + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            if (arow[p] != T(0)) kt.axpy(n, arow[p], grow, db + p * n);
        }
    }
}

template <typename T>
T normal_cdf(T x) {
    return T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <typename T>
T normal_pdf(T x) {
    return std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * std::numbers::pi_v<T>);
}

struct AxisSplit {
    std::size_t outer, len, inner;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
    AxisSplit s{1, shape[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

}  // namespace

std::vector<std::size_t> strides_of(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
    return strides;
}

// ---------------------------------------------------------------- elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "add");
    std::vector<T> out(a.size());
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    ImplPtr<T> ai = a.impl(), bi = b.impl();
    return detail::make_result<T>(a.shape(), std::move(out), "add", {ai, bi},
                                  [ai, bi](const detail::TensorImpl<T>& o) {
                                      for (const auto& in : {ai, bi}) {
                                          if (!in->needs_grad()) continue;
                                          auto g = in->grad_buffer();
                                          for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                                      }
                                  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "sub");
    std::vector<T> out(a.size());
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    ImplPtr<T> ai = a.impl(), bi = b.impl();
    return detail::make_result<T>(a.shape(), std::move(out), "sub", {ai, bi},
                                  [ai, bi](const detail::TensorImpl<T>& o) {
                                      if (ai->needs_grad()) {
                                          auto g = ai->grad_buffer();
                                          for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                                      }
                                      if (bi->needs_grad()) {
                                          auto g = bi->grad_buffer();
                                          for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
                                      }
                                  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "mul");
    std::vector<T> out(a.size());
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    ImplPtr<T> ai = a.impl(), bi = b.impl();
    return detail::make_result<T>(a.shape(), std::move(out), "mul", {ai, bi},
                                  [ai, bi](const detail::TensorImpl<T>& o) {
                                      if (ai->needs_grad()) {
                                          auto g = ai->grad_buffer();
                                          for (std::size_t i = 0; i < g.size(); ++i)
                                              g[i] += o.grad[i] * bi->data[i];
                                      }
                                      if (bi->needs_grad()) {
                                          auto g = bi->grad_buffer();
                                          for (std::size_t i = 0; i < g.size(); ++i)
                                              g[i] += o.grad[i] * ai->data[i];
                                      }
                                  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, T scalar) {
    std::vector<T> out(a.values().begin(), a.values().end());
    for (auto& v : out) v += scalar;
    ImplPtr<T> ai = a.impl();
    return detail::make_result<T>(a.shape(), std::move(out), "add_scalar", {ai},
                                  [ai](const detail::TensorImpl<T>& o) {
                                      auto g = ai->grad_buffer();
                                      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                                  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, T scalar) {
    std::vector<T> out(a.values().begin(), a.values().end());
    for (auto& v : out) v *= scalar;
    ImplPtr<T> ai = a.impl();
    return detail::make_result<T>(a.shape(), std::move(out), "scale", {ai},
                                  [ai, scalar](const detail::TensorImpl<T>& o) {
                                      auto g = ai->grad_buffer();
                                      for (std::size_t i = 0; i < g.size(); ++i) g[i] += scalar * o.grad[i];
                                  });
}

// --------------------------------------------------------------------- matmul

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() < 2 || b.rank() < 2) {
        throw ShapeError("matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const std::size_t m = a.extent(a.rank() - 2);
    const std::size_t k = a.extent(a.rank() - 1);
    const std::size_t kb = b.extent(b.rank() - 2);
    const std::size_t n = b.extent(b.rank() - 1);
    if (k != kb) {
        throw ShapeError("matmul inner dimension mismatch: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    Shape lead_a(a.shape().begin(), a.shape().end() - 2);
    Shape lead_b(b.shape().begin(), b.shape().end() - 2);
    const std::size_t batch_a = numel(lead_a);
    const std::size_t batch_b = numel(lead_b);
    Shape lead;
    if (lead_a == lead_b) {
        lead = lead_a;
    } else if (batch_b == 1) {
        lead = lead_a;
    } else if (batch_a == 1) {
        lead = lead_b;
    } else {
        throw ShapeError("matmul batch extents not broadcastable: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    const std::size_t batch = std::max(batch_a, batch_b);
    const std::size_t stride_a = batch_a == 1 ? 0 : m * k;
    const std::size_t stride_b = batch_b == 1 ? 0 : k * n;

    std::vector<T> out(batch * m * n, T(0));
    const T* ap = a.values().data();
    const T* bp = b.values().data();
    for (std::size_t t = 0; t < batch; ++t) {
        gemm_nn(m, k, n, ap + t * stride_a, bp + t * stride_b, out.data() + t * m * n);
    }
    Shape shape = lead;
    shape.push_back(m);
    shape.push_back(n);
    ImplPtr<T> ai = a.impl(), bi = b.impl();
    return detail::make_result<T>(
        std::move(shape), std::move(out), "matmul", {ai, bi},
        [ai, bi, batch, m, k, n, stride_a, stride_b](const detail::TensorImpl<T>& o) {
            const T* g = o.grad.data();
            if (ai->needs_grad()) {
                T* ga = ai->grad_buffer().data();
                for (std::size_t t = 0; t < batch; ++t)
                    gemm_nt(m, k, n, g + t * m * n, bi->data.data() + t * stride_b, ga + t * stride_a);
            }
            if (bi->needs_grad()) {
                T* gb = bi->grad_buffer().data();
                for (std::size_t t = 0; t < batch; ++t)
                    gemm_tn(m, k, n, ai->data.data() + t * stride_a, g + t * m * n, gb + t * stride_b);
            }
        });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    if (weight.rank() != 2 || x.rank() < 1 || x.extent(x.rank() - 1) != weight.extent(0)) {
        throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(weight.shape()));
    }
    const std::size_t m = weight.extent(0);
    const std::size_t n = weight.extent(1);
    if (bias.defined() && bias.shape() != Shape{n}) {
        throw ShapeError("linear: bias " + shape_str(bias.shape()) + " does not match weight " +
                         shape_str(weight.shape()));
    }
    const std::size_t rows = x.size() / m;
    std::vector<T> out(rows * n, T(0));
    if (bias.defined()) {
        auto bv = bias.values();
        for (std::size_t r = 0; r < rows; ++r) std::copy(bv.begin(), bv.end(), out.begin() + r * n);
    }
    gemm_nn(rows, m, n, x.values().data(), weight.values().data(), out.data());
    Shape shape = x.shape();
    shape.back() = n;
    ImplPtr<T> xi = x.impl(), wi = weight.impl();
    ImplPtr<T> bi = bias.defined() ? bias.impl() : nullptr;
    return detail::make_result<T>(std::move(shape), std::move(out), "linear", {xi, wi, bi},
                                  [xi, wi, bi, rows, m, n](const detail::TensorImpl<T>& o) {
                                      const T* g = o.grad.data();
                                      if (xi->needs_grad())
                                          gemm_nt(rows, m, n, g, wi->data.data(), xi->grad_buffer().data());
                                      if (wi->needs_grad())
                                          gemm_tn(rows, m, n, xi->data.data(), g, wi->grad_buffer().data());
                                      if (bi && bi->needs_grad()) {
                                          auto gb = bi->grad_buffer();
                                          for (std::size_t r = 0; r < rows; ++r)
                                              for (std::size_t j = 0; j < n; ++j) gb[j] += g[r * n + j];
                                      }
                                  });
}

// -------------------------------------------------------------------- softmax

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
    if (axis >= x.rank()) {
        throw ShapeError("softmax axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
    }
    const auto s = split_axis(x.shape(), axis);
    std::vector<T> out(x.size());
    auto in = x.values();
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.len * s.inner + i;
            T mx = in[base];
            for (std::size_t j = 1; j < s.len; ++j) mx = std::max(mx, in[base + j * s.inner]);
            T total = 0;
            for (std::size_t j = 0; j < s.len; ++j) {
                const T e = std::exp(in[base + j * s.inner] - mx);
                out[base + j * s.inner] = e;
                total += e;
            }
            const T inv = T(1) / total;
            for (std::size_t j = 0; j < s.len; ++j) out[base + j * s.inner] *= inv;
        }
    }
    ImplPtr<T> xi = x.impl();
    return detail::make_result<T>(x.shape(), std::move(out), "softmax", {xi},
                                  [xi, s](const detail::TensorImpl<T>& o) {
                                      auto g = xi->grad_buffer();
                                      for (std::size_t a = 0; a < s.outer; ++a) {
                                          for (std::size_t i = 0; i < s.inner; ++i) {
                                              const std::size_t base = a * s.len * s.inner + i;
                                              T dotp = 0;
                                              for (std::size_t j = 0; j < s.len; ++j) {
                                                  const std::size_t idx = base + j * s.inner;
                                                  dotp += o.grad[idx] * o.data[idx];
                                              }
                                              for (std::size_t j = 0; j < s.len; ++j) {
                                                  const std::size_t idx = base + j * s.inner;
                                                  g[idx] += o.data[idx] * (o.grad[idx] - dotp);
                                              }
                                          }
                                      }
                                  });
}

// ----------------------------------------------------------------- layer_norm

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    if (x.rank() < 1) throw ShapeError("layer_norm on rank-0 tensor");
    const std::size_t c = x.extent(x.rank() - 1);
    if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
        throw ShapeError("layer_norm: input " + shape_str(x.shape()) + " has " + std::to_string(c) +
                         " channels, gamma " + shape_str(gamma.shape()) + ", beta " +
                         shape_str(beta.shape()));
    }
    const std::size_t rows = x.size() / c;
    auto in = x.values();
    auto gv = gamma.values();
    auto bv = beta.values();
    auto xhat = std::make_shared<std::vector<T>>(x.size());
    auto rstd = std::make_shared<std::vector<T>>(rows);
    std::vector<T> out(x.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = in.data() + r * c;
        T mu = 0;
        for (std::size_t j = 0; j < c; ++j) mu += row[j];
        mu /= T(c);
        T var = 0;
        for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= T(c);
        const T rs = T(1) / std::sqrt(var + eps);
        (*rstd)[r] = rs;
        for (std::size_t j = 0; j < c; ++j) {
            const T h = (row[j] - mu) * rs;
            (*xhat)[r * c + j] = h;
            out[r * c + j] = h * gv[j] + bv[j];
        }
    }
    ImplPtr<T> xi = x.impl(), gi = gamma.impl(), bi = beta.impl();
    return detail::make_result<T>(
        x.shape(), std::move(out), "layer_norm", {xi, gi, bi},
        [xi, gi, bi, xhat, rstd, rows, c](const detail::TensorImpl<T>& o) {
            const T* g = o.grad.data();
            if (gi->needs_grad()) {
                auto gg = gi->grad_buffer();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < c; ++j) gg[j] += g[r * c + j] * (*xhat)[r * c + j];
            }
            if (bi->needs_grad()) {
                auto gb = bi->grad_buffer();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < c; ++j) gb[j] += g[r * c + j];
            }
            if (xi->needs_grad()) {
                auto gx = xi->grad_buffer();
                std::vector<T> dxhat(c);
                for (std::size_t r = 0; r < rows; ++r) {
                    T mean_d = 0, mean_dx = 0;
                    for (std::size_t j = 0; j < c; ++j) {
                        dxhat[j] = g[r * c + j] * gi->data[j];
                        mean_d += dxhat[j];
                        mean_dx += dxhat[j] * (*xhat)[r * c + j];
                    }
                    mean_d /= T(c);
                    mean_dx /= T(c);
                    const T rs = (*rstd)[r];
                    for (std::size_t j = 0; j < c; ++j)
                        gx[r * c + j] += rs * (dxhat[j] - mean_d - (*xhat)[r * c + j] * mean_dx);
                }
            }
        });
}

// ----------------------------------------------------------------------- gelu

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    std::vector<T> out(x.size());
    auto in = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * normal_cdf(in[i]);
    ImplPtr<T> xi = x.impl();
    return detail::make_result<T>(x.shape(), std::move(out), "gelu", {xi},
                                  [xi](const detail::TensorImpl<T>& o) {
                                      auto g = xi->grad_buffer();
                                      for (std::size_t i = 0; i < g.size(); ++i) {
                                          const T v = xi->data[i];
                                          g[i] += o.grad[i] * (normal_cdf(v) + v * normal_pdf(v));
                                      }
                                  });
}

// ------------------------------------------------------------------- dwconv2d

template <typename T>
Tensor<T> dwconv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias) {
    if (x.rank() != 4) throw ShapeError("dwconv2d expects [B, H, W, C], got " + shape_str(x.shape()));
    const std::size_t B = x.extent(0), H = x.extent(1), W = x.extent(2), C = x.extent(3);
    if (kernel.rank() != 3 || kernel.extent(0) != kernel.extent(1) || kernel.extent(2) != C) {
        throw ShapeError("dwconv2d kernel " + shape_str(kernel.shape()) + " incompatible with input " +
                         shape_str(x.shape()));
    }
    const std::size_t k = kernel.extent(0);
    if (k % 2 == 0) throw ShapeError("dwconv2d kernel size must be odd, got " + std::to_string(k));
    if (bias.defined() && bias.shape() != Shape{C}) {
        throw ShapeError("dwconv2d bias " + shape_str(bias.shape()) + " does not match " +
                         std::to_string(C) + " channels");
    }
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
    const auto& kt = kernels::active<T>();

    std::vector<T> out(x.size(), T(0));
    const T* in = x.values().data();
    const T* kw = kernel.values().data();
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t y = 0; y < H; ++y) {
            for (std::size_t xx = 0; xx < W; ++xx) {
                T* dst = out.data() + ((b * H + y) * W + xx) * C;
                if (bias.defined()) std::copy(bias.values().begin(), bias.values().end(), dst);
                for (std::size_t ky = 0; ky < k; ++ky) {
                    const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - pad;
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) continue;
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx + kx) - pad;
                        if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W)) continue;
                        const T* src = in + ((b * H + sy) * W + sx) * C;
                        kt.madd(C, kw + (ky * k + kx) * C, src, dst);
                    }
                }
            }
        }
    }
    ImplPtr<T> xi = x.impl(), ki = kernel.impl();
    ImplPtr<T> bi = bias.defined() ? bias.impl() : nullptr;
    return detail::make_result<T>(
        x.shape(), std::move(out), "dwconv2d", {xi, ki, bi},
        [xi, ki, bi, B, H, W, C, k, pad](const detail::TensorImpl<T>& o) {
            const auto& kt = kernels::active<T>();
            const T* g = o.grad.data();
            T* gx = xi->needs_grad() ? xi->grad_buffer().data() : nullptr;
            T* gk = ki->needs_grad() ? ki->grad_buffer().data() : nullptr;
            const T* in = xi->data.data();
            const T* kw = ki->data.data();
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t y = 0; y < H; ++y) {
                    for (std::size_t xx = 0; xx < W; ++xx) {
                        const T* gout = g + ((b * H + y) * W + xx) * C;
                        for (std::size_t ky = 0; ky < k; ++ky) {
                            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - pad;
                            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) continue;
                            for (std::size_t kx = 0; kx < k; ++kx) {
                                const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx + kx) - pad;
                                if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W)) continue;
                                const std::size_t src = ((b * H + sy) * W + sx) * C;
                                const std::size_t tap = (ky * k + kx) * C;
                                if (gx) kt.madd(C, kw + tap, gout, gx + src);
                                if (gk) kt.madd(C, in + src, gout, gk + tap);
                            }
                        }
                    }
                }
            }
            if (bi && bi->needs_grad()) {
                auto gb = bi->grad_buffer();
                const std::size_t pixels = B * H * W;
                for (std::size_t p = 0; p < pixels; ++p)
                    for (std::size_t c = 0; c < C; ++c) gb[c] += g[p * C + c];
            }
        });
}

// ------------------------------------------------------------ data movement

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (numel(shape) != x.size()) {
        throw ShapeError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape) +
                         " changes the element count");
    }
    std::vector<T> out(x.values().begin(), x.values().end());
    ImplPtr<T> xi = x.impl();
    return detail::make_result<T>(std::move(shape), std::move(out), "reshape", {xi},
                                  [xi](const detail::TensorImpl<T>& o) {
                                      auto g = xi->grad_buffer();
                                      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                                  });
}

template <typename T>
Tensor<T> gather(const Tensor<T>& x, std::shared_ptr<const std::vector<std::size_t>> index, Shape shape) {
    if (numel(shape) != index->size()) {
        throw ShapeError("gather: index of " + std::to_string(index->size()) + " entries for shape " +
                         shape_str(shape));
    }
    std::vector<T> out(index->size());
    auto in = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const std::size_t src = (*index)[i];
        if (src >= in.size()) throw ShapeError("gather: index out of range for " + shape_str(x.shape()));
        out[i] = in[src];
    }
    ImplPtr<T> xi = x.impl();
    return detail::make_result<T>(std::move(shape), std::move(out), "gather", {xi},
                                  [xi, index](const detail::TensorImpl<T>& o) {
                                      auto g = xi->grad_buffer();
                                      for (std::size_t i = 0; i < index->size(); ++i) g[(*index)[i]] += o.grad[i];
                                  });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes) {
    const std::size_t r = x.rank();
    if (axes.size() != r) throw ShapeError("permute: axes rank mismatch for " + shape_str(x.shape()));
    std::vector<bool> used(r, false);
    Shape shape(r);
    for (std::size_t i = 0; i < r; ++i) {
        if (axes[i] >= r || used[axes[i]]) throw ShapeError("permute: invalid axes for " + shape_str(x.shape()));
        used[axes[i]] = true;
        shape[i] = x.extent(axes[i]);
    }
    const auto in_strides = strides_of(x.shape());
    auto index = std::make_shared<std::vector<std::size_t>>(x.size());
    std::vector<std::size_t> counter(r, 0);
    for (std::size_t flat = 0; flat < x.size(); ++flat) {
        std::size_t src = 0;
        for (std::size_t i = 0; i < r; ++i) src += counter[i] * in_strides[axes[i]];
        (*index)[flat] = src;
        for (std::size_t i = r; i-- > 0;) {
            if (++counter[i] < shape[i]) break;
            counter[i] = 0;
        }
    }
    return gather(x, std::shared_ptr<const std::vector<std::size_t>>(std::move(index)), std::move(shape));
}

template <typename T>
Tensor<T> narrow(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
    if (axis >= x.rank() || length == 0 || start + length > x.extent(axis)) {
        throw ShapeError("narrow(axis " + std::to_string(axis) + ", " + std::to_string(start) + ", " +
                         std::to_string(length) + ") out of range for " + shape_str(x.shape()));
    }
    const auto s = split_axis(x.shape(), axis);
    auto index = std::make_shared<std::vector<std::size_t>>();
    index->reserve(s.outer * length * s.inner);
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t j = start; j < start + length; ++j)
            for (std::size_t i = 0; i < s.inner; ++i) index->push_back((o * s.len + j) * s.inner + i);
    Shape shape = x.shape();
    shape[axis] = length;
    return gather(x, std::shared_ptr<const std::vector<std::size_t>>(std::move(index)), std::move(shape));
}

// ----------------------------------------------------------------- reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T total = 0;
    for (auto v : x.values()) total += v;
    ImplPtr<T> xi = x.impl();
    return detail::make_result<T>(Shape{}, std::vector<T>{total}, "sum", {xi},
                                  [xi](const detail::TensorImpl<T>& o) {
                                      auto g = xi->grad_buffer();
                                      for (auto& v : g) v += o.grad[0];
                                  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, std::size_t axis) {
    if (axis >= x.rank()) {
        throw ShapeError("mean axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
    }
    const auto s = split_axis(x.shape(), axis);
    std::vector<T> out(s.outer * s.inner, T(0));
    auto in = x.values();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t j = 0; j < s.len; ++j)
            for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += in[(o * s.len + j) * s.inner + i];
    const T inv = T(1) / T(s.len);
    for (auto& v : out) v *= inv;
    Shape shape = x.shape();
    shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
    ImplPtr<T> xi = x.impl();
    return detail::make_result<T>(std::move(shape), std::move(out), "mean", {xi},
                                  [xi, s, inv](const detail::TensorImpl<T>& o) {
                                      auto g = xi->grad_buffer();
                                      for (std::size_t a = 0; a < s.outer; ++a)
                                          for (std::size_t j = 0; j < s.len; ++j)
                                              for (std::size_t i = 0; i < s.inner; ++i)
                                                  g[(a * s.len + j) * s.inner + i] += o.grad[a * s.inner + i] * inv;
                                  });
}

template <typename T>
Tensor<T> scale_slices(const Tensor<T>& x, std::vector<T> factors) {
    if (x.rank() < 1 || factors.size() != x.extent(0)) {
        throw ShapeError("scale_slices: " + std::to_string(factors.size()) + " factors for " +
                         shape_str(x.shape()));
    }
    const std::size_t slice = x.size() / x.extent(0);
    std::vector<T> out(x.values().begin(), x.values().end());
    for (std::size_t s = 0; s < factors.size(); ++s)
        for (std::size_t i = 0; i < slice; ++i) out[s * slice + i] *= factors[s];
    ImplPtr<T> xi = x.impl();
    return detail::make_result<T>(x.shape(), std::move(out), "scale_slices", {xi},
                                  [xi, factors = std::move(factors), slice](const detail::TensorImpl<T>& o) {
                                      auto g = xi->grad_buffer();
                                      for (std::size_t s = 0; s < factors.size(); ++s)
                                          for (std::size_t i = 0; i < slice; ++i)
                                              g[s * slice + i] += factors[s] * o.grad[s * slice + i];
                                  });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
    if (logits.rank() != 2 || logits.extent(0) != labels.size()) {
        throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
    }
    const std::size_t B = logits.extent(0), K = logits.extent(1);
    auto probs = std::make_shared<std::vector<T>>(B * K);
    auto lab = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
    auto in = logits.values();
    T loss = 0;
    for (std::size_t b = 0; b < B; ++b) {
        const int y = labels[b];
        if (y < 0 || static_cast<std::size_t>(y) >= K) {
            throw ShapeError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                             std::to_string(K) + ")");
        }
        const T* row = in.data() + b * K;
        const T mx = *std::max_element(row, row + K);
        T total = 0;
        for (std::size_t j = 0; j < K; ++j) total += std::exp(row[j] - mx);
        const T lse = mx + std::log(total);
        for (std::size_t j = 0; j < K; ++j) (*probs)[b * K + j] = std::exp(row[j] - lse);
        loss += lse - row[y];
    }
    loss /= T(B);
    ImplPtr<T> li = logits.impl();
    return detail::make_result<T>(Shape{}, std::vector<T>{loss}, "cross_entropy", {li},
                                  [li, probs, lab, B, K](const detail::TensorImpl<T>& o) {
                                      auto g = li->grad_buffer();
                                      const T scale = o.grad[0] / T(B);
                                      for (std::size_t b = 0; b < B; ++b)
                                          for (std::size_t j = 0; j < K; ++j) {
                                              const T target = static_cast<int>(j) == (*lab)[b] ? T(1) : T(0);
                                              g[b * K + j] += scale * ((*probs)[b * K + j] - target);
                                          }
                                  });
}

// ------------------------------------------------------------- instantiation

#define WIN_INSTANTIATE_OPS(T)                                                                        \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                       \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                       \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                       \
    template Tensor<T> add(const Tensor<T>&, T);                                                      \
    template Tensor<T> mul(const Tensor<T>&, T);                                                      \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                    \
    template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                  \
    template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                        \
    template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);           \
    template Tensor<T> gelu(const Tensor<T>&);                                                        \
    template Tensor<T> dwconv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                              \
    template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);                    \
    template Tensor<T> gather(const Tensor<T>&, std::shared_ptr<const std::vector<std::size_t>>, Shape); \
    template Tensor<T> narrow(const Tensor<T>&, std::size_t, std::size_t, std::size_t);               \
    template Tensor<T> sum(const Tensor<T>&);                                                         \
    template Tensor<T> mean(const Tensor<T>&, std::size_t);                                           \
    template Tensor<T> scale_slices(const Tensor<T>&, std::vector<T>);                                \
    template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>);

WIN_INSTANTIATE_OPS(float)
WIN_INSTANTIATE_OPS(double)

#undef WIN_INSTANTIATE_OPS

}  // namespace win
