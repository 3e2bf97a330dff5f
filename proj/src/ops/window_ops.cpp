#include "win/window_ops.hpp"

#include <cmath>

#include "win/ops.hpp"

namespace win {

namespace {

using Index = std::shared_ptr<const std::vector<std::size_t>>;

template <typename T>
using ImplPtr = std::shared_ptr<detail::TensorImpl<T>>;

void require_map(const Shape& s, const char* op) {
    if (s.size() != 4) throw ShapeError(std::string(op) + " expects a [B, H, W, C] map, got " + shape_str(s));
}

// Flat offsets of window_partition's output, in output order.
Index partition_index(const WindowGrid& g) {
    auto idx = std::make_shared<std::vector<std::size_t>>();
    const std::size_t M = g.window, C = g.channels, H = g.height(), W = g.width();
    idx->reserve(g.batch * H * W * C);
    for (std::size_t b = 0; b < g.batch; ++b)
        for (std::size_t wy = 0; wy < g.windows_h; ++wy)
            for (std::size_t wx = 0; wx < g.windows_w; ++wx)
                for (std::size_t ty = 0; ty < M; ++ty)
                    for (std::size_t tx = 0; tx < M; ++tx) {
                        const std::size_t y = wy * M + ty, x = wx * M + tx;
                        const std::size_t base = ((b * H + y) * W + x) * C;
                        for (std::size_t c = 0; c < C; ++c) idx->push_back(base + c);
                    }
    return idx;
}

}  // namespace

WindowGrid WindowGrid::of(std::size_t batch, std::size_t height, std::size_t width, std::size_t window,
                          std::size_t channels) {
    if (window == 0 || height % window != 0 || width % window != 0) {
        throw GeometryError("feature map " + std::to_string(height) + "x" + std::to_string(width) +
                            " is not divisible into " + std::to_string(window) + "x" + std::to_string(window) +
                            " windows");
    }
    return WindowGrid{batch, height / window, width / window, window, channels};
}

// --------------------------------------------------------- patch embed/merge

template <typename T>
Tensor<T> patch_embed(const Tensor<T>& image, const Tensor<T>& proj_weight, const Tensor<T>& proj_bias,
                      const Tensor<T>& norm_gamma, const Tensor<T>& norm_beta) {
    require_map(image.shape(), "patch_embed");
    const std::size_t B = image.extent(0), H = image.extent(1), W = image.extent(2);
    if (image.extent(3) != kImageChannels) {
        throw ShapeError("patch_embed expects " + std::to_string(kImageChannels) + " image channels, got " +
                         shape_str(image.shape()));
    }
    if (H % kPatchSize != 0 || W % kPatchSize != 0) {
        throw GeometryError("image " + std::to_string(H) + "x" + std::to_string(W) + " is not divisible into " +
                            std::to_string(kPatchSize) + "x" + std::to_string(kPatchSize) + " patches");
    }
    const std::size_t h = H / kPatchSize, w = W / kPatchSize;
    auto idx = std::make_shared<std::vector<std::size_t>>();
    idx->reserve(image.size());
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t py = 0; py < h; ++py)
            for (std::size_t px = 0; px < w; ++px)
                for (std::size_t dy = 0; dy < kPatchSize; ++dy)
                    for (std::size_t dx = 0; dx < kPatchSize; ++dx) {
                        const std::size_t y = py * kPatchSize + dy, x = px * kPatchSize + dx;
                        for (std::size_t c = 0; c < kImageChannels; ++c)
                            idx->push_back(((b * H + y) * W + x) * kImageChannels + c);
                    }
    auto patches = gather(image, Index(std::move(idx)), Shape{B, h, w, kPatchDim});
    return layer_norm(linear(patches, proj_weight, proj_bias), norm_gamma, norm_beta);
}

template <typename T>
Tensor<T> patch_merge(const Tensor<T>& x, const Tensor<T>& norm_gamma, const Tensor<T>& norm_beta,
                      const Tensor<T>& reduction) {
    require_map(x.shape(), "patch_merge");
    const std::size_t B = x.extent(0), H = x.extent(1), W = x.extent(2), D = x.extent(3);
    if (H % 2 != 0 || W % 2 != 0) {
        throw GeometryError("patch_merge needs even extents, got " + std::to_string(H) + "x" + std::to_string(W));
    }
    const std::size_t h = H / 2, w = W / 2;
    static constexpr std::size_t kOrder[4][2] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
    auto idx = std::make_shared<std::vector<std::size_t>>();
    idx->reserve(x.size());
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx)
                for (const auto& off : kOrder) {
                    const std::size_t base = ((b * H + 2 * y + off[0]) * W + 2 * xx + off[1]) * D;
                    for (std::size_t c = 0; c < D; ++c) idx->push_back(base + c);
                }
    auto cat = gather(x, Index(std::move(idx)), Shape{B, h, w, 4 * D});
    return linear(layer_norm(cat, norm_gamma, norm_beta), reduction, Tensor<T>());
}

// ------------------------------------------------------------------ windows

template <typename T>
std::pair<Tensor<T>, WindowGrid> window_partition(const Tensor<T>& x, std::size_t window) {
    require_map(x.shape(), "window_partition");
    auto grid = WindowGrid::of(x.extent(0), x.extent(1), x.extent(2), window, x.extent(3));
    Shape shape{grid.batch * grid.windows_per_image(), grid.tokens_per_window(), grid.channels};
    return {gather(x, partition_index(grid), std::move(shape)), grid};
}

template <typename T>
Tensor<T> window_reverse(const Tensor<T>& windows, const WindowGrid& grid) {
    const Shape expected{grid.batch * grid.windows_per_image(), grid.tokens_per_window(), grid.channels};
    if (windows.shape() != expected) {
        throw ShapeError("window_reverse: windows " + shape_str(windows.shape()) + " inconsistent with grid " +
                         shape_str(expected));
    }
    auto forward = partition_index(grid);
    auto inverse = std::make_shared<std::vector<std::size_t>>(forward->size());
    for (std::size_t i = 0; i < forward->size(); ++i) (*inverse)[(*forward)[i]] = i;
    return gather(windows, Index(std::move(inverse)),
                  Shape{grid.batch, grid.height(), grid.width(), grid.channels});
}

// ------------------------------------------------ relative position encoding

RelativePositionIndex relative_position_index(std::size_t window) {
    if (window == 0) throw GeometryError("window size must be positive");
    const std::size_t M = window, N = M * M, span = 2 * M - 1;
    RelativePositionIndex rpi{M, std::vector<std::uint32_t>(N * N)};
    for (std::size_t i = 0; i < N; ++i) {
        const auto ri = static_cast<std::ptrdiff_t>(i / M), ci = static_cast<std::ptrdiff_t>(i % M);
        for (std::size_t j = 0; j < N; ++j) {
            const auto rj = static_cast<std::ptrdiff_t>(j / M), cj = static_cast<std::ptrdiff_t>(j % M);
            const auto dr = static_cast<std::size_t>(ri - rj + static_cast<std::ptrdiff_t>(M) - 1);
            const auto dc = static_cast<std::size_t>(ci - cj + static_cast<std::ptrdiff_t>(M) - 1);
            rpi.index[i * N + j] = static_cast<std::uint32_t>(dr * span + dc);
        }
    }
    return rpi;
}

template <typename T>
Tensor<T> relative_position_bias(const Tensor<T>& table, const RelativePositionIndex& index) {
    if (table.rank() != 2 || table.extent(0) != index.table_rows()) {
        throw ShapeError("relative position table " + shape_str(table.shape()) + " needs " +
                         std::to_string(index.table_rows()) + " rows");
    }
    const std::size_t heads = table.extent(1), N = index.window * index.window;
    auto idx = std::make_shared<std::vector<std::size_t>>(heads * N * N);
    for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t p = 0; p < N * N; ++p) (*idx)[h * N * N + p] = index.index[p] * heads + h;
    return gather(table, Index(std::move(idx)), Shape{heads, N, N});
}

template <typename T>
Tensor<T> add_relative_position_bias(const Tensor<T>& logits, const Tensor<T>& table,
                                     const RelativePositionIndex& index) {
    const std::size_t N = index.window * index.window;
    if (logits.rank() != 4 || logits.extent(2) != N || logits.extent(3) != N || table.rank() != 2 ||
        table.extent(0) != index.table_rows() || table.extent(1) != logits.extent(1)) {
        throw ShapeError("relative position bias: logits " + shape_str(logits.shape()) + ", table " +
                         shape_str(table.shape()) + ", window " + std::to_string(index.window));
    }
    const std::size_t groups = logits.extent(0), heads = logits.extent(1);
    std::vector<T> out(logits.values().begin(), logits.values().end());
    auto tv = table.values();
    for (std::size_t g = 0; g < groups; ++g)
        for (std::size_t h = 0; h < heads; ++h) {
            T* dst = out.data() + (g * heads + h) * N * N;
            for (std::size_t p = 0; p < N * N; ++p) dst[p] += tv[index.index[p] * heads + h];
        }
    ImplPtr<T> li = logits.impl(), ti = table.impl();
    auto rows = std::make_shared<std::vector<std::uint32_t>>(index.index);
    return detail::make_result<T>(logits.shape(), std::move(out), "relative_position_bias", {li, ti},
                                  [li, ti, rows, groups, heads, N](const detail::TensorImpl<T>& o) {
                                      if (li->needs_grad()) {
                                          auto g = li->grad_buffer();
                                          for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                                      }
                                      if (ti->needs_grad()) {
                                          auto gt = ti->grad_buffer();
                                          for (std::size_t g = 0; g < groups; ++g)
                                              for (std::size_t h = 0; h < heads; ++h) {
                                                  const T* src = o.grad.data() + (g * heads + h) * N * N;
                                                  for (std::size_t p = 0; p < N * N; ++p)
                                                      gt[(*rows)[p] * heads + h] += src[p];
                                              }
                                      }
                                  });
}

template <typename T>
Tensor<T> add_attention_mask(const Tensor<T>& logits, const Tensor<T>& mask) {
    if (logits.rank() != 4 || mask.rank() != 3 || mask.extent(1) != logits.extent(2) ||
        mask.extent(2) != logits.extent(3) || logits.extent(0) % mask.extent(0) != 0) {
        throw ShapeError("attention mask " + shape_str(mask.shape()) + " does not fit logits " +
                         shape_str(logits.shape()));
    }
    const std::size_t groups = logits.extent(0), heads = logits.extent(1);
    const std::size_t nw = mask.extent(0), NN = mask.extent(1) * mask.extent(2);
    std::vector<T> out(logits.values().begin(), logits.values().end());
    auto mv = mask.values();
    for (std::size_t g = 0; g < groups; ++g) {
        const T* m = mv.data() + (g % nw) * NN;
        for (std::size_t h = 0; h < heads; ++h) {
            T* dst = out.data() + (g * heads + h) * NN;
            for (std::size_t p = 0; p < NN; ++p) dst[p] += m[p];
        }
    }
    ImplPtr<T> li = logits.impl();
    return detail::make_result<T>(logits.shape(), std::move(out), "attention_mask", {li},
                                  [li](const detail::TensorImpl<T>& o) {
                                      if (!li->needs_grad()) return;
                                      auto g = li->grad_buffer();
                                      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                                  });
}

// ---------------------------------------------------------- window attention

template <typename T>
Tensor<T> window_attention(const Tensor<T>& windows, const AttentionParams<T>& params, const BlockConfig& cfg,
                           const Tensor<T>& mask, AttentionTrace<T>* trace) {
    if (windows.rank() != 3) {
        throw ShapeError("window_attention expects [nW*B, N, C], got " + shape_str(windows.shape()));
    }
    const std::size_t groups = windows.extent(0), N = windows.extent(1), C = windows.extent(2);
    const std::size_t M = cfg.window;
    if (C % cfg.heads != 0) {
        throw ShapeError("window_attention: " + std::to_string(C) + " channels not divisible by " +
                         std::to_string(cfg.heads) + " heads");
    }
    if (N != M * M) {
        throw ShapeError("window_attention: " + std::to_string(N) + " tokens per window, expected " +
                         std::to_string(M * M));
    }
    const std::size_t h = cfg.heads, d = C / h;

    auto qkv = linear(windows, params.qkv_weight, params.qkv_bias);  // [G, N, 3C]
    auto q = permute(reshape(narrow(qkv, 2, 0, C), {groups, N, h, d}), {0, 2, 1, 3});
    auto kt = permute(reshape(narrow(qkv, 2, C, C), {groups, N, h, d}), {0, 2, 3, 1});
    auto v_tokens = narrow(qkv, 2, 2 * C, C);
    auto v = permute(reshape(v_tokens, {groups, N, h, d}), {0, 2, 1, 3});

    q = mul(q, static_cast<T>(1.0 / std::sqrt(static_cast<double>(d))));
    auto logits = matmul(q, kt);  // [G, h, N, N]
    if (cfg.pe_mode == PeMode::rpe) {
        logits = add_relative_position_bias(logits, params.rpe_table, relative_position_index(M));
    }
    if (mask.defined()) logits = add_attention_mask(logits, mask);
    auto attn = softmax(logits, 3);
    if (trace) {
        trace->logits = logits;
        trace->probabilities = attn;
    }
    auto out = reshape(permute(matmul(attn, v), {0, 2, 1, 3}), {groups, N, C});
    if (cfg.pe_mode == PeMode::lepe) {
        auto lepe = dwconv2d(reshape(v_tokens, {groups, M, M, C}), params.lepe_kernel, Tensor<T>());
        out = add(out, reshape(lepe, {groups, N, C}));
    }
    return linear(out, params.proj_weight, params.proj_bias);
}

// ---------------------------------------------------------- shifted windows

template <typename T>
Tensor<T> cyclic_shift(const Tensor<T>& x, std::ptrdiff_t shift) {
    require_map(x.shape(), "cyclic_shift");
    const std::size_t B = x.extent(0), H = x.extent(1), W = x.extent(2), C = x.extent(3);
    const auto Hs = static_cast<std::ptrdiff_t>(H), Ws = static_cast<std::ptrdiff_t>(W);
    const auto sy = static_cast<std::size_t>(((shift % Hs) + Hs) % Hs);
    const auto sx = static_cast<std::size_t>(((shift % Ws) + Ws) % Ws);
    auto idx = std::make_shared<std::vector<std::size_t>>();
    idx->reserve(x.size());
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t xx = 0; xx < W; ++xx) {
                const std::size_t base = ((b * H + (y + sy) % H) * W + (xx + sx) % W) * C;
                for (std::size_t c = 0; c < C; ++c) idx->push_back(base + c);
            }
    return gather(x, Index(std::move(idx)), x.shape());
}

std::vector<int> shift_region_labels(const WindowGrid& grid, std::size_t shift) {
    const std::size_t M = grid.window, H = grid.height(), W = grid.width();
    if (shift >= M) throw GeometryError("shift " + std::to_string(shift) + " must be below window " + std::to_string(M));
    // Three bands per axis: [0, H-M), [H-M, H-s), [H-s, H).
    auto band = [M, shift](std::size_t pos, std::size_t extent) {
        if (pos < extent - M) return 0;
        if (pos < extent - shift) return 1;
        return 2;
    };
    std::vector<int> labels;
    labels.reserve(H * W);
    for (std::size_t wy = 0; wy < grid.windows_h; ++wy)
        for (std::size_t wx = 0; wx < grid.windows_w; ++wx)
            for (std::size_t ty = 0; ty < M; ++ty)
                for (std::size_t tx = 0; tx < M; ++tx)
                    labels.push_back(band(wy * M + ty, H) * 3 + band(wx * M + tx, W));
    return labels;
}

template <typename T>
Tensor<T> shift_attention_mask(const WindowGrid& grid, std::size_t shift) {
    const auto labels = shift_region_labels(grid, shift);
    const std::size_t nw = grid.windows_per_image(), N = grid.tokens_per_window();
    std::vector<T> mask(nw * N * N, T(0));
    for (std::size_t w = 0; w < nw; ++w)
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = 0; j < N; ++j)
                if (labels[w * N + i] != labels[w * N + j]) mask[(w * N + i) * N + j] = static_cast<T>(kMaskValue);
    return Tensor<T>(Shape{nw, N, N}, std::move(mask));
}

// --------------------------------------------------------------- mlp / drop

template <typename T>
Tensor<T> mlp(const Tensor<T>& x, const Tensor<T>& fc1_weight, const Tensor<T>& fc1_bias,
              const Tensor<T>& fc2_weight, const Tensor<T>& fc2_bias) {
    return linear(gelu(linear(x, fc1_weight, fc1_bias)), fc2_weight, fc2_bias);
}

template <typename T>
Tensor<T> drop_path(const Tensor<T>& branch, double rate, bool training, std::mt19937_64& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw ConfigError("drop_path rate must lie in [0, 1), got " + std::to_string(rate));
    }
    if (!training || rate == 0.0) return branch;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    std::vector<T> factors(branch.extent(0));
    for (auto& f : factors) f = u(rng) < rate ? T(0) : keep_scale;
    return scale_slices(branch, std::move(factors));
}

#define WIN_INSTANTIATE_WINDOW_OPS(T)                                                                       \
    template Tensor<T> patch_embed(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                   const Tensor<T>&);                                                       \
    template Tensor<T> patch_merge(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
    template std::pair<Tensor<T>, WindowGrid> window_partition(const Tensor<T>&, std::size_t);              \
    template Tensor<T> window_reverse(const Tensor<T>&, const WindowGrid&);                                 \
    template Tensor<T> relative_position_bias(const Tensor<T>&, const RelativePositionIndex&);              \
    template Tensor<T> add_relative_position_bias(const Tensor<T>&, const Tensor<T>&,                       \
                                                  const RelativePositionIndex&);                            \
    template Tensor<T> add_attention_mask(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> window_attention(const Tensor<T>&, const AttentionParams<T>&, const BlockConfig&,    \
                                        const Tensor<T>&, AttentionTrace<T>*);                              \
    template Tensor<T> cyclic_shift(const Tensor<T>&, std::ptrdiff_t);                                      \
    template Tensor<T> shift_attention_mask(const WindowGrid&, std::size_t);                                \
    template Tensor<T> mlp(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,          \
                           const Tensor<T>&);                                                               \
    template Tensor<T> drop_path(const Tensor<T>&, double, bool, std::mt19937_64&);

WIN_INSTANTIATE_WINDOW_OPS(float)
WIN_INSTANTIATE_WINDOW_OPS(double)

#undef WIN_INSTANTIATE_WINDOW_OPS

}  // namespace win
