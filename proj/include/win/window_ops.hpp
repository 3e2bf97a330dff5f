#pragma once

// Architecture-specific operators: tokenisation, windowing, window attention
// with its positional encodings, shifted-window support, MLP, drop path.

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "win/block_config.hpp"
#include "win/tensor.hpp"

namespace win {

inline constexpr std::size_t kPatchSize = 4;
inline constexpr std::size_t kImageChannels = 3;
inline constexpr std::size_t kPatchDim = kPatchSize * kPatchSize * kImageChannels;  // 48

/// Large negative logit separating tokens from different pre-shift regions.
inline constexpr double kMaskValue = -1e9;

/// Layout of a feature map cut into non-overlapping M x M windows.
struct WindowGrid {
    std::size_t batch = 0;
    std::size_t windows_h = 0;
    std::size_t windows_w = 0;
    std::size_t window = 0;
    std::size_t channels = 0;

    std::size_t height() const { return windows_h * window; }
    std::size_t width() const { return windows_w * window; }
    std::size_t windows_per_image() const { return windows_h * windows_w; }
    std::size_t tokens_per_window() const { return window * window; }

    /// Throws GeometryError unless M divides both H and W.
    static WindowGrid of(std::size_t batch, std::size_t height, std::size_t width, std::size_t window,
                         std::size_t channels);
};

/// 4x4 patches of an image [B, H, W, 3] flattened (row-major within the
/// patch, channel fastest), projected to C and layer-normed.
template <typename T>
Tensor<T> patch_embed(const Tensor<T>& image, const Tensor<T>& proj_weight, const Tensor<T>& proj_bias,
                      const Tensor<T>& norm_gamma, const Tensor<T>& norm_beta);

/// Concatenates each 2x2 group in the order (0,0), (0,1), (1,0), (1,1)
/// into 4D channels, layer-norms, and projects to 2D without bias.
template <typename T>
Tensor<T> patch_merge(const Tensor<T>& x, const Tensor<T>& norm_gamma, const Tensor<T>& norm_beta,
                      const Tensor<T>& reduction);

/// [B, H, W, C] -> [B * nW, M*M, C]; windows row-major over the grid.
template <typename T>
std::pair<Tensor<T>, WindowGrid> window_partition(const Tensor<T>& x, std::size_t window);

/// Exact inverse of window_partition.
template <typename T>
Tensor<T> window_reverse(const Tensor<T>& windows, const WindowGrid& grid);

/// Maps each token pair of an M x M window to a row of the (2M-1)^2 bias table.
struct RelativePositionIndex {
    std::size_t window = 0;
    std::vector<std::uint32_t> index;  // [M*M, M*M], row-major

    std::uint32_t at(std::size_t i, std::size_t j) const { return index[i * window * window + j]; }
    std::size_t table_rows() const { return (2 * window - 1) * (2 * window - 1); }
};

RelativePositionIndex relative_position_index(std::size_t window);

/// Dense per-head bias [h, N, N] gathered from a [(2M-1)^2, h] table.
template <typename T>
Tensor<T> relative_position_bias(const Tensor<T>& table, const RelativePositionIndex& index);

/// logits [nWB, h, N, N] + table[index[i][j], head]; differentiable in both.
template <typename T>
Tensor<T> add_relative_position_bias(const Tensor<T>& logits, const Tensor<T>& table,
                                     const RelativePositionIndex& index);

/// logits [B*nW, h, N, N] + mask[w, i, j] with w = window index within its
/// image. The mask is a constant.
template <typename T>
Tensor<T> add_attention_mask(const Tensor<T>& logits, const Tensor<T>& mask);

template <typename T>
struct AttentionParams {
    Tensor<T> qkv_weight;   // [C, 3C]
    Tensor<T> qkv_bias;     // [3C]
    Tensor<T> proj_weight;  // [C, C]
    Tensor<T> proj_bias;    // [C]
    Tensor<T> rpe_table;    // [(2M-1)^2, h] when pe_mode == rpe
    Tensor<T> lepe_kernel;  // [3, 3, C] when pe_mode == lepe
};

/// Optional capture of intermediate attention tensors.
template <typename T>
struct AttentionTrace {
    Tensor<T> logits;         // [nWB, h, N, N] after bias and mask
    Tensor<T> probabilities;  // softmax of logits
};

/// Multi-head self-attention inside each window.
///
/// Q, K, V come from one fused projection; Q is scaled by 1/sqrt(d_head).
/// rpe adds a learned bias indexed by relative offset, lepe adds a 3x3
/// depthwise convolution of V (as an M x M map, zero padded) to A*V before
/// the output projection. `mask` is [nW, N, N] for shifted windows.
template <typename T>
Tensor<T> window_attention(const Tensor<T>& windows, const AttentionParams<T>& params, const BlockConfig& cfg,
                           const Tensor<T>& mask = Tensor<T>(), AttentionTrace<T>* trace = nullptr);

/// Cyclic roll of [B, H, W, C] by (-shift, -shift): out[y][x] = in[y+s][x+s].
/// A negative shift rolls the other way, so cyclic_shift(.., -s) inverts.
template <typename T>
Tensor<T> cyclic_shift(const Tensor<T>& x, std::ptrdiff_t shift);

/// Attention mask [nW, N, N] for a map cyclically shifted by `shift`:
/// kMaskValue between tokens from different pre-shift regions, 0 otherwise.
template <typename T>
Tensor<T> shift_attention_mask(const WindowGrid& grid, std::size_t shift);

/// Region label of every token of the shifted map, in window-partition order
/// ([nW, N]). Tokens may attend to each other iff their labels match.
std::vector<int> shift_region_labels(const WindowGrid& grid, std::size_t shift);

/// linear -> GELU -> linear.
template <typename T>
Tensor<T> mlp(const Tensor<T>& x, const Tensor<T>& fc1_weight, const Tensor<T>& fc1_bias,
              const Tensor<T>& fc2_weight, const Tensor<T>& fc2_bias);

/// Stochastic depth on a residual branch [B, ...]: during training each
/// sample's branch is zeroed with probability `rate`, else scaled by
/// 1/(1-rate). Identity in evaluation mode or at rate 0.
template <typename T>
Tensor<T> drop_path(const Tensor<T>& branch, double rate, bool training, std::mt19937_64& rng);

}  // namespace win
