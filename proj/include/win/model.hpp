#pragma once

// Win Transformer assembly: parameter layout, initialisation, forward passes.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "win/model_config.hpp"
#include "win/tensor.hpp"
#include "win/window_ops.hpp"

namespace win {

/// How a parameter is initialised.
enum class ParamInit { trunc_normal, zeros, ones };

inline constexpr double kInitStd = 0.02;

/// Name, shape and initialiser of one parameter tensor.
struct ParamSpec {
    std::string name;
    Shape shape;
    ParamInit init = ParamInit::zeros;
};

/// Every parameter of `cfg`, in canonical order, without allocating.
std::vector<ParamSpec> param_layout(const ModelConfig& cfg);

template <typename T>
struct BlockParams {
    Tensor<T> norm1_gamma, norm1_beta;
    AttentionParams<T> attn;
    Tensor<T> norm_conv_gamma, norm_conv_beta;
    Tensor<T> conv_weight, conv_bias;
    Tensor<T> norm2_gamma, norm2_beta;
    Tensor<T> fc1_weight, fc1_bias, fc2_weight, fc2_bias;
};

template <typename T>
struct StageParams {
    // Patch merging in front of every stage but the first.
    Tensor<T> merge_norm_gamma, merge_norm_beta, merge_reduction;
    std::vector<BlockParams<T>> blocks;
};

template <typename T>
struct NamedTensor {
    std::string name;
    Tensor<T> tensor;
};

template <typename T>
struct ModelParams {
    Tensor<T> embed_weight, embed_bias, embed_norm_gamma, embed_norm_beta;
    std::vector<StageParams<T>> stages;
    Tensor<T> norm_gamma, norm_beta;
    Tensor<T> head_weight, head_bias;

    /// Handles to every tensor above, in param_layout order.
    std::vector<NamedTensor<T>> all;

    std::size_t scalar_count() const;
    void zero_grad() const;
    void set_requires_grad(bool on) const;
};

/// Truncated normal (std 0.02, cut at 2 sigma) weights, zero biases, unit
/// norm gains, zero relative-position tables. Deterministic in `seed`.
template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Builds the structured view from tensors listed by name, checking that
/// names and shapes match the layout exactly.
template <typename T>
ModelParams<T> bind_params(const ModelConfig& cfg, const std::vector<NamedTensor<T>>& tensors);

/// Samples from N(0, std^2) restricted to [-2 std, 2 std].
double truncated_normal(std::mt19937_64& rng, double std);

/// Per-block activations captured for inspection.
template <typename T>
struct BlockTrace {
    AttentionTrace<T> attention;
};

/// One Win block on a [B, H, W, C] map:
///   Y = X + DropPath(WSA(LN(X)))
///   conv sublayer according to cfg.conv_placement / cfg.conv_skip
///   Y = Y + DropPath(MLP(LN(Y)))
/// Throws NumericError if the output is not finite.
template <typename T>
Tensor<T> block_forward(const Tensor<T>& x, const BlockParams<T>& p, const BlockConfig& cfg, bool training,
                        std::mt19937_64& rng, BlockTrace<T>* trace = nullptr);

/// Patch merging (stage > 0) followed by the stage's blocks.
template <typename T>
Tensor<T> stage_forward(const Tensor<T>& x, const ModelParams<T>& p, const ModelConfig& cfg, std::size_t stage,
                        bool training, std::mt19937_64& rng, bool merge = true);

/// Patch embedding output [B, H/4, W/4, C].
template <typename T>
Tensor<T> embed_forward(const Tensor<T>& image, const ModelParams<T>& p);

/// Image [B, H, W, 3] -> logits [B, num_classes].
template <typename T>
Tensor<T> model_forward(const Tensor<T>& image, const ModelParams<T>& p, const ModelConfig& cfg, bool training,
                        std::mt19937_64& rng);

template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& p, const ModelConfig& cfg);

}  // namespace win
