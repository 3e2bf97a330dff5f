#include "win/model.hpp"

#include <cmath>
#include <map>

#include "win/errors.hpp"
#include "win/ops.hpp"

namespace win {

namespace {

// Visits every parameter slot of `p` (resized to fit `cfg`) in canonical order.
template <typename T, typename F>
void walk(const ModelConfig& cfg, ModelParams<T>& p, F&& visit) {
    const std::size_t C0 = cfg.base_channels;
    visit("patch_embed.proj.weight", Shape{kPatchDim, C0}, ParamInit::trunc_normal, p.embed_weight);
    visit("patch_embed.proj.bias", Shape{C0}, ParamInit::zeros, p.embed_bias);
    visit("patch_embed.norm.weight", Shape{C0}, ParamInit::ones, p.embed_norm_gamma);
    visit("patch_embed.norm.bias", Shape{C0}, ParamInit::zeros, p.embed_norm_beta);

    p.stages.resize(cfg.num_stages());
    for (std::size_t s = 0; s < cfg.num_stages(); ++s) {
        auto& st = p.stages[s];
        const std::string sp = "stages." + std::to_string(s) + ".";
        const std::size_t C = cfg.stage_channels(s);
        if (s > 0) {
            const std::size_t D = cfg.stage_channels(s - 1);
            visit(sp + "downsample.norm.weight", Shape{4 * D}, ParamInit::ones, st.merge_norm_gamma);
            visit(sp + "downsample.norm.bias", Shape{4 * D}, ParamInit::zeros, st.merge_norm_beta);
            visit(sp + "downsample.reduction.weight", Shape{4 * D, 2 * D}, ParamInit::trunc_normal,
                  st.merge_reduction);
        }
        st.blocks.resize(cfg.depths[s]);
        for (std::size_t b = 0; b < cfg.depths[s]; ++b) {
            auto& bp = st.blocks[b];
            const std::string pre = sp + "blocks." + std::to_string(b) + ".";
            const std::size_t M = cfg.window, hidden = cfg.block_config(s, b, 0, 0).hidden_channels();
            visit(pre + "norm1.weight", Shape{C}, ParamInit::ones, bp.norm1_gamma);
            visit(pre + "norm1.bias", Shape{C}, ParamInit::zeros, bp.norm1_beta);
            visit(pre + "attn.qkv.weight", Shape{C, 3 * C}, ParamInit::trunc_normal, bp.attn.qkv_weight);
            visit(pre + "attn.qkv.bias", Shape{3 * C}, ParamInit::zeros, bp.attn.qkv_bias);
            visit(pre + "attn.proj.weight", Shape{C, C}, ParamInit::trunc_normal, bp.attn.proj_weight);
            visit(pre + "attn.proj.bias", Shape{C}, ParamInit::zeros, bp.attn.proj_bias);
            if (cfg.pe_mode == PeMode::rpe) {
                visit(pre + "attn.relative_position_bias_table", Shape{(2 * M - 1) * (2 * M - 1), cfg.heads[s]},
                      ParamInit::zeros, bp.attn.rpe_table);
            } else if (cfg.pe_mode == PeMode::lepe) {
                visit(pre + "attn.lepe.weight", Shape{kLepeKernel, kLepeKernel, C}, ParamInit::trunc_normal,
                      bp.attn.lepe_kernel);
            }
            if (cfg.conv_placement != ConvPlacement::none) {
                const std::size_t k = cfg.conv_kernel;
                visit(pre + "norm_conv.weight", Shape{C}, ParamInit::ones, bp.norm_conv_gamma);
                visit(pre + "norm_conv.bias", Shape{C}, ParamInit::zeros, bp.norm_conv_beta);
                visit(pre + "conv.weight", Shape{k, k, C}, ParamInit::trunc_normal, bp.conv_weight);
                visit(pre + "conv.bias", Shape{C}, ParamInit::zeros, bp.conv_bias);
            }
            visit(pre + "norm2.weight", Shape{C}, ParamInit::ones, bp.norm2_gamma);
            visit(pre + "norm2.bias", Shape{C}, ParamInit::zeros, bp.norm2_beta);
            visit(pre + "mlp.fc1.weight", Shape{C, hidden}, ParamInit::trunc_normal, bp.fc1_weight);
            visit(pre + "mlp.fc1.bias", Shape{hidden}, ParamInit::zeros, bp.fc1_bias);
            visit(pre + "mlp.fc2.weight", Shape{hidden, C}, ParamInit::trunc_normal, bp.fc2_weight);
            visit(pre + "mlp.fc2.bias", Shape{C}, ParamInit::zeros, bp.fc2_bias);
        }
    }
    const std::size_t CL = cfg.stage_channels(cfg.num_stages() - 1);
    visit("norm.weight", Shape{CL}, ParamInit::ones, p.norm_gamma);
    visit("norm.bias", Shape{CL}, ParamInit::zeros, p.norm_beta);
    visit("head.weight", Shape{CL, cfg.num_classes}, ParamInit::trunc_normal, p.head_weight);
    visit("head.bias", Shape{cfg.num_classes}, ParamInit::zeros, p.head_bias);
}

}  // namespace

std::vector<ParamSpec> param_layout(const ModelConfig& cfg) {
    cfg.validate();
    std::vector<ParamSpec> out;
    ModelParams<float> skeleton;
    walk(cfg, skeleton, [&](std::string name, Shape shape, ParamInit init, TensorF&) {
        out.push_back(ParamSpec{std::move(name), std::move(shape), init});
    });
    return out;
}

double truncated_normal(std::mt19937_64& rng, double std) {
    std::normal_distribution<double> dist(0.0, std);
    for (;;) {
        const double v = dist(rng);
        if (std::abs(v) <= 2.0 * std) return v;
    }
}

template <typename T>
std::size_t ModelParams<T>::scalar_count() const {
    std::size_t n = 0;
    for (const auto& nt : all) n += nt.tensor.size();
    return n;
}

template <typename T>
void ModelParams<T>::zero_grad() const {
    for (auto nt : all) nt.tensor.zero_grad();
}

template <typename T>
void ModelParams<T>::set_requires_grad(bool on) const {
    for (auto nt : all) nt.tensor.set_requires_grad(on);
}

template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    ModelParams<T> p;
    walk(cfg, p, [&](const std::string& name, Shape shape, ParamInit init, Tensor<T>& slot) {
        std::vector<T> v(numel(shape), T(0));
        if (init == ParamInit::ones) {
            std::fill(v.begin(), v.end(), T(1));
        } else if (init == ParamInit::trunc_normal) {
            for (auto& x : v) x = static_cast<T>(truncated_normal(rng, kInitStd));
        }
        slot = Tensor<T>(std::move(shape), std::move(v));
        slot.set_requires_grad(true);
        p.all.push_back({name, slot});
    });
    return p;
}

template <typename T>
ModelParams<T> bind_params(const ModelConfig& cfg, const std::vector<NamedTensor<T>>& tensors) {
    cfg.validate();
    std::map<std::string, const Tensor<T>*> by_name;
    for (const auto& nt : tensors) {
        if (!by_name.emplace(nt.name, &nt.tensor).second) {
            throw ConfigError("parameter '" + nt.name + "' given twice");
        }
    }
    ModelParams<T> p;
    std::size_t used = 0;
    walk(cfg, p, [&](const std::string& name, const Shape& shape, ParamInit, Tensor<T>& slot) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw ConfigError("missing parameter '" + name + "'");
        if (it->second->shape() != shape) {
            throw ShapeError("parameter '" + name + "' has shape " + shape_str(it->second->shape()) + ", expected " +
                             shape_str(shape));
        }
        slot = *it->second;
        p.all.push_back({name, slot});
        ++used;
    });
    if (used != by_name.size()) {
        for (const auto& spec : param_layout(cfg)) by_name.erase(spec.name);
        throw ConfigError("unexpected parameter '" + by_name.begin()->first + "' for model '" + cfg.name + "'");
    }
    return p;
}

template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& p, const ModelConfig& cfg) {
    std::vector<NamedTensor<To>> out;
    for (const auto& nt : p.all) {
        auto t = cast<To>(nt.tensor);
        t.set_requires_grad(true);
        out.push_back({nt.name, t});
    }
    return bind_params(cfg, out);
}

// ------------------------------------------------------------------ forward

template <typename T>
Tensor<T> block_forward(const Tensor<T>& x, const BlockParams<T>& p, const BlockConfig& cfg, bool training,
                        std::mt19937_64& rng, BlockTrace<T>* trace) {
    const double rate = cfg.drop_path_rate;
    const auto shift = static_cast<std::ptrdiff_t>(cfg.shift_size());

    auto h = layer_norm(x, p.norm1_gamma, p.norm1_beta);
    if (shift != 0) h = cyclic_shift(h, shift);
    auto [wins, grid] = window_partition(h, cfg.window);
    Tensor<T> mask;
    if (shift != 0) mask = shift_attention_mask<T>(grid, cfg.shift_size());
    auto a = window_reverse(window_attention(wins, p.attn, cfg, mask, trace ? &trace->attention : nullptr), grid);
    if (shift != 0) a = cyclic_shift(a, -shift);
    auto y = add(x, drop_path(a, rate, training, rng));

    auto conv = [&](const Tensor<T>& in) { return dwconv2d(in, p.conv_weight, p.conv_bias); };
    switch (cfg.conv_placement) {
        case ConvPlacement::late_residual:
            if (cfg.conv_skip == ConvSkip::literal) {
                auto n = layer_norm(y, p.norm_conv_gamma, p.norm_conv_beta);
                y = add(n, drop_path(conv(n), rate, training, rng));
                break;
            }
            [[fallthrough]];
        case ConvPlacement::early_residual:
            y = add(y, drop_path(conv(layer_norm(y, p.norm_conv_gamma, p.norm_conv_beta)), rate, training, rng));
            break;
        case ConvPlacement::no_residual:
            y = conv(layer_norm(y, p.norm_conv_gamma, p.norm_conv_beta));
            break;
        case ConvPlacement::none:
            break;
    }

    auto m = mlp(layer_norm(y, p.norm2_gamma, p.norm2_beta), p.fc1_weight, p.fc1_bias, p.fc2_weight, p.fc2_bias);
    y = add(y, drop_path(m, rate, training, rng));
    if (!all_finite(y)) throw NumericError("non-finite value in block output " + shape_str(y.shape()));
    return y;
}

template <typename T>
Tensor<T> embed_forward(const Tensor<T>& image, const ModelParams<T>& p) {
    return patch_embed(image, p.embed_weight, p.embed_bias, p.embed_norm_gamma, p.embed_norm_beta);
}

template <typename T>
Tensor<T> stage_forward(const Tensor<T>& x, const ModelParams<T>& p, const ModelConfig& cfg, std::size_t stage,
                        bool training, std::mt19937_64& rng, bool merge) {
    const auto& st = p.stages.at(stage);
    Tensor<T> y = x;
    if (stage > 0 && merge) y = patch_merge(y, st.merge_norm_gamma, st.merge_norm_beta, st.merge_reduction);
    for (std::size_t b = 0; b < st.blocks.size(); ++b) {
        try {
            y = block_forward(y, st.blocks[b], cfg.block_config(stage, b, y.extent(1), y.extent(2)), training, rng);
        } catch (const GeometryError& e) {
            throw GeometryError("stage " + std::to_string(stage + 1) + ": " + e.what());
        }
    }
    return y;
}

template <typename T>
Tensor<T> model_forward(const Tensor<T>& image, const ModelParams<T>& p, const ModelConfig& cfg, bool training,
                        std::mt19937_64& rng) {
    if (image.rank() != 4) throw ShapeError("model expects an image batch [B, H, W, 3], got " + shape_str(image.shape()));
    cfg.check_geometry(image.extent(1), image.extent(2));
    auto x = embed_forward(image, p);
    for (std::size_t s = 0; s < cfg.num_stages(); ++s) x = stage_forward(x, p, cfg, s, training, rng);
    const std::size_t B = x.extent(0), C = x.extent(3);
    x = layer_norm(x, p.norm_gamma, p.norm_beta);
    auto pooled = mean(reshape(x, {B, x.extent(1) * x.extent(2), C}), 1);
    return linear(pooled, p.head_weight, p.head_bias);
}

#define WIN_INSTANTIATE_MODEL(T)                                                                               \
    template struct ModelParams<T>;                                                                            \
    template ModelParams<T> init_params(const ModelConfig&, std::uint64_t);                                    \
    template ModelParams<T> bind_params(const ModelConfig&, const std::vector<NamedTensor<T>>&);               \
    template Tensor<T> block_forward(const Tensor<T>&, const BlockParams<T>&, const BlockConfig&, bool,        \
                                     std::mt19937_64&, BlockTrace<T>*);                                        \
    template Tensor<T> embed_forward(const Tensor<T>&, const ModelParams<T>&);                                 \
    template Tensor<T> stage_forward(const Tensor<T>&, const ModelParams<T>&, const ModelConfig&, std::size_t, \
                                     bool, std::mt19937_64&, bool);                                            \
    template Tensor<T> model_forward(const Tensor<T>&, const ModelParams<T>&, const ModelConfig&, bool,        \
                                     std::mt19937_64&);

WIN_INSTANTIATE_MODEL(float)
WIN_INSTANTIATE_MODEL(double)

#undef WIN_INSTANTIATE_MODEL

template ModelParams<double> cast_params(const ModelParams<float>&, const ModelConfig&);
template ModelParams<float> cast_params(const ModelParams<double>&, const ModelConfig&);
template ModelParams<float> cast_params(const ModelParams<float>&, const ModelConfig&);
template ModelParams<double> cast_params(const ModelParams<double>&, const ModelConfig&);

}  // namespace win
