#include "win/model_check.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "win/errors.hpp"
#include "win/model.hpp"
#include "win/ops.hpp"

namespace win {

bool ModelGradCheck::passed(double tolerance) const {
    return max_relative_error <= tolerance && key_bias_max_abs <= kKeyBiasTolerance;
}

std::string ModelGradCheck::text() const {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "coordinates checked   %zu\n"
                  "max relative error    %.3e\n"
                  "worst coordinate      %s[%zu] analytic %.9e numeric %.9e\n"
                  "key-bias |grad| max   %.3e\n",
                  coordinates, max_relative_error, worst_name.c_str(), worst_index, worst_analytic, worst_numeric,
                  key_bias_max_abs);
    return buf;
}

ModelGradCheck model_grad_check(const ModelConfig& cfg, std::uint64_t seed, double eps,
                                std::size_t coords_per_param) {
    cfg.validate();
    cfg.check_geometry(cfg.input_h, cfg.input_w);
    auto params = init_params<double>(cfg, seed);
    std::mt19937_64 rng(seed ^ 0x3c6ef372u);
    std::uniform_real_distribution<double> jitter(-0.2, 0.2), pixel(-1.0, 1.0);
    for (auto& nt : params.all)
        for (auto& v : nt.tensor.mutable_values()) v += jitter(rng);

    std::vector<double> img(cfg.input_h * cfg.input_w * 3);
    for (auto& v : img) v = pixel(rng);
    Tensor<double> image({1, cfg.input_h, cfg.input_w, 3}, std::move(img));
    const std::vector<int> label{static_cast<int>(seed % cfg.num_classes)};

    std::mt19937_64 unused(0);
    const Objective<double> loss = [&] {
        return cross_entropy(model_forward(image, params, cfg, false, unused), label);
    };

    std::vector<Tensor<double>> leaves;
    std::vector<std::size_t> key_lo(params.all.size(), 0), key_hi(params.all.size(), 0);
    for (std::size_t i = 0; i < params.all.size(); ++i) {
        const auto& nt = params.all[i];
        leaves.push_back(nt.tensor);
        if (nt.name.ends_with("attn.qkv.bias")) {
            const std::size_t C = nt.tensor.size() / 3;
            key_lo[i] = C;
            key_hi[i] = 2 * C;
        }
    }
    const CoordinateFilter not_key_bias = [&](std::size_t t, std::size_t i) {
        return !(i >= key_lo[t] && i < key_hi[t]);
    };

    ModelGradCheck out;
    const auto on_params = grad_check<double>(loss, leaves, eps, coords_per_param, seed, not_key_bias);
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        const auto g = leaves[i].grad();
        for (std::size_t k = key_lo[i]; k < key_hi[i]; ++k)
            out.key_bias_max_abs = std::max(out.key_bias_max_abs, std::abs(g[k]));
    }
    params.set_requires_grad(false);
    const auto on_image = grad_check<double>(loss, std::vector<Tensor<double>>{image}, eps);

    out.coordinates = on_params.coordinates + on_image.coordinates;
    const bool image_worse = on_image.max_relative_error > on_params.max_relative_error;
    const auto& worst = image_worse ? on_image : on_params;
    out.max_relative_error = worst.max_relative_error;
    out.worst_name = image_worse ? "input" : params.all[worst.worst_tensor].name;
    out.worst_index = worst.worst_index;
    out.worst_analytic = worst.worst_analytic;
    out.worst_numeric = worst.worst_numeric;
    return out;
}

}  // namespace win
