#include "win/probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>

#include "win/autograd.hpp"
#include "win/errors.hpp"

namespace win {

struct JacobianProbe::State {
    ModelParams<double> params;
    Tensor<double> input, output;
    std::unique_ptr<ComputeGraph<double>> graph;
};

JacobianProbe::JacobianProbe(const ModelConfig& cfg, std::size_t stage, std::uint64_t seed)
    : s_(std::make_unique<State>()) {
    cfg.validate();
    cfg.check_geometry(cfg.input_h, cfg.input_w);
    if (stage >= cfg.num_stages()) {
        throw GeometryError("stage " + std::to_string(stage) + " does not exist (model has " +
                            std::to_string(cfg.num_stages()) + ")");
    }
    h_ = cfg.stage_height(stage, cfg.input_h);
    w_ = cfg.stage_width(stage, cfg.input_w);
    c_ = cfg.stage_channels(stage);

    s_->params = init_params<double>(cfg, seed);
    s_->params.set_requires_grad(false);
    std::mt19937_64 rng(seed ^ 0xa5a5a5a5u);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> v(h_ * w_ * c_);
    for (auto& x : v) x = dist(rng);
    s_->input = Tensor<double>({1, h_, w_, c_}, std::move(v));
    s_->input.set_requires_grad(true);
    std::mt19937_64 unused(0);
    s_->output = stage_forward(s_->input, s_->params, cfg, stage, false, unused, false);
    s_->graph = std::make_unique<ComputeGraph<double>>(s_->output);
}

JacobianProbe::~JacobianProbe() = default;
JacobianProbe::JacobianProbe(JacobianProbe&&) noexcept = default;
JacobianProbe& JacobianProbe::operator=(JacobianProbe&&) noexcept = default;

std::vector<double> JacobianProbe::sensitivity_to(TokenPos target) {
    if (target.row >= h_ || target.col >= w_) {
        throw GeometryError("target token (" + std::to_string(target.row) + ", " + std::to_string(target.col) +
                            ") outside the " + std::to_string(h_) + "x" + std::to_string(w_) + " stage grid");
    }
    std::vector<double> best(h_ * w_, 0.0);
    std::vector<double> seed(h_ * w_ * c_, 0.0);
    const std::size_t at = (target.row * w_ + target.col) * c_;
    for (std::size_t c = 0; c < c_; ++c) {
        s_->input.zero_grad();
        seed[at + c] = 1.0;
        s_->graph->backward(std::span<const double>(seed));
        seed[at + c] = 0.0;
        const auto g = s_->input.grad();
        for (std::size_t t = 0; t < h_ * w_; ++t)
            for (std::size_t k = 0; k < c_; ++k) best[t] = std::max(best[t], std::abs(g[t * c_ + k]));
    }
    return best;
}

double jacobian_probe(const ModelConfig& cfg, std::size_t stage, TokenPos source, TokenPos target,
                      std::uint64_t seed) {
    JacobianProbe probe(cfg, stage, seed);
    if (source.row >= probe.height() || source.col >= probe.width()) {
        throw GeometryError("source token (" + std::to_string(source.row) + ", " + std::to_string(source.col) +
                            ") outside the " + std::to_string(probe.height()) + "x" +
                            std::to_string(probe.width()) + " stage grid");
    }
    return probe.sensitivity_to(target)[source.row * probe.width() + source.col];
}

bool ProbeSummary::matches_prediction() const {
    if (!(min_self > 0)) return false;
    if (predicted_isolated) return max_cross == 0.0;
    return boundary_pairs == 0 || min_boundary > kCouplingFloor;
}

std::string ProbeSummary::text() const {
    char buf[640];
    std::snprintf(buf, sizeof buf,
                  "config            %s\n"
                  "stage             %zu (%zux%zu tokens, window %zu)\n"
                  "prediction        %s\n"
                  "targets probed    %zu\n"
                  "cross-window      %zu pairs, max |J| = %.3e\n"
                  "window boundary   %zu pairs, min |J| = %.3e\n"
                  "self              min |J| = %.3e\n"
                  "result            %s\n",
                  config.c_str(), stage, map_h, map_w, window,
                  predicted_isolated ? "isolated (cross-window |J| exactly 0)"
                                     : "coupled (boundary |J| > 1e-8)",
                  targets, cross_pairs, max_cross, boundary_pairs, min_boundary, min_self,
                  matches_prediction() ? "matches prediction" : "DOES NOT match prediction");
    return buf;
}

ProbeSummary probe_summary(const ModelConfig& cfg, std::size_t stage, std::uint64_t seed, std::size_t max_targets) {
    JacobianProbe probe(cfg, stage, seed);
    const std::size_t H = probe.height(), W = probe.width(), M = cfg.window;

    ProbeSummary s;
    s.config = cfg.name;
    s.stage = stage;
    s.map_h = H;
    s.map_w = W;
    s.window = M;
    bool shifted = false;
    for (std::size_t b = 0; b < cfg.depths[stage]; ++b) shifted |= cfg.block_config(stage, b, H, W).shifted;
    s.predicted_isolated = cfg.conv_placement == ConvPlacement::none && !shifted;

    std::vector<std::size_t> targets(H * W);
    std::iota(targets.begin(), targets.end(), 0);
    if (max_targets != 0 && max_targets < targets.size()) {
        std::mt19937_64 rng(seed);
        std::shuffle(targets.begin(), targets.end(), rng);
        targets.resize(max_targets);
        std::sort(targets.begin(), targets.end());
    }

    auto window_id = [&](std::size_t t) { return (t / W / M) * (W / M) + (t % W) / M; };
    s.min_boundary = std::numeric_limits<double>::infinity();
    s.min_self = std::numeric_limits<double>::infinity();
    for (const auto t : targets) {
        const auto sens = probe.sensitivity_to({t / W, t % W});
        ++s.targets;
        s.min_self = std::min(s.min_self, sens[t]);
        for (std::size_t src = 0; src < H * W; ++src) {
            if (window_id(src) == window_id(t)) continue;
            ++s.cross_pairs;
            s.max_cross = std::max(s.max_cross, sens[src]);
            const std::size_t dr = src / W > t / W ? src / W - t / W : t / W - src / W;
            const std::size_t dc = src % W > t % W ? src % W - t % W : t % W - src % W;
            if (dr + dc == 1) {
                ++s.boundary_pairs;
                s.min_boundary = std::min(s.min_boundary, sens[src]);
            }
        }
    }
    if (s.boundary_pairs == 0) s.min_boundary = 0;
    return s;
}

}  // namespace win
