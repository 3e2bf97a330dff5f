#pragma once

// Token-to-token Jacobian magnitudes through one stage's blocks.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "win/dataset.hpp"
#include "win/model.hpp"
#include "win/model_config.hpp"

namespace win {

/// Stage `stage` of `cfg` with init_params(cfg, seed) weights, run in float64
/// on a uniform [-1, 1] input map (also drawn from `seed`). Patch merging is
/// not part of the probed function: inputs and outputs share the stage grid.
class JacobianProbe {
public:
    JacobianProbe(const ModelConfig& cfg, std::size_t stage, std::uint64_t seed = 0);
    ~JacobianProbe();
    JacobianProbe(JacobianProbe&&) noexcept;
    JacobianProbe& operator=(JacobianProbe&&) noexcept;

    std::size_t height() const { return h_; }
    std::size_t width() const { return w_; }
    std::size_t channels() const { return c_; }

    /// max over output channel c and input channel c' of
    /// |d out[target, c] / d in[source, c']|, for every source token
    /// (row-major over the stage grid). Throws GeometryError for a target
    /// outside the grid.
    std::vector<double> sensitivity_to(TokenPos target);

private:
    struct State;
    std::unique_ptr<State> s_;
    std::size_t h_ = 0, w_ = 0, c_ = 0;
};

/// One probe entry: max |d out[target] / d in[source]| over channel pairs.
double jacobian_probe(const ModelConfig& cfg, std::size_t stage, TokenPos source, TokenPos target,
                      std::uint64_t seed = 0);

struct ProbeSummary {
    std::string config;
    std::size_t stage = 0, map_h = 0, map_w = 0, window = 0;
    /// No conv sublayer and no shifted block in this stage.
    bool predicted_isolated = false;
    std::size_t targets = 0;
    std::size_t cross_pairs = 0;     // source and target in different windows
    std::size_t boundary_pairs = 0;  // 4-neighbours on opposite sides of a window edge
    double max_cross = 0;            // over cross_pairs
    double min_boundary = 0;         // over boundary_pairs
    double min_self = 0;             // token to itself

    /// Isolated: max_cross == 0 exactly. Otherwise: min_boundary > 1e-8.
    /// Both also require min_self > 0.
    bool matches_prediction() const;
    std::string text() const;
};

inline constexpr double kCouplingFloor = 1e-8;

/// Probes every target token of the stage (or `max_targets` of them, chosen
/// with `seed`, when nonzero) against all sources.
ProbeSummary probe_summary(const ModelConfig& cfg, std::size_t stage, std::uint64_t seed = 0,
                           std::size_t max_targets = 0);

}  // namespace win
