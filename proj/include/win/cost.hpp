#pragma once

// Analytic parameter and multiply-accumulate accounting.
//
// One multiply-accumulate counts as one FLOP. Linear layers cost T*m*n,
// window attention adds 2*M^4*C per window for QK^T and AV, depthwise
// convolutions H*W*k^2*c. Normalisation, softmax, activations and bias
// additions are not counted.

#include <cstdint>
#include <string>
#include <vector>

#include "win/model_config.hpp"

namespace win {

struct CostEntry {
    std::string name;
    std::uint64_t params = 0;
    std::uint64_t macs = 0;
};

struct CostReport {
    std::vector<CostEntry> entries;

    std::uint64_t total_params() const;
    std::uint64_t total_macs() const;
    /// nullptr when absent.
    const CostEntry* find(const std::string& name) const;
    /// Sum over entries whose name ends with `suffix`.
    CostEntry sum_suffix(const std::string& suffix) const;
    /// Fixed-width text table with a totals line.
    std::string table() const;
};

/// Parameter counts per layer; macs are left at zero. Allocates nothing.
CostReport count_params(const ModelConfig& cfg);

/// Parameters and MACs for one h x w image. Throws GeometryError when the
/// input cannot be tiled.
CostReport count_flops(const ModelConfig& cfg, std::size_t h, std::size_t w);

}  // namespace win
