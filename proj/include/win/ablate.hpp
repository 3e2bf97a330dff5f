#pragma once

// Variant grids over the architecture axes, trained on the synthetic task.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "win/model_config.hpp"
#include "win/train.hpp"

namespace win {

enum class AblationAxis { placement, conv_shift, kernel, pe };

std::string_view to_string(AblationAxis a);
AblationAxis parse_ablation_axis(std::string_view s);

struct AblationVariant {
    std::string name;
    ModelConfig cfg;
};

/// placement: late_residual, early_residual, no_residual
/// conv_shift: conv_off/shift_off, conv_off/shift_on, conv_on/shift_off, conv_on/shift_on
/// kernel:     k3, k5, k7
/// pe:         rpe, lepe, none
/// Every other field is taken from `base`; conv-on cells keep the base
/// placement (late_residual if the base has none).
std::vector<AblationVariant> ablation_variants(AblationAxis axis, const ModelConfig& base);

struct AblationRow {
    std::string variant;
    std::uint64_t params = 0;
    std::uint64_t macs = 0;  // at the base input size
    double final_acc = 0;    // final eval_acc
};

struct AblationTable {
    AblationAxis axis = AblationAxis::conv_shift;
    std::vector<AblationRow> rows;

    const AblationRow* find(std::string_view variant) const;
    static constexpr const char* kHeader = "variant,params,macs,final_acc";
    std::string to_csv() const;
    void write_csv(const std::filesystem::path& path) const;
};

/// Default for the tables: 2048 samples, batch 64, 512 held out.
TrainConfig ablation_train_config();

/// Trains every variant with the same TrainConfig on the same dataset
/// (gen_synthetic(cfg.task, cfg.samples, base geometry, cfg.seed)). Up to
/// `threads` variants run concurrently; results do not depend on it.
AblationTable ablate(AblationAxis axis, const ModelConfig& base, const TrainConfig& cfg, std::size_t threads = 1,
                     std::ostream* progress = nullptr);

}  // namespace win
