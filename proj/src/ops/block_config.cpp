#include "win/block_config.hpp"

#include <cmath>

#include "win/errors.hpp"

namespace win {

std::string_view to_string(ConvPlacement p) {
    switch (p) {
        case ConvPlacement::late_residual: return "late_residual";
        case ConvPlacement::early_residual: return "early_residual";
        case ConvPlacement::no_residual: return "no_residual";
        case ConvPlacement::none: return "none";
    }
    return "?";
}

std::string_view to_string(ConvSkip s) { return s == ConvSkip::literal ? "literal" : "prenorm"; }

std::string_view to_string(PeMode m) {
    switch (m) {
        case PeMode::rpe: return "rpe";
        case PeMode::lepe: return "lepe";
        case PeMode::none: return "none";
    }
    return "?";
}

ConvPlacement parse_conv_placement(std::string_view s) {
    if (s == "late_residual" || s == "late") return ConvPlacement::late_residual;
    if (s == "early_residual" || s == "early") return ConvPlacement::early_residual;
    if (s == "no_residual") return ConvPlacement::no_residual;
    if (s == "none") return ConvPlacement::none;
    throw ConfigError("unknown conv_placement '" + std::string(s) +
                      "' (expected late_residual|early_residual|no_residual|none)");
}

ConvSkip parse_conv_skip(std::string_view s) {
    if (s == "literal") return ConvSkip::literal;
    if (s == "prenorm") return ConvSkip::prenorm;
    throw ConfigError("unknown conv_skip '" + std::string(s) + "' (expected literal|prenorm)");
}

PeMode parse_pe_mode(std::string_view s) {
    if (s == "rpe") return PeMode::rpe;
    if (s == "lepe") return PeMode::lepe;
    if (s == "none") return PeMode::none;
    throw ConfigError("unknown pe_mode '" + std::string(s) + "' (expected rpe|lepe|none)");
}

std::size_t BlockConfig::hidden_channels() const {
    const double hidden = static_cast<double>(channels) * mlp_ratio;
    const double rounded = std::round(hidden);
    if (std::abs(hidden - rounded) > 1e-9 || rounded < 1) {
        throw ConfigError("mlp_ratio " + std::to_string(mlp_ratio) + " does not give an integral width for " +
                          std::to_string(channels) + " channels");
    }
    return static_cast<std::size_t>(rounded);
}

void BlockConfig::validate() const {
    if (channels == 0 || heads == 0 || window == 0) {
        throw ConfigError("channels, heads and window must be positive");
    }
    if (channels % heads != 0) {
        throw ConfigError("channels " + std::to_string(channels) + " not divisible by heads " +
                          std::to_string(heads));
    }
    if (conv_kernel == 0 || conv_kernel % 2 == 0) {
        throw ConfigError("conv_kernel must be odd and positive, got " + std::to_string(conv_kernel));
    }
    if (!(mlp_ratio > 0)) throw ConfigError("mlp_ratio must be positive");
    (void)hidden_channels();
    if (!(drop_path_rate >= 0.0 && drop_path_rate < 1.0)) {
        throw ConfigError("drop_path_rate must lie in [0, 1), got " + std::to_string(drop_path_rate));
    }
}

}  // namespace win
