#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace win {

/// Wiring of the depthwise-convolution sublayer.
enum class ConvPlacement {
    late_residual,   // skip taken after the sublayer's LayerNorm
    early_residual,  // skip taken before the LayerNorm
    no_residual,     // Y <- DConv(LN(Y))
    none,            // sublayer omitted
};

/// Skip path of the late-residual sublayer: the LayerNorm-ed input
/// (`literal`) or the raw input (`prenorm`).
enum class ConvSkip { literal, prenorm };

/// Positional encoding inside window attention.
enum class PeMode { rpe, lepe, none };

std::string_view to_string(ConvPlacement p);
std::string_view to_string(ConvSkip s);
std::string_view to_string(PeMode m);
ConvPlacement parse_conv_placement(std::string_view s);
ConvSkip parse_conv_skip(std::string_view s);
PeMode parse_pe_mode(std::string_view s);

inline constexpr std::size_t kLepeKernel = 3;

struct BlockConfig {
    std::size_t channels = 96;
    std::size_t heads = 3;
    std::size_t window = 7;
    double mlp_ratio = 4.0;
    std::size_t conv_kernel = 7;
    ConvPlacement conv_placement = ConvPlacement::late_residual;
    ConvSkip conv_skip = ConvSkip::literal;
    PeMode pe_mode = PeMode::lepe;
    /// This block attends over windows displaced by shift_size().
    bool shifted = false;
    double drop_path_rate = 0.0;

    std::size_t head_dim() const { return channels / heads; }
    std::size_t hidden_channels() const;
    std::size_t shift_size() const { return shifted ? window / 2 : 0; }
    bool has_conv() const { return conv_placement != ConvPlacement::none; }

    /// Throws ConfigError on C % h != 0, even k, drop rate outside [0, 1), ...
    void validate() const;
};

}  // namespace win
