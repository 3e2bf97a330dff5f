#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "win/block_config.hpp"

namespace win {

/// Four-stage (or shorter) hierarchical model description.
struct ModelConfig {
    std::string name = "win_t";
    std::size_t input_h = 224;
    std::size_t input_w = 224;
    std::size_t base_channels = 96;
    std::vector<std::size_t> depths{2, 2, 6, 2};
    std::vector<std::size_t> heads{3, 6, 12, 24};
    std::size_t window = 7;
    double mlp_ratio = 4.0;
    std::size_t conv_kernel = 7;
    ConvPlacement conv_placement = ConvPlacement::late_residual;
    ConvSkip conv_skip = ConvSkip::literal;
    PeMode pe_mode = PeMode::lepe;
    /// Alternate plain and shifted windows within each stage.
    bool shifted = false;
    double drop_path_max = 0.1;
    std::size_t num_classes = 1000;

    std::size_t num_stages() const { return depths.size(); }
    std::size_t total_blocks() const;
    std::size_t stage_channels(std::size_t stage) const { return base_channels << stage; }
    /// Feature-map extents entering the blocks of `stage` for an h x w input.
    std::size_t stage_height(std::size_t stage, std::size_t h) const { return h / 4 >> stage; }
    std::size_t stage_width(std::size_t stage, std::size_t w) const { return w / 4 >> stage; }

    /// Linearly spaced stochastic-depth rate of the n-th block overall.
    double drop_path_rate(std::size_t global_block) const;

    /// Configuration of block `block` in `stage`, assuming the map entering
    /// that stage is `map_h` x `map_w` (shift is dropped when one window
    /// already covers the map).
    BlockConfig block_config(std::size_t stage, std::size_t block, std::size_t map_h, std::size_t map_w) const;

    /// Throws ConfigError on inconsistent fields.
    void validate() const;

    /// Throws GeometryError naming the first stage that cannot be tiled by
    /// windows for an h x w input.
    void check_geometry(std::size_t h, std::size_t w) const;
};

/// win_t, win_s, win_b (also accepted with a dash), and the desk-scale "tiny".
ModelConfig preset(std::string_view name);
bool is_preset(std::string_view name);

/// Reads a JSON document; fields not given fall back to the preset named by
/// "name" (win_t if absent or unknown). Unknown keys are rejected.
ModelConfig model_config_from_json(std::string_view text);
ModelConfig load_model_config(const std::string& path);
std::string to_json(const ModelConfig& cfg);

}  // namespace win
