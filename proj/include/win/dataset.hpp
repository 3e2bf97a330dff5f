#pragma once

// Synthetic two-marker images for desk-scale training.

#include <cstdint>
#include <string_view>
#include <vector>

#include "win/tensor.hpp"

namespace win {

enum class Task {
    crosswindow,  // markers in adjacent windows; label = direction between the windows
    local,        // markers in one window; label = direction between the tokens
};

std::string_view to_string(Task t);
Task parse_task(std::string_view s);

inline constexpr std::size_t kNumDirections = 4;  // right, left, down, up
inline constexpr std::size_t kDefaultPatch = 4;

struct TokenPos {
    std::size_t row = 0, col = 0;
    bool operator==(const TokenPos&) const = default;
};

struct SyntheticDataset {
    Task task = Task::crosswindow;
    std::size_t height = 0, width = 0;  // pixels
    std::size_t window = 0;             // tokens per window side
    std::size_t patch = kDefaultPatch;  // pixels per token side
    std::uint64_t seed = 0;

    Tensor<double> images;  // [N, H, W, 3]
    std::vector<int> labels;
    std::vector<TokenPos> marker_a, marker_b;  // token coordinates

    std::size_t size() const { return labels.size(); }
    std::size_t window_of(TokenPos p) const;

    /// Samples `idx` as a [idx.size(), H, W, 3] batch.
    template <typename T>
    Tensor<T> batch(const std::vector<std::size_t>& idx) const;
    std::vector<int> batch_labels(const std::vector<std::size_t>& idx) const;
};

/// n images of H x W pixels whose token grid (H/patch x W/patch) is tiled by
/// M x M windows. Marker A lights channel 0 of one patch, marker B channel 1
/// of another; pixels carry uniform noise in [-0.1, 0.1]. Labels are exactly
/// balanced (counts differ by at most one). Deterministic in `seed`.
SyntheticDataset gen_synthetic(Task task, std::size_t n, std::size_t height, std::size_t width, std::size_t window,
                               std::uint64_t seed, std::size_t patch = kDefaultPatch);

}  // namespace win
