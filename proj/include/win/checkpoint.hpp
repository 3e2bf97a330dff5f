#pragma once

// WINCKPT1 files, little-endian:
//   magic "WINCKPT1", u32 entry count, then per entry
//   u32 name length, name bytes, u8 dtype (0 = f32, 1 = f64), u8 rank,
//   rank x u32 extents, raw values.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "win/model.hpp"
#include "win/tensor.hpp"

namespace win {

using AnyTensor = std::variant<TensorF, TensorD>;

struct CheckpointEntry {
    std::string name;
    AnyTensor tensor;
};

using Checkpoint = std::vector<CheckpointEntry>;

inline constexpr char kCheckpointMagic[8] = {'W', 'I', 'N', 'C', 'K', 'P', 'T', '1'};

/// Throws CheckpointError(duplicate_name) on repeated names.
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

template <typename T>
Checkpoint to_checkpoint(const ModelParams<T>& params);

/// Rebuilds model parameters, converting precision when needed. Throws
/// CheckpointError(mismatch) if names or shapes disagree with `cfg`.
template <typename T>
ModelParams<T> params_from_checkpoint(const ModelConfig& cfg, const Checkpoint& ckpt);

}  // namespace win
