#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tnas/core/diff_array.hpp"

namespace tnas {

struct NamedTensor {
  std::string name;
  DiffArray tensor;
};

/// Binary layout: "TNAS", u32 version, u32 count; then per tensor
/// u32 name length, UTF-8 name, u8 dtype (0 f32, 1 f64), u32 rank,
/// u64 extents, little-endian raw values.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

}  // namespace tnas
