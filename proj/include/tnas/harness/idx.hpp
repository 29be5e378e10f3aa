#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tnas/harness/dataset.hpp"

namespace tnas {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Reads an IDX image file ([N,H,W] unsigned bytes) and its label file.
/// Pixels are scaled to [0,1]. Bad magic -> FormatError; truncated payload or
/// an image/label count mismatch -> ConsistencyError; a label outside
/// [0, num_classes) -> ValidationError; unreadable file -> ConfigError.
Dataset load_idx_images(const std::string& images_path, const std::string& labels_path,
                        std::int64_t num_classes = 10);

/// Writes a single-channel image dataset as IDX. Pixels are stored as
/// round(255 * p) clamped to [0,255].
void write_idx_images(const Dataset& ds, const std::string& images_path,
                      const std::string& labels_path);

/// Fashion-MNIST file names inside `dir`; val is a seeded holdout of train.
DataSplits load_idx_directory(const std::string& dir, double val_fraction, std::uint64_t seed);

}  // namespace tnas
