#pragma once

#include <cstdint>
#include <vector>

#include "tnas/spaces/supernet.hpp"

namespace tnas {

struct ConvMacroConfig {
  std::int64_t num_classes = 10;
  std::int64_t in_channels = 1;
  /// Divides every channel choice; 1 gives the published widths.
  std::int64_t channel_divisor = 1;
  std::vector<std::int64_t> kernels = {3, 5, 7};
  std::vector<std::int64_t> strides = {1, 2, 2, 2};
  std::int64_t image_size = 8;
  SupernetMode mode = SupernetMode::WE;
  std::uint64_t seed = 0;
  DType dtype = DType::F64;
};

/// Published channel choices per layer before the divisor.
std::vector<std::vector<std::int64_t>> conv_macro_channels();

/// Four conv layers, each searching kernel size and output channels on one
/// entangled weight; ReLU after each; global pool and a linear head.
SupernetPtr build_toy_conv_macro(const ConvMacroConfig& cfg = {});

}  // namespace tnas
