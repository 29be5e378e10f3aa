#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tnas/spaces/supernet.hpp"

namespace tnas {

struct LmChoices {
  std::vector<std::int64_t> embed, heads, ratio, layers;
};

/// "full": embed {384,576,768}, heads {6,8,12}, ratio {2,3,4}, layers {5,6,7}.
/// "desk": embed {32,48,64}, heads {2,4}, ratio {2,4}, layers {2,3,4}.
LmChoices lm_preset(const std::string& preset);

struct TinyLmConfig {
  std::string preset = "desk";
  std::int64_t vocab = 64;
  std::int64_t context = 32;
  SupernetMode mode = SupernetMode::WE;
  std::uint64_t seed = 0;
  DType dtype = DType::F64;
};

/// Decoder-only pre-norm transformer searching embed width, head count,
/// MLP ratio and depth. Depth mixes the head outputs of layer prefixes.
SupernetPtr build_tiny_lm_space(const TinyLmConfig& cfg = {});

}  // namespace tnas
