#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tnas/spaces/supernet.hpp"

namespace tnas {

struct ToyCellConfig {
  std::int64_t base_channels = 8;
  std::int64_t num_classes = 10;
  std::int64_t in_channels = 1;
  std::int64_t image_size = 8;
  SupernetMode mode = SupernetMode::WE;
  std::uint64_t seed = 0;
  DType dtype = DType::F64;
};

/// Op names in choice order.
const std::vector<std::string>& toy_cell_ops();

/// Stem, then reduce / normal / reduce cells of three nodes, then a pooled
/// linear head. Each edge picks one of four separable or dilated convs.
/// Both reduce cells follow the same genotype.
SupernetPtr build_toy_cell_space(const ToyCellConfig& cfg = {});

/// `Genotype(normal=[('op', input), ...], normal_concat=range(1, 3), reduce=[...], ...)`
std::string genotype_string(const SearchSpaceSpec& spec, const Architecture& arch);

}  // namespace tnas
