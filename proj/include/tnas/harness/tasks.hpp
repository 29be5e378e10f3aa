#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "tnas/harness/dataset.hpp"
#include "tnas/search/train.hpp"

namespace tnas {

/// A search space paired with the data it is trained on.
struct TaskConfig {
  /// toy_conv_macro | toy_cell | tiny_lm_desk | tiny_lm_full
  std::string space = "toy_conv_macro";
  /// planted_kernel | planted_channel | char_grammar | idx:<dir>; empty picks
  /// planted_kernel for image spaces and char_grammar for the LM.
  std::string data;
  SupernetMode mode = SupernetMode::WE;
  /// Conv-macro widths are the published lists divided by this.
  std::int64_t channel_divisor = 8;
  std::int64_t cell_channels = 8;
  std::int64_t context = 16;
  std::uint64_t data_seed = 0;
  DType dtype = DType::F64;
};

nlohmann::json to_json(const TaskConfig& t);
/// Throws ConfigError on unknown names.
void validate(const TaskConfig& t);
std::string resolved_data(const TaskConfig& t);

DataSplits load_task_data(const TaskConfig& t);
/// Builds supernets sized for `data` (classes, channels, image side, vocab).
SupernetFactory make_factory(const TaskConfig& t, const DataSplits& data);

}  // namespace tnas
