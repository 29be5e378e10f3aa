#pragma once

#include <cstdint>
#include <functional>
#include <memory>

#include "tnas/search/train.hpp"

namespace tnas {

struct SposConfig {
  std::int64_t epochs = 250;
  std::int64_t batch_size = 64;
  double train_fraction = 0.5;
  WeightOptimConfig weights;
  std::uint64_t seed = 0;
  DType dtype = DType::F64;
};

void validate(const SposConfig& cfg);

/// Single-path training: each step samples one architecture uniformly and
/// updates only the elements its slices cover.
class SposTrainer {
 public:
  SposTrainer(SupernetPtr net, const SposConfig& cfg);
  /// Returns the sampled architecture; loss in last_loss().
  Architecture step(const Batch& batch);
  void begin_epoch(std::int64_t epoch);
  double last_loss() const { return last_loss_; }
  std::int64_t steps() const { return step_; }

 private:
  SupernetPtr net_;
  SposConfig cfg_;
  std::unique_ptr<Optimizer> opt_;
  Rng arch_rng_;
  double last_loss_ = 0.0;
  std::int64_t step_ = 0;
};

/// Mean training loss per epoch.
std::vector<double> train_spos(const SupernetPtr& net, const Dataset& train, const SposConfig& cfg,
                               const std::function<void(std::int64_t, double)>& on_epoch = {});

}  // namespace tnas
