#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "tnas/samplers/samplers.hpp"
#include "tnas/search/train.hpp"

namespace tnas {

struct BilevelConfig {
  std::int64_t epochs = 100;
  std::int64_t batch_size = 64;
  double train_fraction = 0.5;
  double arch_lr = 3e-4;
  double arch_weight_decay = 1e-3;
  double arch_beta1 = 0.5;
  double arch_beta2 = 0.999;
  WeightOptimConfig weights;
  SamplerConfig sampler;
  std::uint64_t seed = 0;
  DType dtype = DType::F64;
  std::int64_t eval_batch = 256;
  /// Checksum weights around the architecture step and logits around the
  /// weight step; a change in the frozen group throws ConsistencyError.
  bool verify_phases = true;
};

void validate(const BilevelConfig& cfg);

struct EpochLog {
  std::int64_t epoch = 0;
  std::string arch;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_metric = 0.0;
  double test_metric = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
  std::vector<std::vector<double>> alphas;
};

/// One TangleNAS-style alternating step pair on a supernet.
class BilevelTrainer {
 public:
  BilevelTrainer(SupernetPtr net, const BilevelConfig& cfg);

  struct StepLosses {
    double val = 0.0;
    double train = 0.0;
  };
  /// Architecture update on `val` (with the anchor term when configured),
  /// then a weight update on `train`, each with a fresh mixture sample.
  StepLosses step(const Batch& train, const Batch& val);
  /// Cosine weight LR for the given epoch.
  void begin_epoch(std::int64_t epoch);

  const ArchParams& arch() const { return arch_; }
  Architecture discretized() const;
  const Supernet& net() const { return *net_; }
  std::int64_t steps() const { return step_; }

 private:
  SupernetPtr net_;
  BilevelConfig cfg_;
  ArchParams arch_;
  std::unique_ptr<Optimizer> arch_opt_, weight_opt_;
  Rng sampler_rng_;
  std::int64_t step_ = 0;
};

struct BilevelResult {
  Architecture final_arch;
  std::vector<std::vector<double>> final_alphas;
  std::vector<EpochLog> epochs;
  std::int64_t steps = 0;
};

/// Runs cfg.epochs of alternating updates. Each epoch walks the shuffled
/// train split once; val batches cycle alongside. After every epoch the
/// current argmax architecture is scored on val (and test when given).
BilevelResult train_bilevel(const SupernetPtr& net, const Dataset& train, const Dataset& val,
                            const BilevelConfig& cfg, const Dataset* test = nullptr,
                            const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace tnas
