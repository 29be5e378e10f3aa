#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include "tnas/core/optim.hpp"
#include "tnas/harness/dataset.hpp"
#include "tnas/spaces/supernet.hpp"

namespace tnas {

struct WeightOptimConfig {
  std::string kind = "sgd";  // sgd | adamw
  double lr = 0.1;
  double lr_min = 0.001;
  double momentum = 0.9;
  bool nesterov = true;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
};

std::unique_ptr<Optimizer> make_optimizer(std::vector<DiffArray> params, const WeightOptimConfig& cfg);

struct Evaluation {
  double accuracy = 0.0;  // top-1 (per token for text)
  double loss = 0.0;      // mean cross-entropy
};

using ForwardFn = std::function<DiffArray(const Batch&)>;

Evaluation evaluate(const ForwardFn& forward, const Dataset& ds, std::int64_t batch_size = 256,
                    DType dtype = DType::F64);
/// Scores the path directly on the supernet's slices.
Evaluation evaluate_path(const Supernet& net, const Architecture& arch, const Dataset& ds,
                         std::int64_t batch_size = 256);
/// Scores a standalone copy of the path's slices; no training.
Evaluation evaluate_inherited(const Supernet& net, const Architecture& arch, const Dataset& ds,
                              std::int64_t batch_size = 256);

struct TrainConfig {
  std::int64_t epochs = 5;
  std::int64_t batch_size = 64;
  WeightOptimConfig optim;
  std::uint64_t seed = 0;
  DType dtype = DType::F64;
};

/// Plain supervised training with a cosine schedule. Throws DivergenceError
/// on a non-finite loss.
void train_model(Model& model, const Dataset& train, const TrainConfig& cfg);

/// Supernet builder keyed by initialisation seed.
using SupernetFactory = std::function<SupernetPtr(std::uint64_t seed)>;

/// Fresh initialisation (factory(seed)), slice out `arch`, train, score on `test`.
Evaluation retrain(const SupernetFactory& factory, const Architecture& arch, const Dataset& train,
                   const Dataset& test, const TrainConfig& cfg);

/// Throws DivergenceError unless v is finite.
void check_finite(double v, const std::string& what, std::int64_t step);

}  // namespace tnas
