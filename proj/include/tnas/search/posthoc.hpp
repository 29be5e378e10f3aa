#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "tnas/search/train.hpp"

namespace tnas {

/// Higher is better.
using ArchEvaluator = std::function<double(const Architecture&)>;

struct SearchTrace {
  Architecture best;
  double best_metric = 0.0;
  /// Every distinct evaluation, in order.
  std::vector<std::pair<Architecture, double>> evaluated;
  /// Best metric after each evaluation.
  std::vector<double> best_so_far;
  /// Best metric after each generation (ES) or sample (random search).
  std::vector<double> generation_best;
};

/// Scores architectures by inheriting supernet slices, on `val`.
ArchEvaluator inherited_evaluator(const SupernetPtr& net, const Dataset& val,
                                  std::int64_t batch_size = 256);

/// Draws num_samples architectures uniformly (distinct while the space
/// allows) and keeps the best; ties go to the smaller canonical string.
SearchTrace random_search(const SearchSpaceSpec& spec, const ArchEvaluator& eval,
                          std::int64_t num_samples, std::uint64_t seed);

struct EvolutionConfig {
  std::int64_t population = 20;
  std::int64_t generations = 10;
  double parent_fraction = 0.25;
  double mutation_prob = 0.1;
  double crossover_prob = 0.5;
  std::int64_t elitism = 1;
  /// 0 = unlimited; otherwise stop once this many distinct evaluations ran.
  std::int64_t max_evaluations = 0;
  std::uint64_t seed = 0;
};

void validate(const EvolutionConfig& cfg);

/// Uniform initial population; each generation keeps the elite, takes the
/// top parent fraction, and fills up with uniform-crossover / per-dim
/// mutation children. Evaluations are cached per architecture.
SearchTrace evolutionary_search(const SearchSpaceSpec& spec, const ArchEvaluator& eval,
                                const EvolutionConfig& cfg);

}  // namespace tnas
