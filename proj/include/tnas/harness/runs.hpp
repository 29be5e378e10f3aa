#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tnas/harness/records.hpp"
#include "tnas/harness/tasks.hpp"
#include "tnas/search/bilevel.hpp"
#include "tnas/search/posthoc.hpp"
#include "tnas/search/spos.hpp"

namespace tnas {

TaskConfig task_from_json(const nlohmann::json& j);

// Gradient search ------------------------------------------------------------

inline const std::vector<std::string>& search_optimizers() {
  static const std::vector<std::string> v = {"tanglenas-drnas", "tanglenas-darts", "tanglenas-gdas",
                                             "drnas-ws"};
  return v;
}

struct SearchRunConfig {
  TaskConfig task;
  /// Sets mode and sampler: tanglenas-* search the WE supernet with the
  /// DrNAS (Dirichlet + anchor), DARTS (softmax) or GDAS (Gumbel-ST, tau
  /// 10 -> 0.1) relaxation; drnas-ws is DrNAS on the WS supernet.
  std::string optimizer = "tanglenas-drnas";
  BilevelConfig bilevel;
  std::uint64_t seed = 0;
};

/// Applies the optimizer preset to mode and sampler (ConfigError if unknown).
void apply_optimizer(SearchRunConfig& cfg);
nlohmann::json to_json(const SearchRunConfig& cfg);
SearchRunConfig search_config_from_json(const nlohmann::json& j);

struct SearchRunResult {
  Architecture arch;
  SupernetPtr net;
  std::vector<std::vector<double>> alphas;
  std::vector<ResultRecord> rows;
};

/// Splits the task's train set by train_fraction (seeded), runs bi-level
/// search, emits one epoch row per epoch and a final row. Rows go to
/// `writer` when given. A non-empty checkpoint path receives the final
/// logits (alpha/<dim>) and weights (w/<name>).
SearchRunResult run_search(const SearchRunConfig& cfg, ResultWriter* writer = nullptr,
                           const std::string& checkpoint = "");

// Two-stage --------------------------------------------------------------------

struct SposRunConfig {
  TaskConfig task;
  SposConfig spos;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const SposRunConfig& cfg);
SposRunConfig spos_config_from_json(const nlohmann::json& j);

/// SPOS training on the train part of the split. Epoch rows carry the val
/// accuracy of the largest path on the held-out part.
SupernetPtr run_spos(const SposRunConfig& cfg, ResultWriter* writer = nullptr,
                     const std::string& checkpoint = "");

struct PosthocRunConfig {
  TaskConfig task;
  /// random-search | evolve
  std::string method = "random-search";
  std::int64_t samples = 100;
  EvolutionConfig evolution;
  std::uint64_t seed = 0;
  /// Must match the SPOS run so candidates are scored on its held-out part.
  double train_fraction = 0.5;
};

nlohmann::json to_json(const PosthocRunConfig& cfg);

struct PosthocRunResult {
  SearchTrace trace;
  std::vector<ResultRecord> rows;
};

/// Scores candidates with `eval` and emits one eval row per distinct
/// evaluation plus a final row; `test_of` gives the final test metric.
PosthocRunResult run_posthoc(const PosthocRunConfig& cfg, const SearchSpaceSpec& spec,
                             const ArchEvaluator& eval,
                             const std::function<double(const Architecture&)>& test_of,
                             ResultWriter* writer = nullptr);

/// Post-hoc search over a supernet trained by run_spos (weights in hand).
PosthocRunResult run_posthoc_supernet(const PosthocRunConfig& cfg, const SupernetPtr& net,
                                      ResultWriter* writer = nullptr);

// Checkpoints -------------------------------------------------------------------

void save_supernet(const std::string& path, const Supernet& net,
                   const std::vector<std::vector<double>>* alphas = nullptr);
/// Copies w/<name> tensors into the supernet; ConsistencyError on a missing
/// name or shape mismatch.
void load_supernet_weights(const std::string& path, const Supernet& net);
/// Architecture from the alpha/<dim> tensors of a checkpoint.
Architecture discretize_checkpoint(const std::string& path);

}  // namespace tnas
