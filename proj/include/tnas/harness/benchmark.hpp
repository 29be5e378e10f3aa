#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tnas/harness/records.hpp"
#include "tnas/harness/tasks.hpp"
#include "tnas/search/posthoc.hpp"

namespace tnas {

struct BenchmarkConfig {
  TaskConfig task;
  /// Desk recipe: 5 epochs of SGD (bs 32, lr 0.1 cosine to 0) per architecture.
  TrainConfig train = desk_recipe();
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  /// Most architectures one run may train; 0 = no limit.
  std::int64_t budget = 0;
  /// Share of the space to sample when it does not fit the budget.
  double sample_fraction = 1.0;
  std::uint64_t sample_seed = 0;

  static TrainConfig desk_recipe();
};

nlohmann::json to_json(const BenchmarkConfig& cfg);
/// Architectures a run covers, in ordinal order. Throws ConfigError when the
/// space exceeds the budget and no sampling fraction is given.
std::vector<Architecture> benchmark_plan(const SearchSpaceSpec& spec, const BenchmarkConfig& cfg);

/// Metric table keyed by architecture, with one entry per training seed.
class BenchmarkTable {
 public:
  struct Entry {
    std::map<std::uint64_t, double> val, test;
    std::int64_t param_count = 0;
  };

  BenchmarkTable() = default;
  explicit BenchmarkTable(std::string space) : space_(std::move(space)) {}
  /// Builds from benchmark rows; ConsistencyError on a duplicate (arch, seed)
  /// or rows from different spaces.
  static BenchmarkTable from_records(const std::vector<ResultRecord>& rows);
  static BenchmarkTable load(const std::string& path);

  void add(const ResultRecord& row);
  bool has(const Architecture& arch, std::uint64_t seed) const;
  const std::string& space() const { return space_; }
  std::int64_t rows() const { return rows_; }
  std::int64_t architectures() const { return static_cast<std::int64_t>(entries_.size()); }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  /// Mean val metric over the seeds present; EvaluationError when absent.
  double mean_val(const Architecture& arch) const;
  double mean_test(const Architecture& arch) const;
  /// Every architecture whose mean val metric equals the maximum exactly,
  /// sorted by canonical string.
  std::vector<Architecture> optimum() const;
  double best() const;
  ArchEvaluator evaluator() const;

 private:
  std::string space_;
  std::map<std::string, Entry> entries_;
  std::int64_t rows_ = 0;
};

/// Trains every planned (architecture, seed) pair from scratch and appends one
/// row per pair to `out_path`. A manifest with the config hash sits next to the
/// file as `<out_path>.manifest.json`. With resume, rows already on disk are
/// skipped; a differing config hash is refused (ConfigError). Without resume an
/// existing file is refused too.
BenchmarkTable enumerate_and_train(const BenchmarkConfig& cfg, const std::string& out_path,
                                   bool resume,
                                   const std::function<void(const ResultRecord&)>& on_row = {});

}  // namespace tnas
