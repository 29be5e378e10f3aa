#pragma once

#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace tnas {

/// One line of a results file. Every key is always written; test_metric is
/// null when no test split was scored.
struct ResultRecord {
  std::string run_id;
  std::string method;
  std::string space;
  std::string kind;  // epoch | eval | final | benchmark
  std::string architecture;
  std::uint64_t seed = 0;
  double val_metric = 0.0;
  double test_metric = std::numeric_limits<double>::quiet_NaN();
  std::int64_t epoch = -1;
  double wall_seconds = 0.0;
  std::int64_t param_count = 0;
  std::string mode;
  /// Per-dim architecture logits (epoch rows of gradient searches).
  std::map<std::string, std::vector<double>> alphas;
};

nlohmann::json to_json(const ResultRecord& r);
ResultRecord record_from_json(const nlohmann::json& j);
/// Canonical line without wall-clock fields, for reproducibility checks.
std::string stable_line(const ResultRecord& r);

/// Append-only JSON-lines writer; flushes after every record.
class ResultWriter {
 public:
  explicit ResultWriter(const std::string& path, bool truncate = false);
  void write(const ResultRecord& r);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ofstream out_;
};

/// Reads every complete line; an unterminated final line (interrupted
/// write) is ignored.
std::vector<ResultRecord> read_results(const std::string& path);

/// 16 hex digits of FNV-1a over the compact JSON dump.
std::string config_hash(const nlohmann::json& config);
/// Hash of the library sources this binary was built from.
std::string code_hash();

/// Resolved configuration of a run plus provenance of the code.
nlohmann::json make_manifest(const std::string& command, const std::string& space,
                             std::uint64_t seed, const nlohmann::json& config);
void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

}  // namespace tnas
