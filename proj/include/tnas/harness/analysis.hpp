#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "tnas/spaces/supernet.hpp"

namespace tnas {

/// Linear centered kernel alignment of X[n,d1] and Y[n,d2] (rows are
/// samples). Columns are centered internally. Throws PreconditionError for
/// n < 2, DimensionError for differing n and EvaluationError when either
/// input has zero variance.
double linear_cka(const DiffArray& x, const DiffArray& y);

/// Numeric matrix from text: one row per line, values split by commas or
/// whitespace. Throws FormatError on ragged rows or bad numbers.
DiffArray read_feature_matrix(const std::string& path);

struct MemoryReport {
  std::string space;
  std::string mode;
  std::int64_t param_count = 0;
  std::int64_t param_bytes = 0;
  /// Parameters of the largest architecture (union of maximal paths for
  /// spaces where no single path covers an entanglement group).
  std::int64_t largest_arch_params = 0;
  /// Elements of every per-example intermediate along one mixture forward
  /// (weight-only work excluded).
  std::int64_t activation_elements = 0;
  std::int64_t activation_bytes = 0;
};

MemoryReport memory_account(const Supernet& net);
nlohmann::json to_json(const MemoryReport& m);
/// param_count(ws) / param_count(we).
double ws_we_ratio(const MemoryReport& we, const MemoryReport& ws);

}  // namespace tnas
