#include "tnas/harness/analysis.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "tnas/core/errors.hpp"
#include "tnas/core/ops.hpp"
#include "tnas/core/tape.hpp"

namespace tnas {

namespace {

// Column-centered copy, row-major [n,d].
std::vector<double> centered(const DiffArray& a, std::int64_t n, std::int64_t d) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (std::int64_t j = 0; j < d; ++j) {
    double m = 0.0;
    for (std::int64_t i = 0; i < n; ++i) m += out[i * d + j];
    m /= static_cast<double>(n);
    for (std::int64_t i = 0; i < n; ++i) out[i * d + j] -= m;
  }
  return out;
}

// ||A^T B||_F^2 for A[n,da], B[n,db].
double cross_norm2(const std::vector<double>& a, std::int64_t da, const std::vector<double>& b,
                   std::int64_t db, std::int64_t n) {
  double s = 0.0;
  for (std::int64_t p = 0; p < da; ++p) {
    for (std::int64_t q = 0; q < db; ++q) {
      double m = 0.0;
      for (std::int64_t i = 0; i < n; ++i) m += a[i * da + p] * b[i * db + q];
      s += m * m;
    }
  }
  return s;
}

}  // namespace

double linear_cka(const DiffArray& x, const DiffArray& y) {
  if (x.rank() != 2 || y.rank() != 2) throw DimensionError("linear_cka takes [n,d] matrices");
  const auto n = x.dim(0);
  if (y.dim(0) != n) {
    throw DimensionError("linear_cka: " + std::to_string(n) + " vs " + std::to_string(y.dim(0)) +
                         " samples");
  }
  if (n < 2) throw PreconditionError("linear_cka needs at least 2 samples");
  const auto dx = x.dim(1), dy = y.dim(1);
  const auto xc = centered(x, n, dx);
  const auto yc = centered(y, n, dy);
  const double xx = std::sqrt(cross_norm2(xc, dx, xc, dx, n));
  const double yy = std::sqrt(cross_norm2(yc, dy, yc, dy, n));
  if (xx == 0.0 || yy == 0.0) {
    throw EvaluationError("linear_cka undefined: an input has zero variance");
  }
  // Sum the cross term in a fixed orientation so cka(X,Y) and cka(Y,X) agree.
  const double xy = dx <= dy ? cross_norm2(xc, dx, yc, dy, n) : cross_norm2(yc, dy, xc, dx, n);
  return xy / (xx * yy);
}

DiffArray read_feature_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::vector<double> values;
  std::int64_t rows = 0, cols = -1;
  std::string line;
  while (std::getline(in, line)) {
    for (auto& c : line) {
      if (c == ',') c = ' ';
    }
    std::istringstream s(line);
    std::int64_t k = 0;
    std::string tok;
    while (s >> tok) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size()) throw FormatError(path + ": bad number '" + tok + "'");
      values.push_back(v);
      ++k;
    }
    if (k == 0) continue;
    if (cols >= 0 && k != cols) {
      throw FormatError(path + ": row " + std::to_string(rows + 1) + " has " + std::to_string(k) +
                        " values, expected " + std::to_string(cols));
    }
    cols = k;
    ++rows;
  }
  if (rows == 0) throw FormatError(path + ": no data");
  return DiffArray::from({rows, cols}, std::move(values), DType::F64);
}

MemoryReport memory_account(const Supernet& net) {
  MemoryReport m;
  m.space = net.spec().id;
  m.mode = to_string(net.mode());
  m.param_count = net.param_count();
  const auto weights = net.weights();
  const std::int64_t bytes = !weights.empty() && weights.front().dtype() == DType::F32 ? 4 : 8;
  m.param_bytes = m.param_count * bytes;
  m.largest_arch_params = net.maximal_param_count();

  MixtureWeights mixes;
  for (const auto& d : net.spec().dims) {
    const auto k = static_cast<std::int64_t>(d.size());
    mixes.push_back(DiffArray::parameter({k}, std::vector<double>(k, 1.0 / k)));
  }
  auto traced = [&](const Batch& b) {
    Tape tape;
    {
      Tape::Scope scope(tape);
      net.forward_mixture(b, mixes);
    }
    std::int64_t n = 0;
    for (const auto& r : tape.records()) n += numel(r.output->shape);
    return n;
  };
  // Weight-only work (superposition, padding) is the same at any batch size,
  // so the difference between two examples and one is the per-example part.
  const auto one = net.probe_batch();
  Batch two = one;
  if (one.inputs.defined()) two.inputs = concat({one.inputs, one.inputs}, 0);
  two.tokens.insert(two.tokens.end(), one.tokens.begin(), one.tokens.end());
  two.labels.insert(two.labels.end(), one.labels.begin(), one.labels.end());
  two.batch = 2 * one.batch;
  m.activation_elements = traced(two) - traced(one);
  m.activation_bytes = m.activation_elements * bytes;
  return m;
}

nlohmann::json to_json(const MemoryReport& m) {
  return {{"space", m.space},
          {"mode", m.mode},
          {"param_count", m.param_count},
          {"param_bytes", m.param_bytes},
          {"largest_arch_params", m.largest_arch_params},
          {"activation_elements", m.activation_elements},
          {"activation_bytes", m.activation_bytes}};
}

double ws_we_ratio(const MemoryReport& we, const MemoryReport& ws) {
  return static_cast<double>(ws.param_count) / static_cast<double>(we.param_count);
}

}  // namespace tnas
