#include "tnas/harness/report.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "tnas/core/errors.hpp"

namespace tnas {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

}  // namespace

Report build_report(const std::vector<ResultRecord>& rows) {
  if (rows.empty()) throw PreconditionError("report needs at least one result row");
  Report rep;
  rep.space = rows.front().space;
  for (const auto& r : rows) {
    if (r.space != rep.space) {
      throw ConsistencyError("refusing to aggregate rows from spaces " + rep.space + " and " +
                             r.space);
    }
  }

  // (a) final rows by method
  std::map<std::string, std::vector<const ResultRecord*>> finals;
  for (const auto& r : rows) {
    if (r.kind == "final") finals[r.method].push_back(&r);
  }
  for (const auto& [method, rs] : finals) {
    MethodSummary s;
    s.method = method;
    s.n = static_cast<std::int64_t>(rs.size());
    const bool test = std::all_of(rs.begin(), rs.end(),
                                  [](const ResultRecord* r) { return std::isfinite(r->test_metric); });
    s.metric = test ? "test" : "val";
    double sum = 0.0;
    for (const auto* r : rs) sum += test ? r->test_metric : r->val_metric;
    s.mean = sum / static_cast<double>(s.n);
    if (s.n < 2) {
      s.std = kNaN;
    } else {
      double ss = 0.0;
      for (const auto* r : rs) {
        const double d = (test ? r->test_metric : r->val_metric) - s.mean;
        ss += d * d;
      }
      s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
    }
    rep.summaries.push_back(s);
  }

  // (b) and (c), in order of first appearance per run
  std::map<std::pair<std::string, std::string>, std::size_t> curve_at;
  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> traj_at;
  for (const auto& r : rows) {
    if (r.kind != "epoch" && r.kind != "eval") continue;
    const auto key = std::make_pair(r.method, r.run_id);
    auto it = curve_at.find(key);
    if (it == curve_at.end()) {
      it = curve_at.emplace(key, rep.curves.size()).first;
      rep.curves.push_back({r.method, r.run_id, {}, {}});
    }
    auto& c = rep.curves[it->second];
    const double prev = c.best.empty() ? -std::numeric_limits<double>::infinity() : c.best.back();
    c.step.push_back(r.epoch);
    c.best.push_back(std::isfinite(r.val_metric) ? std::max(prev, r.val_metric) : prev);

    if (r.kind != "epoch") continue;
    for (const auto& [dim, a] : r.alphas) {
      const auto tk = std::make_tuple(r.method, r.run_id, dim);
      auto t = traj_at.find(tk);
      if (t == traj_at.end()) {
        t = traj_at.emplace(tk, rep.trajectories.size()).first;
        rep.trajectories.push_back({r.method, r.run_id, dim, {}, {}});
      }
      rep.trajectories[t->second].epoch.push_back(r.epoch);
      rep.trajectories[t->second].alphas.push_back(a);
    }
  }
  return rep;
}

Report build_report(const std::vector<std::string>& paths) {
  if (paths.empty()) throw PreconditionError("report needs at least one results file");
  std::vector<ResultRecord> rows;
  for (const auto& p : paths) {
    auto part = read_results(p);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  return build_report(rows);
}

std::string format_text(const Report& r) {
  std::ostringstream o;
  o << "space " << r.space << "\n\n";
  o << std::left << std::setw(22) << "method" << std::setw(6) << "n" << std::setw(8) << "metric"
    << "mean +- std\n";
  o << std::fixed << std::setprecision(4);
  for (const auto& s : r.summaries) {
    o << std::setw(22) << s.method << std::setw(6) << s.n << std::setw(8) << s.metric << s.mean
      << " +- ";
    if (std::isfinite(s.std)) {
      o << s.std;
    } else {
      o << "n/a";
    }
    o << "\n";
  }
  if (!r.curves.empty()) {
    o << "\nbest-so-far (method run: last step -> best)\n";
    for (const auto& c : r.curves) {
      o << "  " << c.method << " " << c.run_id << ": " << c.step.size() << " points, step "
        << c.step.back() << " -> " << c.best.back() << "\n";
    }
  }
  if (!r.trajectories.empty()) {
    o << "\nfinal architecture logits\n";
    for (const auto& t : r.trajectories) {
      o << "  " << t.method << " " << t.run_id << " " << t.dim << ":";
      for (double a : t.alphas.back()) o << " " << a;
      o << "\n";
    }
  }
  return o.str();
}

std::string format_records(const Report& r) {
  std::ostringstream o;
  for (const auto& s : r.summaries) {
    nlohmann::json j = {{"type", "summary"}, {"space", r.space}, {"method", s.method},
                        {"n", s.n},          {"metric", s.metric}, {"mean", num(s.mean)},
                        {"std", num(s.std)}};
    o << j.dump() << "\n";
  }
  for (const auto& c : r.curves) {
    nlohmann::json j = {{"type", "curve"}, {"space", r.space}, {"method", c.method},
                        {"run_id", c.run_id}, {"step", c.step}};
    j["best"] = nlohmann::json::array();
    for (double b : c.best) j["best"].push_back(num(b));
    o << j.dump() << "\n";
  }
  for (const auto& t : r.trajectories) {
    nlohmann::json j = {{"type", "trajectory"}, {"space", r.space}, {"method", t.method},
                        {"run_id", t.run_id},   {"dim", t.dim},     {"epoch", t.epoch},
                        {"alphas", t.alphas}};
    o << j.dump() << "\n";
  }
  return o.str();
}

}  // namespace tnas
