#include "tnas/search/posthoc.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "tnas/core/errors.hpp"

namespace tnas {

ArchEvaluator inherited_evaluator(const SupernetPtr& net, const Dataset& val, std::int64_t batch_size) {
  return [net, val, batch_size](const Architecture& a) {
    return evaluate_inherited(*net, a, val, batch_size).accuracy;
  };
}

namespace {

bool better(double m, const std::string& s, double best, const std::string& best_s) {
  return m > best || (m == best && s < best_s);
}

/// Memoised evaluation plus bookkeeping shared by both searches.
class Tracker {
 public:
  Tracker(const SearchSpaceSpec& spec, const ArchEvaluator& eval) : spec_(spec), eval_(eval) {}

  double operator()(const Architecture& a) {
    a.validate(spec_);
    const auto key = a.to_string();
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    const double m = eval_(a);
    if (!std::isfinite(m)) throw EvaluationError("architecture metric is not finite: " + key);
    cache_.emplace(key, m);
    trace_.evaluated.emplace_back(a, m);
    if (trace_.evaluated.size() == 1 || better(m, key, trace_.best_metric, best_key_)) {
      trace_.best = a;
      trace_.best_metric = m;
      best_key_ = key;
    }
    trace_.best_so_far.push_back(trace_.best_metric);
    return m;
  }

  std::int64_t evaluations() const { return static_cast<std::int64_t>(cache_.size()); }
  bool seen(const Architecture& a) const { return cache_.count(a.to_string()) > 0; }
  SearchTrace& trace() { return trace_; }

 private:
  const SearchSpaceSpec& spec_;
  const ArchEvaluator& eval_;
  std::map<std::string, double> cache_;
  SearchTrace trace_;
  std::string best_key_;
};

}  // namespace

SearchTrace random_search(const SearchSpaceSpec& spec, const ArchEvaluator& eval,
                          std::int64_t num_samples, std::uint64_t seed) {
  if (num_samples < 1) throw ConfigError("random search needs at least one sample");
  Rng rng(seed);
  Tracker track(spec, eval);
  const bool distinct = num_samples <= spec.cardinality();
  std::set<std::string> drawn;
  for (std::int64_t i = 0; i < num_samples; ++i) {
    auto a = Architecture::random(spec, rng);
    while (distinct && drawn.count(a.to_string()) > 0) a = Architecture::random(spec, rng);
    drawn.insert(a.to_string());
    track(a);
    track.trace().generation_best.push_back(track.trace().best_metric);
  }
  return std::move(track.trace());
}

void validate(const EvolutionConfig& cfg) {
  if (cfg.population < 2) throw ConfigError("population must be >= 2");
  if (cfg.generations < 0) throw ConfigError("generations must be >= 0");
  for (double p : {cfg.mutation_prob, cfg.crossover_prob}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("probabilities must lie in [0, 1]");
  }
  if (!(cfg.parent_fraction > 0.0 && cfg.parent_fraction <= 1.0)) {
    throw ConfigError("parent fraction must lie in (0, 1]");
  }
  if (cfg.elitism < 0 || cfg.elitism > cfg.population) throw ConfigError("elitism out of range");
  if (cfg.max_evaluations < 0) throw ConfigError("max_evaluations must be >= 0");
}

SearchTrace evolutionary_search(const SearchSpaceSpec& spec, const ArchEvaluator& eval,
                                const EvolutionConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  Tracker track(spec, eval);
  auto budget_left = [&] { return cfg.max_evaluations == 0 || track.evaluations() < cfg.max_evaluations; };

  struct Member {
    Architecture arch;
    double metric;
    std::string key;
  };
  std::vector<Member> pop;
  for (std::int64_t i = 0; i < cfg.population && budget_left(); ++i) {
    auto a = Architecture::random(spec, rng);
    const double m = track(a);
    pop.push_back({a, m, a.to_string()});
  }
  auto rank = [](std::vector<Member>& v) {
    std::sort(v.begin(), v.end(), [](const Member& x, const Member& y) {
      return better(x.metric, x.key, y.metric, y.key);
    });
  };
  rank(pop);
  track.trace().generation_best.push_back(track.trace().best_metric);

  const std::size_t ndims = spec.dims.size();
  for (std::int64_t g = 0; g < cfg.generations && budget_left(); ++g) {
    const auto nparents = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(std::ceil(cfg.parent_fraction * static_cast<double>(pop.size()))));
    std::vector<Member> next(pop.begin(), pop.begin() + std::min<std::int64_t>(cfg.elitism, pop.size()));
    while (static_cast<std::int64_t>(next.size()) < cfg.population && budget_left()) {
      const auto& p1 = pop[static_cast<std::size_t>(rng.uniform_int(nparents))].arch;
      auto idx = p1.indices(spec);
      if (nparents > 1 && rng.bernoulli(cfg.crossover_prob)) {
        const auto other = pop[static_cast<std::size_t>(rng.uniform_int(nparents))].arch.indices(spec);
        for (std::size_t d = 0; d < ndims; ++d)
          if (rng.bernoulli(0.5)) idx[d] = other[d];
      }
      for (std::size_t d = 0; d < ndims; ++d) {
        if (rng.bernoulli(cfg.mutation_prob)) {
          idx[d] = rng.uniform_int(static_cast<std::int64_t>(spec.dims[d].size()));
        }
      }
      auto child = Architecture::from_indices(spec, idx);
      const double m = track(child);
      next.push_back({child, m, child.to_string()});
    }
    pop = std::move(next);
    rank(pop);
    track.trace().generation_best.push_back(track.trace().best_metric);
  }
  return std::move(track.trace());
}

}  // namespace tnas
