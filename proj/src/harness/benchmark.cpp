#include "tnas/harness/benchmark.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "tnas/core/errors.hpp"
#include "tnas/core/rng.hpp"

namespace tnas {

TrainConfig BenchmarkConfig::desk_recipe() {
  TrainConfig t;
  t.epochs = 5;
  t.batch_size = 32;
  t.optim.kind = "sgd";
  t.optim.lr = 0.1;
  t.optim.lr_min = 0.0;
  return t;
}

nlohmann::json to_json(const BenchmarkConfig& cfg) {
  const auto& o = cfg.train.optim;
  return {{"task", to_json(cfg.task)},
          {"train",
           {{"epochs", cfg.train.epochs},
            {"batch_size", cfg.train.batch_size},
            {"optimizer", o.kind},
            {"lr", o.lr},
            {"lr_min", o.lr_min},
            {"momentum", o.momentum},
            {"nesterov", o.nesterov},
            {"weight_decay", o.weight_decay},
            {"betas", {o.beta1, o.beta2}}}},
          {"seeds", cfg.seeds},
          {"budget", cfg.budget},
          {"sample_fraction", cfg.sample_fraction},
          {"sample_seed", cfg.sample_seed}};
}

std::vector<Architecture> benchmark_plan(const SearchSpaceSpec& spec, const BenchmarkConfig& cfg) {
  const auto card = spec.cardinality();
  if (!(cfg.sample_fraction > 0.0 && cfg.sample_fraction <= 1.0)) {
    throw ConfigError("sample_fraction must be in (0, 1]");
  }
  if (cfg.seeds.empty()) throw ConfigError("benchmark needs at least one seed");
  std::vector<std::int64_t> ordinals(static_cast<std::size_t>(card));
  std::iota(ordinals.begin(), ordinals.end(), 0);
  if (cfg.sample_fraction < 1.0) {
    const auto keep = std::max<std::int64_t>(1, std::llround(cfg.sample_fraction * card));
    Rng rng(cfg.sample_seed);
    // partial Fisher-Yates
    for (std::int64_t i = 0; i < keep; ++i) {
      const auto j = i + static_cast<std::int64_t>(rng.uniform_int(card - i));
      std::swap(ordinals[i], ordinals[j]);
    }
    ordinals.resize(static_cast<std::size_t>(keep));
    std::sort(ordinals.begin(), ordinals.end());
  }
  const auto n = static_cast<std::int64_t>(ordinals.size());
  if (cfg.budget > 0 && n > cfg.budget) {
    throw ConfigError("space " + spec.id + " needs " + std::to_string(n) +
                      " trainings per seed, over the budget of " + std::to_string(cfg.budget) +
                      "; give a sampling fraction");
  }
  std::vector<Architecture> plan;
  plan.reserve(ordinals.size());
  for (auto o : ordinals) plan.push_back(Architecture::from_ordinal(spec, o));
  return plan;
}

BenchmarkTable BenchmarkTable::from_records(const std::vector<ResultRecord>& rows) {
  BenchmarkTable t;
  for (const auto& r : rows) {
    if (r.kind != "benchmark") continue;
    t.add(r);
  }
  return t;
}

BenchmarkTable BenchmarkTable::load(const std::string& path) {
  return from_records(read_results(path));
}

void BenchmarkTable::add(const ResultRecord& row) {
  if (space_.empty()) space_ = row.space;
  if (row.space != space_) {
    throw ConsistencyError("benchmark rows from spaces " + space_ + " and " + row.space);
  }
  auto& e = entries_[row.architecture];
  if (e.val.count(row.seed)) {
    throw ConsistencyError("duplicate benchmark row " + row.architecture + " seed " +
                           std::to_string(row.seed));
  }
  e.val[row.seed] = row.val_metric;
  e.test[row.seed] = row.test_metric;
  e.param_count = row.param_count;
  ++rows_;
}

bool BenchmarkTable::has(const Architecture& arch, std::uint64_t seed) const {
  auto it = entries_.find(arch.to_string());
  return it != entries_.end() && it->second.val.count(seed) > 0;
}

namespace {
double mean_of(const std::map<std::uint64_t, double>& m) {
  double s = 0.0;
  for (const auto& [seed, v] : m) s += v;
  return s / static_cast<double>(m.size());
}
}  // namespace

double BenchmarkTable::mean_val(const Architecture& arch) const {
  auto it = entries_.find(arch.to_string());
  if (it == entries_.end()) throw EvaluationError("architecture not in table: " + arch.to_string());
  return mean_of(it->second.val);
}

double BenchmarkTable::mean_test(const Architecture& arch) const {
  auto it = entries_.find(arch.to_string());
  if (it == entries_.end()) throw EvaluationError("architecture not in table: " + arch.to_string());
  return mean_of(it->second.test);
}

double BenchmarkTable::best() const {
  if (entries_.empty()) throw EvaluationError("empty benchmark table");
  double b = -INFINITY;
  for (const auto& [a, e] : entries_) b = std::max(b, mean_of(e.val));
  return b;
}

std::vector<Architecture> BenchmarkTable::optimum() const {
  const double b = best();
  std::vector<Architecture> out;
  for (const auto& [a, e] : entries_) {
    if (mean_of(e.val) == b) out.push_back(Architecture::parse(a));
  }
  return out;
}

ArchEvaluator BenchmarkTable::evaluator() const {
  return [this](const Architecture& a) { return mean_val(a); };
}

BenchmarkTable enumerate_and_train(const BenchmarkConfig& cfg, const std::string& out_path,
                                   bool resume,
                                   const std::function<void(const ResultRecord&)>& on_row) {
  namespace fs = std::filesystem;
  const auto data = load_task_data(cfg.task);
  const auto factory = make_factory(cfg.task, data);
  const auto probe = factory(0);
  const auto& spec = probe->spec();
  const auto plan = benchmark_plan(spec, cfg);

  const auto config = to_json(cfg);
  const auto hash = config_hash(config);
  const std::string manifest_path = out_path + ".manifest.json";

  BenchmarkTable table(spec.id);
  if (fs::exists(out_path)) {
    if (!resume) throw ConfigError(out_path + " exists; resume it or pick another path");
    if (!fs::exists(manifest_path)) throw ConfigError("no manifest next to " + out_path);
    const auto old = read_json(manifest_path);
    if (old.value("config_hash", std::string()) != hash) {
      throw ConfigError("resume refused: config hash " + old.value("config_hash", std::string()) +
                        " on disk differs from " + hash);
    }
    table = BenchmarkTable::from_records(read_results(out_path));
    if (table.rows() > 0 && table.space() != spec.id) {
      throw ConsistencyError(out_path + " holds rows for " + table.space());
    }
    // Drop a torn final line so the next append starts on a fresh line.
    std::string keep;
    {
      std::ifstream in(out_path, std::ios::binary);
      keep.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    const auto cut = keep.find_last_of('\n');
    const auto whole = cut == std::string::npos ? 0 : cut + 1;
    if (whole != keep.size()) fs::resize_file(out_path, whole);
  } else {
    auto manifest = make_manifest("benchmark", spec.id, cfg.seeds.front(), config);
    manifest["config_hash"] = hash;
    write_json(manifest_path, manifest);
  }

  ResultWriter writer(out_path);
  for (const auto& arch : plan) {
    for (auto seed : cfg.seeds) {
      if (table.has(arch, seed)) continue;
      auto tc = cfg.train;
      tc.seed = seed;
      tc.dtype = cfg.task.dtype;
      const auto t0 = std::chrono::steady_clock::now();
      auto net = factory(seed);
      auto model = net->inherit(arch);
      train_model(*model, data.train, tc);
      auto fwd = [&](const Batch& b) { return model->forward(b); };
      const auto val = evaluate(fwd, data.val, 256, tc.dtype);
      const auto test = evaluate(fwd, data.test, 256, tc.dtype);

      ResultRecord r;
      r.run_id = hash;
      r.method = "benchmark";
      r.space = spec.id;
      r.kind = "benchmark";
      r.architecture = arch.to_string();
      r.seed = seed;
      r.val_metric = val.accuracy;
      r.test_metric = test.accuracy;
      r.epoch = tc.epochs;
      r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      r.param_count = model->param_count();
      r.mode = to_string(cfg.task.mode);
      writer.write(r);
      table.add(r);
      if (on_row) on_row(r);
    }
  }
  return table;
}

}  // namespace tnas
