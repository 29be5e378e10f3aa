#include "tnas/harness/runs.hpp"

#include <algorithm>
#include <cmath>

#include "tnas/core/checkpoint.hpp"
#include "tnas/core/errors.hpp"

namespace tnas {

namespace {

using json = nlohmann::json;

json weights_json(const WeightOptimConfig& o) {
  return {{"kind", o.kind},         {"lr", o.lr},         {"lr_min", o.lr_min},
          {"momentum", o.momentum}, {"nesterov", o.nesterov}, {"weight_decay", o.weight_decay},
          {"beta1", o.beta1},       {"beta2", o.beta2}};
}

WeightOptimConfig weights_from(const json& j) {
  WeightOptimConfig o;
  o.kind = j.value("kind", o.kind);
  o.lr = j.value("lr", o.lr);
  o.lr_min = j.value("lr_min", o.lr_min);
  o.momentum = j.value("momentum", o.momentum);
  o.nesterov = j.value("nesterov", o.nesterov);
  o.weight_decay = j.value("weight_decay", o.weight_decay);
  o.beta1 = j.value("beta1", o.beta1);
  o.beta2 = j.value("beta2", o.beta2);
  return o;
}

std::string anneal_name(AnnealSchedule a) {
  switch (a) {
    case AnnealSchedule::None: return "none";
    case AnnealSchedule::Linear: return "linear";
    case AnnealSchedule::Exponential: return "exponential";
  }
  return "?";
}

AnnealSchedule parse_anneal(const std::string& s) {
  if (s == "none") return AnnealSchedule::None;
  if (s == "linear") return AnnealSchedule::Linear;
  if (s == "exponential") return AnnealSchedule::Exponential;
  throw ConfigError("unknown anneal schedule '" + s + "'");
}

json sampler_json(const SamplerConfig& s) {
  return {{"strategy", to_string(s.strategy)},
          {"tau", s.tau},
          {"anneal", anneal_name(s.anneal)},
          {"tau_start", s.tau_start},
          {"tau_end", s.tau_end},
          {"anneal_steps", s.anneal_steps},
          {"dirichlet_epsilon", s.dirichlet_epsilon},
          {"regularization", s.regularization == Regularization::L2Anchor ? "l2_anchor" : "none"},
          {"reg_scale", s.reg_scale}};
}

SamplerConfig sampler_from(const json& j) {
  SamplerConfig s;
  s.strategy = parse_strategy(j.value("strategy", to_string(s.strategy)));
  s.tau = j.value("tau", s.tau);
  s.anneal = parse_anneal(j.value("anneal", std::string("none")));
  s.tau_start = j.value("tau_start", s.tau_start);
  s.tau_end = j.value("tau_end", s.tau_end);
  s.anneal_steps = j.value("anneal_steps", s.anneal_steps);
  s.dirichlet_epsilon = j.value("dirichlet_epsilon", s.dirichlet_epsilon);
  const auto reg = j.value("regularization", std::string("none"));
  if (reg != "none" && reg != "l2_anchor") throw ConfigError("unknown regularization '" + reg + "'");
  s.regularization = reg == "l2_anchor" ? Regularization::L2Anchor : Regularization::None;
  s.reg_scale = j.value("reg_scale", s.reg_scale);
  return s;
}

json bilevel_json(const BilevelConfig& b) {
  return {{"epochs", b.epochs},
          {"batch_size", b.batch_size},
          {"train_fraction", b.train_fraction},
          {"arch_lr", b.arch_lr},
          {"arch_weight_decay", b.arch_weight_decay},
          {"arch_beta1", b.arch_beta1},
          {"arch_beta2", b.arch_beta2},
          {"weights", weights_json(b.weights)},
          {"sampler", sampler_json(b.sampler)},
          {"eval_batch", b.eval_batch},
          {"verify_phases", b.verify_phases}};
}

BilevelConfig bilevel_from(const json& j) {
  BilevelConfig b;
  b.epochs = j.value("epochs", b.epochs);
  b.batch_size = j.value("batch_size", b.batch_size);
  b.train_fraction = j.value("train_fraction", b.train_fraction);
  b.arch_lr = j.value("arch_lr", b.arch_lr);
  b.arch_weight_decay = j.value("arch_weight_decay", b.arch_weight_decay);
  b.arch_beta1 = j.value("arch_beta1", b.arch_beta1);
  b.arch_beta2 = j.value("arch_beta2", b.arch_beta2);
  if (j.contains("weights")) b.weights = weights_from(j["weights"]);
  if (j.contains("sampler")) b.sampler = sampler_from(j["sampler"]);
  b.eval_batch = j.value("eval_batch", b.eval_batch);
  b.verify_phases = j.value("verify_phases", b.verify_phases);
  return b;
}

void emit(ResultWriter* writer, std::vector<ResultRecord>& rows, ResultRecord r) {
  if (writer != nullptr) writer->write(r);
  rows.push_back(std::move(r));
}

}  // namespace

TaskConfig task_from_json(const json& j) {
  TaskConfig t;
  t.space = j.value("space", t.space);
  t.data = j.value("data", t.data);
  t.mode = parse_mode(j.value("mode", to_string(t.mode)));
  t.channel_divisor = j.value("channel_divisor", t.channel_divisor);
  t.cell_channels = j.value("cell_channels", t.cell_channels);
  t.context = j.value("context", t.context);
  t.data_seed = j.value("data_seed", t.data_seed);
  const auto dt = j.value("dtype", std::string("f64"));
  if (dt != "f64" && dt != "f32") throw ConfigError("unknown dtype '" + dt + "'");
  t.dtype = dt == "f64" ? DType::F64 : DType::F32;
  validate(t);
  return t;
}

void apply_optimizer(SearchRunConfig& cfg) {
  auto& s = cfg.bilevel.sampler;
  const auto& o = cfg.optimizer;
  if (o == "tanglenas-drnas" || o == "drnas-ws") {
    cfg.task.mode = o == "drnas-ws" ? SupernetMode::WS : SupernetMode::WE;
    s.strategy = SamplerStrategy::Dirichlet;
    s.regularization = Regularization::L2Anchor;
    if (s.reg_scale == 0.0) s.reg_scale = 1e-3;
  } else if (o == "tanglenas-darts") {
    cfg.task.mode = SupernetMode::WE;
    s.strategy = SamplerStrategy::Softmax;
  } else if (o == "tanglenas-gdas") {
    cfg.task.mode = SupernetMode::WE;
    s.strategy = SamplerStrategy::GumbelST;
    if (s.anneal == AnnealSchedule::None) {
      s.anneal = AnnealSchedule::Linear;
      s.tau_start = 10.0;
      s.tau_end = 0.1;
    }
  } else {
    throw ConfigError("unknown optimizer '" + o + "'");
  }
}

json to_json(const SearchRunConfig& cfg) {
  return {{"task", to_json(cfg.task)},
          {"optimizer", cfg.optimizer},
          {"bilevel", bilevel_json(cfg.bilevel)},
          {"seed", cfg.seed}};
}

SearchRunConfig search_config_from_json(const json& j) {
  SearchRunConfig c;
  if (j.contains("task")) c.task = task_from_json(j["task"]);
  c.optimizer = j.value("optimizer", c.optimizer);
  if (j.contains("bilevel")) c.bilevel = bilevel_from(j["bilevel"]);
  c.seed = j.value("seed", c.seed);
  return c;
}

SearchRunResult run_search(const SearchRunConfig& in, ResultWriter* writer,
                           const std::string& checkpoint) {
  auto cfg = in;
  apply_optimizer(cfg);
  cfg.bilevel.seed = cfg.seed;
  cfg.bilevel.sampler.seed = cfg.seed;
  cfg.bilevel.dtype = cfg.task.dtype;
  const auto data = load_task_data(cfg.task);
  auto [train, val] = split_dataset(data.train, cfg.bilevel.train_fraction, cfg.seed);
  if (cfg.bilevel.sampler.anneal != AnnealSchedule::None && cfg.bilevel.sampler.anneal_steps == 0) {
    const auto per_epoch = (train.size() + cfg.bilevel.batch_size - 1) / cfg.bilevel.batch_size;
    cfg.bilevel.sampler.anneal_steps = cfg.bilevel.epochs * per_epoch;
  }
  validate(cfg.bilevel);

  SearchRunResult res;
  res.net = make_factory(cfg.task, data)(cfg.seed);
  const auto& spec = res.net->spec();
  const auto run_id = config_hash(to_json(cfg));

  auto base = [&] {
    ResultRecord r;
    r.run_id = run_id;
    r.method = cfg.optimizer;
    r.space = spec.id;
    r.seed = cfg.seed;
    r.mode = to_string(cfg.task.mode);
    return r;
  };
  auto alphas_of = [&](const std::vector<std::vector<double>>& a) {
    std::map<std::string, std::vector<double>> m;
    for (std::size_t i = 0; i < a.size(); ++i) m[spec.dims[i].name] = a[i];
    return m;
  };

  double elapsed = 0.0;
  auto result = train_bilevel(res.net, train, val, cfg.bilevel, &data.test, [&](const EpochLog& log) {
    auto r = base();
    r.kind = "epoch";
    r.architecture = log.arch;
    r.val_metric = log.val_metric;
    r.test_metric = log.test_metric;
    r.epoch = log.epoch;
    elapsed += log.seconds;
    r.wall_seconds = elapsed;
    r.param_count = res.net->param_count(Architecture::parse(log.arch));
    r.alphas = alphas_of(log.alphas);
    emit(writer, res.rows, std::move(r));
  });

  res.arch = result.final_arch;
  res.alphas = result.final_alphas;
  auto r = base();
  r.kind = "final";
  r.architecture = res.arch.to_string();
  if (!result.epochs.empty()) {
    r.val_metric = result.epochs.back().val_metric;
    r.test_metric = result.epochs.back().test_metric;
    r.epoch = result.epochs.back().epoch;
  } else {
    r.val_metric = evaluate_path(*res.net, res.arch, val).accuracy;
    r.test_metric = evaluate_path(*res.net, res.arch, data.test).accuracy;
  }
  r.wall_seconds = elapsed;
  r.param_count = res.net->param_count(res.arch);
  r.alphas = alphas_of(res.alphas);
  emit(writer, res.rows, std::move(r));

  if (!checkpoint.empty()) save_supernet(checkpoint, *res.net, &res.alphas);
  return res;
}

json to_json(const SposRunConfig& cfg) {
  const auto& s = cfg.spos;
  return {{"task", to_json(cfg.task)},
          {"spos",
           {{"epochs", s.epochs},
            {"batch_size", s.batch_size},
            {"train_fraction", s.train_fraction},
            {"weights", weights_json(s.weights)}}},
          {"seed", cfg.seed}};
}

SposRunConfig spos_config_from_json(const json& j) {
  SposRunConfig c;
  if (j.contains("task")) c.task = task_from_json(j["task"]);
  if (j.contains("spos")) {
    const auto& s = j["spos"];
    c.spos.epochs = s.value("epochs", c.spos.epochs);
    c.spos.batch_size = s.value("batch_size", c.spos.batch_size);
    c.spos.train_fraction = s.value("train_fraction", c.spos.train_fraction);
    if (s.contains("weights")) c.spos.weights = weights_from(s["weights"]);
  }
  c.seed = j.value("seed", c.seed);
  return c;
}

SupernetPtr run_spos(const SposRunConfig& in, ResultWriter* writer, const std::string& checkpoint) {
  auto cfg = in;
  cfg.task.mode = SupernetMode::WE;
  cfg.spos.seed = cfg.seed;
  cfg.spos.dtype = cfg.task.dtype;
  validate(cfg.spos);
  const auto data = load_task_data(cfg.task);
  auto [train, val] = split_dataset(data.train, cfg.spos.train_fraction, cfg.seed);
  auto net = make_factory(cfg.task, data)(cfg.seed);
  const auto& spec = net->spec();
  const auto largest = Architecture::largest(spec);
  const auto run_id = config_hash(to_json(cfg));

  std::vector<ResultRecord> rows;
  train_spos(net, train, cfg.spos, [&](std::int64_t epoch, double) {
    ResultRecord r;
    r.run_id = run_id;
    r.method = "spos";
    r.space = spec.id;
    r.kind = "epoch";
    r.architecture = largest.to_string();
    r.seed = cfg.seed;
    r.val_metric = evaluate_path(*net, largest, val).accuracy;
    r.epoch = epoch;
    r.param_count = net->param_count();
    r.mode = to_string(cfg.task.mode);
    emit(writer, rows, std::move(r));
  });
  if (!checkpoint.empty()) save_supernet(checkpoint, *net);
  return net;
}

json to_json(const PosthocRunConfig& cfg) {
  const auto& e = cfg.evolution;
  return {{"task", to_json(cfg.task)},
          {"method", cfg.method},
          {"samples", cfg.samples},
          {"evolution",
           {{"population", e.population},
            {"generations", e.generations},
            {"parent_fraction", e.parent_fraction},
            {"mutation_prob", e.mutation_prob},
            {"crossover_prob", e.crossover_prob},
            {"elitism", e.elitism},
            {"max_evaluations", e.max_evaluations}}},
          {"seed", cfg.seed},
          {"train_fraction", cfg.train_fraction}};
}

PosthocRunResult run_posthoc(const PosthocRunConfig& cfg, const SearchSpaceSpec& spec,
                             const ArchEvaluator& eval,
                             const std::function<double(const Architecture&)>& test_of,
                             ResultWriter* writer) {
  PosthocRunResult res;
  if (cfg.method == "random-search") {
    res.trace = random_search(spec, eval, cfg.samples, cfg.seed);
  } else if (cfg.method == "evolve") {
    auto e = cfg.evolution;
    e.seed = cfg.seed;
    res.trace = evolutionary_search(spec, eval, e);
  } else {
    throw ConfigError("unknown post-hoc method '" + cfg.method + "'");
  }
  const auto run_id = config_hash(to_json(cfg));
  auto base = [&] {
    ResultRecord r;
    r.run_id = run_id;
    r.method = cfg.method;
    r.space = spec.id;
    r.seed = cfg.seed;
    r.mode = to_string(cfg.task.mode);
    return r;
  };
  for (std::size_t i = 0; i < res.trace.evaluated.size(); ++i) {
    auto r = base();
    r.kind = "eval";
    r.architecture = res.trace.evaluated[i].first.to_string();
    r.val_metric = res.trace.evaluated[i].second;
    r.epoch = static_cast<std::int64_t>(i);
    emit(writer, res.rows, std::move(r));
  }
  auto r = base();
  r.kind = "final";
  r.architecture = res.trace.best.to_string();
  r.val_metric = res.trace.best_metric;
  r.test_metric = test_of ? test_of(res.trace.best) : std::nan("");
  r.epoch = static_cast<std::int64_t>(res.trace.evaluated.size());
  emit(writer, res.rows, std::move(r));
  return res;
}

PosthocRunResult run_posthoc_supernet(const PosthocRunConfig& cfg, const SupernetPtr& net,
                                      ResultWriter* writer) {
  const auto data = load_task_data(cfg.task);
  auto [train, val] = split_dataset(data.train, cfg.train_fraction, cfg.seed);
  auto rows = run_posthoc(
      cfg, net->spec(), inherited_evaluator(net, val),
      [&](const Architecture& a) { return evaluate_inherited(*net, a, data.test).accuracy; },
      writer);
  for (auto& r : rows.rows) r.param_count = net->param_count(Architecture::parse(r.architecture));
  return rows;
}

void save_supernet(const std::string& path, const Supernet& net,
                   const std::vector<std::vector<double>>* alphas) {
  std::vector<NamedTensor> out;
  if (alphas != nullptr) {
    const auto& dims = net.spec().dims;
    for (std::size_t i = 0; i < alphas->size(); ++i) {
      const auto& a = (*alphas)[i];
      out.push_back({"alpha/" + dims[i].name,
                     DiffArray::from({static_cast<std::int64_t>(a.size())}, a, DType::F64)});
    }
  }
  for (const auto& p : net.parameters()) out.push_back({"w/" + p.name, p.tensor});
  save_checkpoint(path, out);
}

void load_supernet_weights(const std::string& path, const Supernet& net) {
  std::map<std::string, DiffArray> stored;
  for (auto& t : load_checkpoint(path)) stored[t.name] = t.tensor;
  for (const auto& p : net.parameters()) {
    auto it = stored.find("w/" + p.name);
    if (it == stored.end()) throw ConsistencyError(path + " has no tensor for " + p.name);
    if (it->second.shape() != p.tensor.shape()) {
      throw ConsistencyError(p.name + ": checkpoint shape " + shape_str(it->second.shape()) +
                             " vs supernet " + shape_str(p.tensor.shape()));
    }
    DiffArray target = p.tensor;  // handle shares storage
    auto dst = target.mutable_values();
    auto src = it->second.values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

Architecture discretize_checkpoint(const std::string& path) {
  std::map<std::string, std::int64_t> choice;
  for (const auto& t : load_checkpoint(path)) {
    if (t.name.rfind("alpha/", 0) != 0) continue;
    const auto v = t.tensor.values();
    choice[t.name.substr(6)] = std::max_element(v.begin(), v.end()) - v.begin();
  }
  if (choice.empty()) throw FormatError(path + " holds no architecture logits");
  return Architecture(std::move(choice));
}

}  // namespace tnas
