// tnas command-line front end.
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tnas/core/errors.hpp"
#include "tnas/harness/analysis.hpp"
#include "tnas/harness/benchmark.hpp"
#include "tnas/harness/records.hpp"
#include "tnas/harness/report.hpp"
#include "tnas/harness/runs.hpp"
#include "tnas/spaces/toy_cell.hpp"

namespace fs = std::filesystem;
using namespace tnas;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

struct TaskFlags {
  TaskConfig task;
  std::string mode = "we";
  std::string dtype = "f64";

  void add(CLI::App* app, bool with_mode) {
    app->add_option("--space", task.space, "toy_conv_macro | toy_cell | tiny_lm_desk | tiny_lm_full")
        ->capture_default_str();
    app->add_option("--data", task.data,
                    "planted_kernel | planted_channel | char_grammar | idx:<dir> (default by space)");
    if (with_mode) app->add_option("--mode", mode, "we | ws")->capture_default_str();
    app->add_option("--channel-divisor", task.channel_divisor, "conv-macro width divisor")
        ->capture_default_str();
    app->add_option("--cell-channels", task.cell_channels, "toy-cell base width")->capture_default_str();
    app->add_option("--context", task.context, "LM context length")->capture_default_str();
    app->add_option("--data-seed", task.data_seed, "synthetic data seed")->capture_default_str();
    app->add_option("--dtype", dtype, "f64 | f32")->capture_default_str();
  }

  TaskConfig resolve() const {
    auto t = task;
    t.mode = parse_mode(mode);
    if (dtype != "f64" && dtype != "f32") throw ConfigError("unknown dtype '" + dtype + "'");
    t.dtype = dtype == "f64" ? DType::F64 : DType::F32;
    validate(t);
    return t;
  }
};

std::uint64_t resolve_seed(std::uint64_t flag) {
  const char* env = std::getenv("TNAS_SEED");
  if (env == nullptr || *env == '\0') return flag;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(env, &used);
    if (used != std::string(env).size()) throw std::invalid_argument(env);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string("TNAS_SEED is not an unsigned integer: ") + env);
  }
}

// Options left at their defaults, recorded in manifests.
json defaulted(const CLI::App* app) {
  json out = json::array();
  for (const auto* opt : app->get_options()) {
    if (opt->get_name() == "--help" || opt->get_name().empty()) continue;
    if (opt->count() == 0) out.push_back(opt->get_name());
  }
  return out;
}

void refuse_existing(const std::string& path) {
  if (fs::exists(path)) throw ConfigError(path + " exists; results files are append-only, pick a new path");
}

json manifest_for(const std::string& command, const std::string& space, std::uint64_t seed,
                  const json& config, const CLI::App* app) {
  auto m = make_manifest(command, space, seed, config);
  m["defaulted"] = defaulted(app);
  m["threads"] = 1;
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weight-entangled differentiable architecture search"};
  app.require_subcommand(1);

  // search -------------------------------------------------------------------
  auto* search = app.add_subcommand("search", "bi-level gradient search");
  TaskFlags search_task;
  search_task.add(search, false);
  SearchRunConfig search_cfg;
  std::string search_out, search_ckpt, search_manifest;
  search->add_option("--optimizer", search_cfg.optimizer)
      ->check(CLI::IsMember(search_optimizers()))
      ->capture_default_str();
  search->add_option("--epochs", search_cfg.bilevel.epochs)->capture_default_str();
  search->add_option("--train-fraction", search_cfg.bilevel.train_fraction)->capture_default_str();
  search->add_option("--batch-size", search_cfg.bilevel.batch_size)->capture_default_str();
  search->add_option("--arch-lr", search_cfg.bilevel.arch_lr)->capture_default_str();
  search->add_option("--lr", search_cfg.bilevel.weights.lr, "weight learning rate")->capture_default_str();
  search->add_option("--weight-optimizer", search_cfg.bilevel.weights.kind, "sgd | adamw")
      ->capture_default_str();
  search->add_option("--seed", search_cfg.seed)->capture_default_str();
  search->add_option("--out", search_out, "results file (JSON lines)")->required();
  search->add_option("--checkpoint", search_ckpt, "write final logits and weights here");
  search->add_option("--manifest", search_manifest, "rerun the configuration of a previous manifest");

  // spos-train ---------------------------------------------------------------
  auto* spos = app.add_subcommand("spos-train", "single-path one-shot supernet training");
  TaskFlags spos_task;
  spos_task.add(spos, false);
  SposRunConfig spos_cfg;
  std::string spos_out, spos_ckpt;
  spos->add_option("--epochs", spos_cfg.spos.epochs)->capture_default_str();
  spos->add_option("--train-fraction", spos_cfg.spos.train_fraction)->capture_default_str();
  spos->add_option("--batch-size", spos_cfg.spos.batch_size)->capture_default_str();
  spos->add_option("--lr", spos_cfg.spos.weights.lr)->capture_default_str();
  spos->add_option("--seed", spos_cfg.seed)->capture_default_str();
  spos->add_option("--out", spos_out)->required();
  spos->add_option("--checkpoint", spos_ckpt, "supernet weights")->required();

  // evolve / random-search ---------------------------------------------------
  PosthocRunConfig post_cfg;
  TaskFlags post_task;
  std::string post_out, post_ckpt, post_table;
  auto add_posthoc = [&](CLI::App* sub) {
    post_task.add(sub, false);
    sub->add_option("--checkpoint", post_ckpt, "SPOS supernet to inherit from");
    sub->add_option("--table", post_table, "benchmark table to look metrics up in");
    sub->add_option("--seed", post_cfg.seed)->capture_default_str();
    sub->add_option("--train-fraction", post_cfg.train_fraction, "split used by the SPOS run")
        ->capture_default_str();
    sub->add_option("--out", post_out)->required();
  };
  auto* evolve = app.add_subcommand("evolve", "evolutionary search over inherited weights");
  add_posthoc(evolve);
  evolve->add_option("--population", post_cfg.evolution.population)->capture_default_str();
  evolve->add_option("--generations", post_cfg.evolution.generations)->capture_default_str();
  evolve->add_option("--mutation-prob", post_cfg.evolution.mutation_prob)->capture_default_str();
  evolve->add_option("--max-evaluations", post_cfg.evolution.max_evaluations, "0 = unlimited")
      ->capture_default_str();
  auto* rsearch = app.add_subcommand("random-search", "uniform random search over inherited weights");
  add_posthoc(rsearch);
  rsearch->add_option("--samples", post_cfg.samples)->capture_default_str();

  // discretize ---------------------------------------------------------------
  auto* disc = app.add_subcommand("discretize", "argmax architecture of a search checkpoint");
  std::string disc_ckpt;
  disc->add_option("--checkpoint", disc_ckpt)->required();

  // benchmark ----------------------------------------------------------------
  auto* bench = app.add_subcommand("benchmark", "train every architecture of a space from scratch");
  TaskFlags bench_task;
  bench_task.add(bench, true);
  BenchmarkConfig bench_cfg;
  std::string bench_out;
  bool bench_resume = false;
  bench->add_option("--budget", bench_cfg.budget, "most architectures to train (0 = no limit)")
      ->capture_default_str();
  bench->add_option("--sample-fraction", bench_cfg.sample_fraction)->capture_default_str();
  bench->add_option("--sample-seed", bench_cfg.sample_seed)->capture_default_str();
  bench->add_option("--seeds", bench_cfg.seeds)->capture_default_str();
  bench->add_flag("--resume", bench_resume, "continue an interrupted table");
  bench->add_option("--out", bench_out)->required();

  // report -------------------------------------------------------------------
  auto* report = app.add_subcommand("report", "aggregate results files");
  std::vector<std::string> report_in;
  std::string report_format = "text";
  report->add_option("--in", report_in, "results files")->required();
  report->add_option("--format", report_format)->check(CLI::IsMember({"text", "records"}))
      ->capture_default_str();

  // cka ----------------------------------------------------------------------
  auto* cka = app.add_subcommand("cka", "linear CKA of two feature matrices");
  std::string cka_a, cka_b;
  cka->add_option("--features-a", cka_a, "rows = samples")->required();
  cka->add_option("--features-b", cka_b)->required();

  // memory -------------------------------------------------------------------
  auto* memory = app.add_subcommand("memory", "parameter and activation accounting, WE vs WS");
  TaskFlags memory_task;
  memory_task.add(memory, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*search) {
      if (!search_manifest.empty()) {
        const auto m = read_json(search_manifest);
        if (m.value("command", std::string()) != "search") {
          throw ConfigError(search_manifest + " is not a search manifest");
        }
        search_cfg = search_config_from_json(m.at("config"));
      } else {
        search_cfg.task = search_task.resolve();
      }
      search_cfg.seed = resolve_seed(search_cfg.seed);
      apply_optimizer(search_cfg);
      refuse_existing(search_out);
      const auto config = to_json(search_cfg);
      auto manifest = manifest_for("search", search_cfg.task.space, search_cfg.seed, config, search);
      write_json(search_out + ".manifest.json", manifest);
      ResultWriter writer(search_out);
      try {
        auto res = run_search(search_cfg, &writer, search_ckpt);
        std::cout << res.arch.to_string() << "\n";
        if (search_cfg.task.space == "toy_cell") {
          std::cout << genotype_string(res.net->spec(), res.arch) << "\n";
        }
      } catch (const DivergenceError& e) {
        manifest["status"] = "diverged";
        manifest["diverged_at_step"] = e.step();
        manifest["error"] = e.what();
        write_json(search_out + ".manifest.json", manifest);
        throw;
      }
    } else if (*spos) {
      spos_cfg.task = spos_task.resolve();
      spos_cfg.seed = resolve_seed(spos_cfg.seed);
      refuse_existing(spos_out);
      const auto manifest =
          manifest_for("spos-train", spos_cfg.task.space, spos_cfg.seed, to_json(spos_cfg), spos);
      write_json(spos_out + ".manifest.json", manifest);
      write_json(spos_ckpt + ".manifest.json", manifest);
      ResultWriter writer(spos_out);
      run_spos(spos_cfg, &writer, spos_ckpt);
    } else if (*evolve || *rsearch) {
      post_cfg.method = *evolve ? "evolve" : "random-search";
      auto* sub = *evolve ? evolve : rsearch;
      if (post_ckpt.empty() == post_table.empty()) {
        throw ConfigError("give exactly one of --checkpoint or --table");
      }
      post_cfg.task = post_task.resolve();
      // A checkpoint written by spos-train carries the task and split it was trained on.
      if (!post_ckpt.empty() && fs::exists(post_ckpt + ".manifest.json")) {
        const auto m = read_json(post_ckpt + ".manifest.json");
        const auto sc = spos_config_from_json(m.at("config"));
        post_cfg.task = sc.task;
        post_cfg.train_fraction = sc.spos.train_fraction;
      }
      post_cfg.seed = resolve_seed(post_cfg.seed);
      refuse_existing(post_out);
      write_json(post_out + ".manifest.json",
                 manifest_for(post_cfg.method, post_cfg.task.space, post_cfg.seed, to_json(post_cfg), sub));
      ResultWriter writer(post_out);
      PosthocRunResult res;
      if (!post_ckpt.empty()) {
        const auto data = load_task_data(post_cfg.task);
        auto net = make_factory(post_cfg.task, data)(0);
        load_supernet_weights(post_ckpt, *net);
        res = run_posthoc_supernet(post_cfg, net, &writer);
      } else {
        const auto table = BenchmarkTable::load(post_table);
        const auto data = load_task_data(post_cfg.task);
        auto net = make_factory(post_cfg.task, data)(0);
        if (table.space() != net->spec().id) {
          throw ConfigError("table is for " + table.space() + ", not " + net->spec().id);
        }
        res = run_posthoc(post_cfg, net->spec(), table.evaluator(),
                          [&](const Architecture& a) { return table.mean_test(a); }, &writer);
      }
      std::cout << res.trace.best.to_string() << " " << res.trace.best_metric << "\n";
    } else if (*disc) {
      std::cout << discretize_checkpoint(disc_ckpt).to_string() << "\n";
    } else if (*bench) {
      bench_cfg.task = bench_task.resolve();
      const auto table = enumerate_and_train(bench_cfg, bench_out, bench_resume);
      std::cout << table.rows() << " rows, " << table.architectures() << " architectures\n";
      for (const auto& a : table.optimum()) std::cout << "optimum " << a.to_string() << " " << table.best() << "\n";
    } else if (*report) {
      const auto rep = build_report(report_in);
      std::cout << (report_format == "text" ? format_text(rep) : format_records(rep));
    } else if (*cka) {
      const auto x = read_feature_matrix(cka_a);
      const auto y = read_feature_matrix(cka_b);
      std::cout << std::setprecision(17) << linear_cka(x, y) << "\n";
    } else if (*memory) {
      auto t = memory_task.resolve();
      const auto data = load_task_data(t);
      t.mode = SupernetMode::WE;
      const auto we = memory_account(*make_factory(t, data)(0));
      t.mode = SupernetMode::WS;
      const auto ws = memory_account(*make_factory(t, data)(0));
      json out = {{"we", to_json(we)}, {"ws", to_json(ws)}, {"ws_we_ratio", ws_we_ratio(we, ws)}};
      std::cout << out.dump(2) << "\n";
    }
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ValidationError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
