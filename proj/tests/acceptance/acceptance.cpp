// Acceptance suite: one PASS/FAIL line per criterion.
//
//   tnas_acceptance [--only 1,2,...] [--long] [--table PATH] [--out-dir DIR]
//
// Criterion 11 runs only with --long and TNAS_FASHION_MNIST pointing at a
// directory with the four Fashion-MNIST IDX files.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tnas/core/errors.hpp"
#include "tnas/core/grad_check.hpp"
#include "tnas/core/ops.hpp"
#include "tnas/core/tape.hpp"
#include "tnas/harness/analysis.hpp"
#include "tnas/harness/benchmark.hpp"
#include "tnas/harness/records.hpp"
#include "tnas/harness/runs.hpp"
#include "tnas/samplers/samplers.hpp"
#include "tnas/spaces/spaces.hpp"
#include "tnas/superposition/entangled.hpp"

#ifndef TNAS_DEFAULT_TABLE
#define TNAS_DEFAULT_TABLE "tests/data/toy_conv_macro_planted_kernel.jsonl"
#endif

using namespace tnas;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  enum Status { Pass, Fail, Skip } status = Fail;
  std::string detail;
};

struct Options {
  std::string table = TNAS_DEFAULT_TABLE;
  std::string out_dir = "acceptance_out";
  bool long_running = false;
};

Options g_opt;

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s << std::setprecision(prec) << v;
  return s.str();
}

std::vector<double> normal_values(Rng& rng, std::int64_t n, double sd = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = sd * rng.normal();
  return v;
}

DiffArray random_array(Rng& rng, Shape s, bool param = false) {
  const auto n = numel(s);
  return param ? DiffArray::parameter(std::move(s), normal_values(rng, n), DType::F64)
               : DiffArray::from(std::move(s), normal_values(rng, n), DType::F64);
}

DiffArray random_simplex(Rng& rng, std::int64_t n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  double s = 0.0;
  for (auto& x : v) s += (x = -std::log(rng.uniform_open()));
  for (auto& x : v) x /= s;
  return DiffArray::from({n}, v, DType::F64);
}

// Increasing subset of `pool` with at least two entries.
std::vector<std::int64_t> choices_from(Rng& rng, const std::vector<std::int64_t>& pool) {
  std::vector<std::int64_t> out;
  while (out.size() < 2) {
    out.clear();
    for (auto v : pool) {
      if (rng.bernoulli(0.6)) out.push_back(v);
    }
  }
  return out;
}

double rel_err(std::span<const double> got, const std::vector<double>& want) {
  double worst = 0.0;
  for (std::size_t i = 0; i < want.size(); ++i) {
    worst = std::max(worst, std::abs(got[i] - want[i]) / std::max(1.0, std::abs(want[i])));
  }
  return worst;
}

Batch image_batch(Rng& rng, std::int64_t n, std::int64_t c, std::int64_t s, std::int64_t classes) {
  Batch b;
  b.inputs = random_array(rng, {n, c, s, s});
  b.batch = n;
  for (std::int64_t i = 0; i < n; ++i) b.labels.push_back(static_cast<std::int32_t>(rng.uniform_int(classes)));
  return b;
}

Batch token_batch(Rng& rng, std::int64_t n, std::int64_t t, std::int64_t vocab) {
  Batch b;
  b.batch = n;
  b.seq = t;
  for (std::int64_t i = 0; i < n * t; ++i) {
    b.tokens.push_back(static_cast<std::int32_t>(rng.uniform_int(vocab)));
    b.labels.push_back(static_cast<std::int32_t>(rng.uniform_int(vocab)));
  }
  return b;
}

// 1 -------------------------------------------------------------------------------

// Plain loops, no library kernels: y[n, o] = b[o] + sum_i x[n, i] W[o, i] on
// the combination's leading window, zero beyond it.
std::vector<double> naive_linear_mixture(const DiffArray& x, const DiffArray& w, const DiffArray& b,
                                         const std::vector<std::int64_t>& embed,
                                         const std::vector<std::int64_t>& ratio,
                                         const MixtureWeights& m) {
  const auto n = x.dim(0), emax = x.dim(1), rows = w.dim(0);
  std::vector<double> y(static_cast<std::size_t>(n * rows), 0.0);
  for (std::size_t ie = 0; ie < embed.size(); ++ie) {
    for (std::size_t ir = 0; ir < ratio.size(); ++ir) {
      const double c = m[0][ie] * m[1][ir];
      const auto e = embed[ie], out = embed[ie] * ratio[ir];
      for (std::int64_t s = 0; s < n; ++s) {
        for (std::int64_t o = 0; o < out; ++o) {
          double acc = b[o];
          for (std::int64_t i = 0; i < e; ++i) acc += x[s * emax + i] * w[o * emax + i];
          y[s * rows + o] += c * acc;
        }
      }
    }
  }
  return y;
}

std::vector<double> naive_conv_mixture(const DiffArray& x, const DiffArray& w, const DiffArray& b,
                                       const std::vector<std::int64_t>& kernels,
                                       const std::vector<std::int64_t>& channels,
                                       const MixtureWeights& m, std::int64_t stride, std::int64_t dil) {
  const auto n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const auto cmax = w.dim(0), kmax = w.dim(2);
  const auto pmax = dil * (kmax - 1) / 2;
  const auto oh = (h + 2 * pmax - dil * (kmax - 1) - 1) / stride + 1;
  const auto ow = (wd + 2 * pmax - dil * (kmax - 1) - 1) / stride + 1;
  std::vector<double> y(static_cast<std::size_t>(n * cmax * oh * ow), 0.0);
  for (std::size_t ik = 0; ik < kernels.size(); ++ik) {
    for (std::size_t ic = 0; ic < channels.size(); ++ic) {
      const double c = m[0][ik] * m[1][ic];
      const auto k = kernels[ik], off = (kmax - k) / 2, pad = dil * (k - 1) / 2;
      for (std::int64_t s = 0; s < n; ++s)
        for (std::int64_t o = 0; o < channels[ic]; ++o)
          for (std::int64_t i = 0; i < oh; ++i)
            for (std::int64_t j = 0; j < ow; ++j) {
              double acc = b.defined() ? b[o] : 0.0;
              for (std::int64_t ci = 0; ci < cin; ++ci)
                for (std::int64_t ky = 0; ky < k; ++ky)
                  for (std::int64_t kx = 0; kx < k; ++kx) {
                    const auto yy = i * stride - pad + ky * dil, xx = j * stride - pad + kx * dil;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= wd) continue;
                    acc += x[((s * cin + ci) * h + yy) * wd + xx] *
                           w[((o * cin + ci) * kmax + off + ky) * kmax + off + kx];
                  }
              y[((s * cmax + o) * oh + i) * ow + j] += c * acc;
            }
    }
  }
  return y;
}

Outcome criterion1() {
  Rng rng(101);
  double worst_lin = 0.0, worst_conv = 0.0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    const auto embed = choices_from(rng, {2, 4, 8, 16});
    const auto ratio = choices_from(rng, {1, 2, 3, 4});
    const auto emax = embed.back(), rmax = ratio.back();
    auto w = random_array(rng, {emax * rmax, emax});
    auto b = random_array(rng, {emax * rmax});
    EntangledParameter ep("fc", w,
                          {{"embed", embed, {0, 1}, Alignment::Leading}, {"ratio", ratio, {0}, Alignment::Leading}},
                          b);
    auto x = random_array(rng, {1 + static_cast<std::int64_t>(rng.uniform_int(4)), emax});
    MixtureWeights m{random_simplex(rng, static_cast<std::int64_t>(embed.size())),
                     random_simplex(rng, static_cast<std::int64_t>(ratio.size()))};
    const auto got = mixture_linear(x, ep, m);
    worst_lin = std::max(worst_lin, rel_err(got.values(), naive_linear_mixture(x, w, b, embed, ratio, m)));
  }
  for (int t = 0; t < trials; ++t) {
    const auto kernels = choices_from(rng, {3, 5, 7});
    const auto channels = choices_from(rng, {2, 4, 8, 16});
    const auto kmax = kernels.back(), cmax = channels.back();
    const auto cin = 1 + static_cast<std::int64_t>(rng.uniform_int(4));
    const auto stride = 1 + static_cast<std::int64_t>(rng.uniform_int(2));
    const auto dil = 1 + static_cast<std::int64_t>(rng.uniform_int(2));
    auto w = random_array(rng, {cmax, cin, kmax, kmax});
    auto b = rng.bernoulli(0.5) ? random_array(rng, {cmax}) : DiffArray{};
    EntangledParameter ep("conv", w,
                          {{"kernel", kernels, {2, 3}, Alignment::Centered},
                           {"channels", channels, {0}, Alignment::Leading}},
                          b);
    const auto size = 4 + static_cast<std::int64_t>(rng.uniform_int(5));
    auto x = random_array(rng, {1 + static_cast<std::int64_t>(rng.uniform_int(2)), cin, size, size});
    MixtureWeights m{random_simplex(rng, static_cast<std::int64_t>(kernels.size())),
                     random_simplex(rng, static_cast<std::int64_t>(channels.size()))};
    const auto got = mixture_conv2d(x, ep, m, stride, dil);
    worst_conv = std::max(worst_conv,
                          rel_err(got.values(), naive_conv_mixture(x, w, b, kernels, channels, m, stride, dil)));
  }
  const bool ok = worst_lin < 1e-10 && worst_conv < 1e-10;
  return {ok ? Outcome::Pass : Outcome::Fail,
          std::to_string(trials) + " linear + " + std::to_string(trials) + " conv configs, max rel err linear " +
              fmt(worst_lin, 3) + ", conv " + fmt(worst_conv, 3) + " (< 1e-10)"};
}

// 2 -------------------------------------------------------------------------------

struct SpaceCase {
  std::string label;
  std::function<SupernetPtr(SupernetMode)> build;
  std::function<Batch(Rng&)> batch;
};

std::vector<SpaceCase> space_cases() {
  return {
      {"toy_conv_macro",
       [](SupernetMode m) {
         ConvMacroConfig c;
         c.mode = m;
         return build_toy_conv_macro(c);
       },
       [](Rng& r) { return image_batch(r, 2, 1, 8, 10); }},
      {"toy_cell",
       [](SupernetMode m) {
         ToyCellConfig c;
         c.mode = m;
         return build_toy_cell_space(c);
       },
       [](Rng& r) { return image_batch(r, 2, 1, 8, 10); }},
      {"tiny_lm_desk",
       [](SupernetMode m) {
         TinyLmConfig c;
         c.mode = m;
         c.context = 8;
         return build_tiny_lm_space(c);
       },
       [](Rng& r) { return token_batch(r, 2, 8, 64); }},
  };
}

Outcome criterion2() {
  Rng rng(202);
  int checked = 0, exact = 0;
  std::string first_bad;
  for (const auto& sc : space_cases()) {
    for (auto mode : {SupernetMode::WE, SupernetMode::WS}) {
      const auto net = sc.build(mode);
      const auto& spec = net->spec();
      std::vector<Architecture> archs = {Architecture::largest(spec), Architecture::from_ordinal(spec, 0)};
      for (int i = 0; i < 8; ++i) archs.push_back(Architecture::random(spec, rng));
      const auto batch = sc.batch(rng);
      NoGradScope no_grad;
      for (const auto& a : archs) {
        const auto mix = net->forward_mixture(batch, one_hot_mixture(spec, a));
        const auto path = net->forward_path(batch, a);
        const auto x = mix.values(), y = path.values();
        ++checked;
        if (x.size() == y.size() && std::equal(x.begin(), x.end(), y.begin())) {
          ++exact;
        } else if (first_bad.empty()) {
          first_bad = sc.label + "/" + to_string(mode) + " " + a.to_string();
        }
      }
    }
  }
  return {exact == checked ? Outcome::Pass : Outcome::Fail,
          std::to_string(exact) + "/" + std::to_string(checked) +
              " one-hot mixtures bit-identical to forward_path (macro, cell, desk LM; WE and WS)" +
              (first_bad.empty() ? "" : "; first mismatch " + first_bad)};
}

// 3 -------------------------------------------------------------------------------

std::vector<DiffArray> logits_for(const SearchSpaceSpec& spec, Rng& rng) {
  std::vector<DiffArray> out;
  for (const auto& d : spec.dims) {
    out.push_back(DiffArray::parameter({static_cast<std::int64_t>(d.size())},
                                       normal_values(rng, static_cast<std::int64_t>(d.size()), 0.5), DType::F64));
  }
  return out;
}

DiffArray project(const DiffArray& y, Rng& rng) { return sum(mul(y, random_array(rng, y.shape()))); }

Outcome criterion3() {
  Rng rng(303);
  const int n = 20;
  double w_sup = 0, w_combi = 0, w_fwd = 0;
  for (int t = 0; t < n; ++t) {
    // superpose: one centered kernel dim
    const auto ks = choices_from(rng, {1, 3, 5});
    const auto kmax = ks.back();
    EntangledParameter single("k", random_array(rng, {2, 2, kmax, kmax}, true),
                              {{"kernel", ks, {2, 3}, Alignment::Centered}});
    auto a = DiffArray::parameter({static_cast<std::int64_t>(ks.size())},
                                  normal_values(rng, static_cast<std::int64_t>(ks.size())), DType::F64);
    auto s = single.storage();
    const auto r1 = rng.split(t);
    w_sup = std::max(w_sup, grad_check([&] { Rng r = r1; return project(superpose(single, softmax(a, 0)), r); }, {a, s}));

    // combi_superpose: embed x ratio with bias
    const auto embed = choices_from(rng, {1, 2, 3});
    const auto ratio = choices_from(rng, {1, 2, 4});
    const auto e = embed.back(), rr = ratio.back();
    EntangledParameter ep("fc", random_array(rng, {e * rr, e}, true),
                          {{"embed", embed, {0, 1}, Alignment::Leading}, {"ratio", ratio, {0}, Alignment::Leading}},
                          random_array(rng, {e * rr}, true));
    auto a0 = DiffArray::parameter({static_cast<std::int64_t>(embed.size())},
                                   normal_values(rng, static_cast<std::int64_t>(embed.size())), DType::F64);
    auto a1 = DiffArray::parameter({static_cast<std::int64_t>(ratio.size())},
                                   normal_values(rng, static_cast<std::int64_t>(ratio.size())), DType::F64);
    auto w = ep.storage();
    auto b = ep.bias();
    const auto r2 = rng.split(100 + t);
    w_combi = std::max(w_combi, grad_check(
                                    [&] {
                                      Rng r = r2;
                                      auto sp = combi_superpose(ep, {softmax(a0, 0), softmax(a1, 0)});
                                      return add(project(sp.weight, r), project(sp.bias, r));
                                    },
                                    {a0, a1, w, b}));

    // forward_mixture of a whole supernet: logits plus first, middle and last weight tensors
    SupernetPtr net;
    Batch batch;
    switch (t % 3) {
      case 0: {
        ConvMacroConfig c;
        c.channel_divisor = 8;
        c.num_classes = 3;
        c.seed = t;
        net = build_toy_conv_macro(c);
        batch = image_batch(rng, 1, 1, 8, 3);
        break;
      }
      case 1: {
        ToyCellConfig c;
        c.base_channels = 4;
        c.num_classes = 3;
        c.seed = t;
        net = build_toy_cell_space(c);
        batch = image_batch(rng, 1, 1, 8, 3);
        break;
      }
      default: {
        TinyLmConfig c;
        c.vocab = 5;
        c.context = 3;
        c.seed = t;
        net = build_tiny_lm_space(c);
        batch = token_batch(rng, 1, 3, 5);
      }
    }
    net->set_weights_requires_grad(true);
    auto logits = logits_for(net->spec(), rng);
    const auto params = net->parameters();
    std::vector<DiffArray> check = logits;
    check.push_back(params.front().tensor);
    check.push_back(params[params.size() / 2].tensor);
    check.push_back(params.back().tensor);
    w_fwd = std::max(w_fwd, grad_check(
                                [&] {
                                  MixtureWeights m;
                                  for (const auto& l : logits) m.push_back(softmax(l, 0));
                                  return batch_loss(net->forward_mixture(batch, m), batch);
                                },
                                check));
  }
  const bool ok = w_sup < 1e-6 && w_combi < 1e-6 && w_fwd < 1e-6;
  return {ok ? Outcome::Pass : Outcome::Fail,
          std::to_string(n) + " instances each; max rel err superpose " + fmt(w_sup, 3) + ", combi_superpose " +
              fmt(w_combi, 3) + ", forward_mixture " + fmt(w_fwd, 3) + " (< 1e-6)"};
}

// 4 -------------------------------------------------------------------------------

Outcome criterion4() {
  bool ok = true;
  std::string detail;
  for (const auto& sc : space_cases()) {
    const auto we = sc.build(SupernetMode::WE);
    const auto ws = sc.build(SupernetMode::WS);
    const auto largest = we->param_count(Architecture::largest(we->spec()));
    const auto maximal = we->maximal_param_count();
    const auto n_we = we->param_count(), n_ws = ws->param_count();
    // The cell keeps separable and dilated storage apart; its largest
    // realisation is the union of the all-sep5 and all-dil5 paths.
    const bool single = we->maximal_archs().size() == 1;
    const bool eq = n_we == maximal && (!single || n_we == largest);
    const double ratio = static_cast<double>(n_ws) / static_cast<double>(n_we);
    ok = ok && eq && ratio > 1.0;
    detail += sc.label + ": WE " + std::to_string(n_we) + (single ? " == largest " : " == maximal union ") +
              std::to_string(single ? largest : maximal) + (eq ? "" : " (MISMATCH)") + ", WS/WE " + fmt(ratio, 4) + "; ";
  }
  detail.resize(detail.size() - 2);
  return {ok ? Outcome::Pass : Outcome::Fail, detail};
}

// 5 -------------------------------------------------------------------------------

Outcome criterion5() {
  Rng rng(505);
  const int draws = 10000;
  bool ok = true;
  std::string detail;
  double worst_sum = 0.0;
  double min_entry = 1.0;
  for (auto strat : {SamplerStrategy::Softmax, SamplerStrategy::GumbelST, SamplerStrategy::Dirichlet}) {
    auto alpha = DiffArray::from({4}, normal_values(rng, 4), DType::F64);
    bool onehot = true;
    for (int i = 0; i < draws; ++i) {
      DiffArray m;
      switch (strat) {
        case SamplerStrategy::Softmax: {
          alpha = DiffArray::from({4}, normal_values(rng, 4, 3.0), DType::F64);
          m = sample_softmax(alpha, 0.1 + 5.0 * rng.uniform());
          break;
        }
        case SamplerStrategy::GumbelST: m = sample_gumbel_st(alpha, 1.0, rng); break;
        case SamplerStrategy::Dirichlet: m = sample_dirichlet(alpha, rng); break;
      }
      double s = 0.0;
      int ones = 0;
      for (double v : m.values()) {
        s += v;
        min_entry = std::min(min_entry, v);
        if (v == 1.0) ++ones;
        else if (v != 0.0) onehot = false;
      }
      worst_sum = std::max(worst_sum, std::abs(s - 1.0));
      if (strat == SamplerStrategy::GumbelST && ones != 1) onehot = false;
    }
    if (strat == SamplerStrategy::GumbelST) {
      ok = ok && onehot;
      detail += std::string("gumbel-ST one-hot ") + (onehot ? "exact" : "VIOLATED") + "; ";
    }
  }
  ok = ok && worst_sum <= 1e-6 && min_entry >= 0.0;
  detail += "max |sum-1| " + fmt(worst_sum, 3) + ", min entry " + fmt(min_entry, 3) + "; ";

  // Dirichlet means: concentration softplus(alpha) + 1e-3, variance m(1-m)/(c0+1).
  double worst_z = 0.0;
  for (int rep = 0; rep < 5; ++rep) {
    const auto k = 2 + static_cast<std::int64_t>(rng.uniform_int(4));
    auto alpha = DiffArray::from({k}, normal_values(rng, k, 1.5), DType::F64);
    std::vector<double> c(k), mean(k, 0.0);
    double c0 = 0.0;
    for (std::int64_t i = 0; i < k; ++i) c0 += (c[i] = std::log1p(std::exp(alpha[i])) + 1e-3);
    for (int i = 0; i < draws; ++i) {
      const auto m = sample_dirichlet(alpha, rng);
      for (std::int64_t j = 0; j < k; ++j) mean[j] += m[j] / draws;
    }
    for (std::int64_t j = 0; j < k; ++j) {
      const double mu = c[j] / c0;
      const double sd = std::sqrt(mu * (1 - mu) / (c0 + 1) / draws);
      worst_z = std::max(worst_z, std::abs(mean[j] - mu) / sd);
    }
  }
  ok = ok && worst_z < 3.0;
  detail += "Dirichlet worst |mean - c/sum c| = " + fmt(worst_z, 3) + " sigma; ";

  // argmax invariance of the softmax map at any temperature
  int agree = 0;
  for (int i = 0; i < 1000; ++i) {
    auto a = DiffArray::from({5}, normal_values(rng, 5), DType::F64);
    const auto p = sample_softmax(a, 0.05 + 10.0 * rng.uniform());
    const auto av = a.values(), pv = p.values();
    agree += (std::max_element(av.begin(), av.end()) - av.begin()) ==
             (std::max_element(pv.begin(), pv.end()) - pv.begin());
  }
  ok = ok && agree == 1000;
  detail += "softmax argmax preserved " + std::to_string(agree) + "/1000";
  return {ok ? Outcome::Pass : Outcome::Fail, detail};
}

// 6 -------------------------------------------------------------------------------

Outcome criterion6() {
  TaskConfig task;
  const auto data = load_task_data(task);
  auto net = make_factory(task, data)(6);
  SposConfig cfg;
  cfg.batch_size = 32;
  cfg.seed = 6;
  SposTrainer trainer(net, cfg);
  Rng rng(6);
  const int steps = 40;
  int clean = 0;
  std::int64_t frozen_total = 0;
  for (int s = 0; s < steps; ++s) {
    std::vector<std::vector<double>> before;
    for (const auto& w : net->weights()) before.emplace_back(w.values().begin(), w.values().end());
    std::vector<std::int64_t> pos(32);
    for (auto& p : pos) p = rng.uniform_int(data.train.size());
    const auto arch = trainer.step(data.train.batch(pos));
    const auto masks = net->active_masks(arch);
    const auto weights = net->weights();
    bool ok = true;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      const auto v = weights[i].values();
      for (std::size_t k = 0; k < v.size(); ++k) {
        if (masks[i][k] != 0) continue;
        ++frozen_total;
        if (v[k] != before[i][k]) ok = false;
      }
    }
    clean += ok;
  }
  return {clean == steps ? Outcome::Pass : Outcome::Fail,
          std::to_string(clean) + "/" + std::to_string(steps) + " steps left every off-path element bit-identical (" +
              std::to_string(frozen_total) + " element checks)"};
}

// 7, 8, 9 share the planted-kernel task and its table ----------------------------

struct TableState {
  bool loaded = false;
  std::string error;
  BenchmarkTable table;
  std::vector<Architecture> optimum;
  bool complete = false;
};

TableState& table_state() {
  static TableState st;
  if (st.loaded || !st.error.empty()) return st;
  try {
    if (!fs::exists(g_opt.table)) throw ConfigError("benchmark table " + g_opt.table + " not found");
    st.table = BenchmarkTable::load(g_opt.table);
    // The table must come from the task searched below.
    const auto manifest = read_json(g_opt.table + ".manifest.json");
    const BenchmarkConfig expect;
    if (manifest.at("config").at("task") != to_json(expect.task)) {
      throw ConsistencyError("table was built for another task");
    }
    st.complete = st.table.architectures() == 6561 && st.table.rows() == 6561 * 3;
    st.optimum = st.table.optimum();
    st.loaded = true;
  } catch (const std::exception& e) {
    st.error = e.what();
  }
  return st;
}

bool in_optimum(const TableState& st, const Architecture& a) {
  return std::find(st.optimum.begin(), st.optimum.end(), a) != st.optimum.end();
}

// "+" on a hit, otherwise the table rank of the pick and how many of the
// eight dims agree with the nearest optimum member.
std::string pick_note(const TableState& st, const Architecture& a) {
  if (in_optimum(st, a)) return "+";
  const double m = st.table.mean_val(a);
  std::int64_t rank = 1;
  for (const auto& [name, e] : st.table.entries()) rank += st.table.mean_val(Architecture::parse(name)) > m;
  std::size_t agree = 0;
  for (const auto& o : st.optimum) {
    std::size_t n = 0;
    for (const auto& [dim, v] : o.assignment()) n += a.at(dim) == v;
    agree = std::max(agree, n);
  }
  return "rank " + std::to_string(rank) + " " + std::to_string(agree) + "/8";
}

// Desk settings of the bi-level search used by criteria 7, 9 and 12.
SearchRunConfig desk_search(const std::string& optimizer, std::uint64_t seed, std::int64_t epochs) {
  SearchRunConfig cfg;
  cfg.optimizer = optimizer;
  cfg.seed = seed;
  cfg.bilevel.epochs = epochs;
  cfg.bilevel.batch_size = 32;
  cfg.bilevel.train_fraction = 0.5;
  cfg.bilevel.arch_lr = 3e-3;
  cfg.bilevel.weights.lr = 0.1;
  cfg.bilevel.weights.lr_min = 0.0;
  return cfg;
}

std::map<std::pair<std::string, std::uint64_t>, SearchRunResult>& search_cache() {
  static std::map<std::pair<std::string, std::uint64_t>, SearchRunResult> cache;
  return cache;
}

const SearchRunResult& desk_search_result(const std::string& optimizer, std::uint64_t seed) {
  auto& cache = search_cache();
  const auto key = std::make_pair(optimizer, seed);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  fs::create_directories(g_opt.out_dir);
  const auto path = (fs::path(g_opt.out_dir) / (optimizer + "_seed" + std::to_string(seed) + ".jsonl")).string();
  fs::remove(path);
  ResultWriter writer(path);
  auto res = run_search(desk_search(optimizer, seed, 30), &writer);
  return cache.emplace(key, std::move(res)).first->second;
}

double final_test(const SearchRunResult& r) { return r.rows.back().test_metric; }

Outcome criterion7() {
  const auto& st = table_state();
  if (!st.loaded) return {Outcome::Fail, "no oracle: " + st.error};
  if (!st.complete) {
    return {Outcome::Fail, "oracle table incomplete (" + std::to_string(st.table.rows()) + " of 19683 rows)"};
  }
  std::string opt_desc = st.optimum.front().to_string();
  if (st.optimum.size() > 1) opt_desc += " (+" + std::to_string(st.optimum.size() - 1) + " exact ties)";

  int tangle_hits = 0;
  std::string tangle_archs;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto& r = desk_search_result("tanglenas-drnas", seed);
    tangle_hits += in_optimum(st, r.arch);
    tangle_archs += (seed ? ", " : "") + pick_note(st, r.arch);
  }

  int spos_hits = 0;
  std::string spos_archs;
  fs::create_directories(g_opt.out_dir);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SposRunConfig sc;
    sc.seed = seed;
    sc.spos.epochs = 250;
    sc.spos.batch_size = 32;
    sc.spos.weights.lr = 0.1;
    sc.spos.weights.lr_min = 0.0;
    const auto stem = (fs::path(g_opt.out_dir) / ("spos_rs_seed" + std::to_string(seed))).string();
    fs::remove(stem + ".jsonl");
    ResultWriter writer(stem + ".jsonl");
    auto net = run_spos(sc, &writer);
    PosthocRunConfig pc;
    pc.method = "random-search";
    pc.samples = 100;
    pc.seed = seed;
    pc.train_fraction = sc.spos.train_fraction;
    const auto res = run_posthoc_supernet(pc, net, &writer);
    spos_hits += in_optimum(st, res.trace.best);
    spos_archs += (seed ? ", " : "") + pick_note(st, res.trace.best);
  }
  const bool ok = tangle_hits >= 4 && spos_hits >= 3;
  return {ok ? Outcome::Pass : Outcome::Fail,
          "oracle optimum " + opt_desc + " (mean val " + fmt(st.table.best()) + "); TangleNAS " +
              std::to_string(tangle_hits) + "/5 [" + tangle_archs + "] (need 4), SPOS+RS " + std::to_string(spos_hits) +
              "/5 [" + spos_archs + "] (need 3)"};
}

Outcome criterion8() {
  const auto& st = table_state();
  if (!st.loaded) return {Outcome::Fail, "no table: " + st.error};
  if (!st.complete) {
    return {Outcome::Fail, "table incomplete (" + std::to_string(st.table.rows()) + " of 19683 rows)"};
  }
  const auto net = build_toy_conv_macro();
  int hits = 0;
  bool monotone = true, budget = true;
  std::string marks;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EvolutionConfig cfg;
    cfg.seed = seed;
    cfg.generations = 1000;  // the evaluation budget is the binding limit
    cfg.max_evaluations = 300;
    const auto t = evolutionary_search(net->spec(), st.table.evaluator(), cfg);
    budget = budget && t.evaluated.size() <= 300;
    for (std::size_t i = 1; i < t.best_so_far.size(); ++i) monotone = monotone && t.best_so_far[i] >= t.best_so_far[i - 1];
    for (std::size_t i = 1; i < t.generation_best.size(); ++i) {
      monotone = monotone && t.generation_best[i] >= t.generation_best[i - 1];
    }
    const bool hit = t.best_metric == st.table.best();
    hits += hit;
    marks += hit ? "+" : "-";
  }
  const bool ok = hits >= 4 && monotone && budget;
  return {ok ? Outcome::Pass : Outcome::Fail,
          "ES (<= 300 evaluations) reached the global optimum " + fmt(st.table.best()) + " in " + std::to_string(hits) +
              "/5 seeds [" + marks + "]; best-so-far " + (monotone ? "monotone" : "NOT monotone")};
}

Outcome criterion9() {
  const auto data = load_task_data(TaskConfig{});
  const double chance = 1.0 / static_cast<double>(data.test.num_classes());
  int above = 0;
  double we_sum = 0.0, ws_sum = 0.0;
  std::string we_list, ws_list;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const double we = final_test(desk_search_result("tanglenas-drnas", seed));
    const double ws = final_test(desk_search_result("drnas-ws", seed));
    above += we > chance;
    we_sum += we;
    ws_sum += ws;
    we_list += (seed ? " " : "") + fmt(we, 3);
    ws_list += (seed ? " " : "") + fmt(ws, 3);
  }
  const bool ok = above == 5 && we_sum >= ws_sum;
  return {ok ? Outcome::Pass : Outcome::Fail,
          "WE test acc [" + we_list + "] mean " + fmt(we_sum / 5, 4) + " vs chance " + fmt(chance, 3) + " (" +
              std::to_string(above) + "/5 above); WS [" + ws_list + "] mean " + fmt(ws_sum / 5, 4) + "; WE " +
              (we_sum >= ws_sum ? ">=" : "<") + " WS; rows in " + g_opt.out_dir};
}

// 10 ------------------------------------------------------------------------------

Outcome criterion10() {
  Rng rng(1010);
  double self = 0.0, scale = 0.0, sym = 0.0, orth = 0.0;
  for (int t = 0; t < 20; ++t) {
    const auto n = 4 + static_cast<std::int64_t>(rng.uniform_int(40));
    const auto x = random_array(rng, {n, 1 + static_cast<std::int64_t>(rng.uniform_int(8))});
    const auto y = random_array(rng, {n, 1 + static_cast<std::int64_t>(rng.uniform_int(8))});
    self = std::max(self, std::abs(linear_cka(x, x) - 1.0));
    const double c = (rng.bernoulli(0.5) ? -1.0 : 1.0) * std::exp(3.0 * rng.normal());
    std::vector<double> v(x.values().begin(), x.values().end());
    for (auto& e : v) e *= c;
    scale = std::max(scale, std::abs(linear_cka(x, DiffArray::from(x.shape(), v)) - 1.0));
    sym = std::max(sym, std::abs(linear_cka(x, y) - linear_cka(y, x)));

    // Orthogonal centered column spaces: X supported on the first half of the
    // rows, Y on the second, each column summing to zero within its half.
    const std::int64_t h = 2 + static_cast<std::int64_t>(rng.uniform_int(5));
    const auto dx = 1 + static_cast<std::int64_t>(rng.uniform_int(3));
    const auto dy = 1 + static_cast<std::int64_t>(rng.uniform_int(3));
    std::vector<double> xo(2 * h * dx, 0.0), yo(2 * h * dy, 0.0);
    auto fill = [&](std::vector<double>& m, std::int64_t d, std::int64_t row0) {
      for (std::int64_t j = 0; j < d; ++j) {
        double mean = 0.0;
        std::vector<double> col(h);
        for (auto& e : col) mean += (e = rng.normal()) / h;
        for (std::int64_t i = 0; i < h; ++i) m[(row0 + i) * d + j] = col[i] - mean + 0.0;
      }
    };
    fill(xo, dx, 0);
    fill(yo, dy, h);
    orth = std::max(orth, linear_cka(DiffArray::from({2 * h, dx}, xo), DiffArray::from({2 * h, dy}, yo)));
  }
  const bool ok = self < 1e-12 && scale < 1e-12 && sym < 1e-12 && orth < 1e-10;
  return {ok ? Outcome::Pass : Outcome::Fail,
          "|cka(X,X)-1| " + fmt(self, 3) + ", |cka(X,cX)-1| " + fmt(scale, 3) + ", asymmetry " + fmt(sym, 3) +
              ", orthogonal " + fmt(orth, 3)};
}

// 11 ------------------------------------------------------------------------------

std::int64_t env_int(const char* name, std::int64_t fallback) {
  const char* v = std::getenv(name);
  return v != nullptr && *v != '\0' ? std::stoll(v) : fallback;
}

Outcome criterion11() {
  const char* dir = std::getenv("TNAS_FASHION_MNIST");
  if (!g_opt.long_running || dir == nullptr || *dir == '\0') {
    return {Outcome::Skip, "opt-in: pass --long and set TNAS_FASHION_MNIST to the IDX directory"};
  }
  const auto search_epochs = env_int("TNAS_LONG_SEARCH_EPOCHS", 50);
  const auto spos_epochs = env_int("TNAS_LONG_SPOS_EPOCHS", 250);
  const auto retrain_epochs = env_int("TNAS_LONG_RETRAIN_EPOCHS", 10);
  TaskConfig task;
  task.space = "toy_cell";
  task.data = std::string("idx:") + dir;
  const auto data = load_task_data(task);
  const auto factory = make_factory(task, data);
  TrainConfig retrain_cfg;
  retrain_cfg.epochs = retrain_epochs;
  retrain_cfg.batch_size = 64;
  retrain_cfg.optim.lr = 0.05;
  fs::create_directories(g_opt.out_dir);
  ResultWriter writer((fs::path(g_opt.out_dir) / "fashion_toy_cell.jsonl").string());

  double tangle = 0.0, spos = 0.0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    SearchRunConfig sc;
    sc.task = task;
    sc.seed = seed;
    sc.bilevel.epochs = search_epochs;
    const auto s = run_search(sc, &writer);
    retrain_cfg.seed = seed;
    tangle += retrain(factory, s.arch, data.train, data.test, retrain_cfg).accuracy / 4;

    SposRunConfig pc;
    pc.task = task;
    pc.seed = seed;
    pc.spos.epochs = spos_epochs;
    auto net = run_spos(pc, &writer);
    PosthocRunConfig rc;
    rc.task = task;
    rc.seed = seed;
    rc.samples = 100;
    rc.train_fraction = pc.spos.train_fraction;
    const auto r = run_posthoc_supernet(rc, net, &writer);
    spos += retrain(factory, r.trace.best, data.train, data.test, retrain_cfg).accuracy / 4;
  }
  return {tangle > spos ? Outcome::Pass : Outcome::Fail,
          "Fashion-MNIST toy cell, 4 seeds: TangleNAS " + fmt(tangle, 4) + " vs SPOS+RS " + fmt(spos, 4)};
}

// 12 ------------------------------------------------------------------------------

std::vector<std::string> stable_lines(const std::string& path) {
  std::vector<std::string> out;
  for (const auto& r : read_results(path)) out.push_back(stable_line(r));
  return out;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome criterion12() {
  const auto dir = fs::path(g_opt.out_dir) / "repro";
  fs::remove_all(dir);
  fs::create_directories(dir);
  int same = 0, total = 0;
  std::string bad;
  for (const auto& opt : search_optimizers()) {
    auto cfg = desk_search(opt, 12, 2);
    apply_optimizer(cfg);
    const auto manifest_path = (dir / (opt + ".manifest.json")).string();
    write_json(manifest_path, make_manifest("search", cfg.task.space, cfg.seed, to_json(cfg)));
    std::vector<std::string> lines[2];
    std::string ckpt[2];
    for (int run = 0; run < 2; ++run) {
      // Each run rebuilds its configuration from the manifest on disk.
      const auto loaded = search_config_from_json(read_json(manifest_path).at("config"));
      const auto out = (dir / (opt + "_" + std::to_string(run) + ".jsonl")).string();
      const auto ck = (dir / (opt + "_" + std::to_string(run) + ".ckpt")).string();
      ResultWriter w(out);
      run_search(loaded, &w, ck);
      lines[run] = stable_lines(out);
      ckpt[run] = file_bytes(ck);
    }
    ++total;
    if (lines[0] == lines[1] && !lines[0].empty() && ckpt[0] == ckpt[1]) {
      ++same;
    } else {
      bad += opt + " ";
    }
  }
  return {same == total ? Outcome::Pass : Outcome::Fail,
          std::to_string(same) + "/" + std::to_string(total) +
              " optimizers rerun from their manifest gave identical results (modulo wall clock) and checkpoints" +
              (bad.empty() ? "" : "; differs: " + bad)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tnas acceptance suite"};
  std::vector<int> only;
  app.add_option("--only", only, "criteria to run (default all)")->delimiter(',');
  app.add_flag("--long", g_opt.long_running, "enable the opt-in long-running criterion");
  app.add_option("--table", g_opt.table, "benchmark table for criteria 7 and 8")->capture_default_str();
  app.add_option("--out-dir", g_opt.out_dir, "where run artifacts go")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  struct Entry {
    int id;
    const char* title;
    double limit_seconds;  // 0 = none
    Outcome (*fn)();
  };
  const std::vector<Entry> entries = {
      {1, "superposition affine equivalence", 60, criterion1},
      {2, "one-hot reduction", 60, criterion2},
      {3, "gradient correctness", 300, criterion3},
      {4, "O(1) vs O(n) parameter accounting", 0, criterion4},
      {5, "sampler suite", 120, criterion5},
      {6, "SPOS slice locality", 60, criterion6},
      {7, "planted-optimum recovery", 1800, criterion7},
      {8, "enumerable-space ES oracle", 300, criterion8},
      {9, "degenerate-WS reproduction", 0, criterion9},
      {10, "CKA properties", 0, criterion10},
      {11, "toy-cell Fashion-MNIST experiment (opt-in)", 0, criterion11},
      {12, "reproducibility", 0, criterion12},
  };

  int failed = 0;
  for (const auto& e : entries) {
    if (!only.empty() && std::find(only.begin(), only.end(), e.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = e.fn();
    } catch (const std::exception& ex) {
      out = {Outcome::Fail, std::string("threw: ") + ex.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (out.status == Outcome::Pass && e.limit_seconds > 0 && secs > e.limit_seconds) {
      out.status = Outcome::Fail;
      out.detail += "; over the " + fmt(e.limit_seconds, 4) + " s limit";
    }
    const char* tag = out.status == Outcome::Pass ? "PASS" : out.status == Outcome::Skip ? "SKIP" : "FAIL";
    std::cout << "criterion " << std::setw(2) << e.id << " [" << tag << "] " << e.title << ": " << out.detail
              << " (" << std::fixed << std::setprecision(1) << secs << " s)" << std::defaultfloat << std::endl;
    failed += out.status == Outcome::Fail;
  }
  return failed == 0 ? 0 : 1;
}
