#include "tnas/search/train.hpp"

#include <cmath>

#include "tnas/core/errors.hpp"
#include "tnas/core/ops.hpp"
#include "tnas/core/tape.hpp"

namespace tnas {

std::unique_ptr<Optimizer> make_optimizer(std::vector<DiffArray> params, const WeightOptimConfig& cfg) {
  if (!(cfg.lr >= 0.0) || !(cfg.lr_min >= 0.0)) throw ConfigError("learning rates must be >= 0");
  if (cfg.kind == "sgd") {
    return std::make_unique<Sgd>(std::move(params), SgdOptions{.lr = cfg.lr,
                                                               .momentum = cfg.momentum,
                                                               .nesterov = cfg.nesterov,
                                                               .weight_decay = cfg.weight_decay});
  }
  if (cfg.kind == "adamw") {
    return std::make_unique<AdamW>(std::move(params), AdamWOptions{.lr = cfg.lr,
                                                                   .beta1 = cfg.beta1,
                                                                   .beta2 = cfg.beta2,
                                                                   .weight_decay = cfg.weight_decay});
  }
  throw ConfigError("unknown optimizer '" + cfg.kind + "'");
}

void check_finite(double v, const std::string& what, std::int64_t step) {
  if (!std::isfinite(v)) {
    throw DivergenceError(what + " became non-finite at step " + std::to_string(step), static_cast<long>(step));
  }
}

Evaluation evaluate(const ForwardFn& forward, const Dataset& ds, std::int64_t batch_size, DType dtype) {
  if (ds.empty()) throw PreconditionError("cannot evaluate on an empty dataset");
  NoGradScope no_grad;
  double loss = 0.0, hits = 0.0, count = 0.0;
  for (const auto& pos : epoch_batches(ds.size(), batch_size, nullptr)) {
    const auto b = ds.batch(pos, dtype);
    const auto logits = forward(b);
    const auto n = static_cast<double>(b.labels.size());
    loss += batch_loss(logits, b).item() * n;
    hits += batch_accuracy(logits, b) * n;
    count += n;
  }
  return {hits / count, loss / count};
}

Evaluation evaluate_path(const Supernet& net, const Architecture& arch, const Dataset& ds,
                         std::int64_t batch_size) {
  arch.validate(net.spec());
  return evaluate([&](const Batch& b) { return net.forward_path(b, arch); }, ds, batch_size);
}

Evaluation evaluate_inherited(const Supernet& net, const Architecture& arch, const Dataset& ds,
                              std::int64_t batch_size) {
  auto model = net.inherit(arch);
  return evaluate([&](const Batch& b) { return model->forward(b); }, ds, batch_size);
}

void train_model(Model& model, const Dataset& train, const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw ConfigError("epochs must be >= 0");
  auto opt = make_optimizer(model.weights(), cfg.optim);
  Rng rng = Rng(cfg.seed).split(11);
  std::int64_t step = 0;
  for (std::int64_t e = 0; e < cfg.epochs; ++e) {
    opt->set_lr(cosine_lr(cfg.optim.lr, cfg.optim.lr_min, e, cfg.epochs));
    for (const auto& pos : epoch_batches(train.size(), cfg.batch_size, &rng)) {
      const auto b = train.batch(pos, cfg.dtype);
      Tape tape;
      {
        Tape::Scope scope(tape);
        const auto loss = batch_loss(model.forward(b), b);
        check_finite(loss.item(), "training loss", step);
        tape.backward(loss);
      }
      opt->step();
      ++step;
    }
  }
}

Evaluation retrain(const SupernetFactory& factory, const Architecture& arch, const Dataset& train,
                   const Dataset& test, const TrainConfig& cfg) {
  auto net = factory(cfg.seed);
  auto model = net->inherit(arch);
  train_model(*model, train, cfg);
  return evaluate([&](const Batch& b) { return model->forward(b); }, test, 256, cfg.dtype);
}

}  // namespace tnas
