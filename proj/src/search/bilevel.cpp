#include "tnas/search/bilevel.hpp"

#include <chrono>

#include "tnas/core/errors.hpp"
#include "tnas/core/tape.hpp"

namespace tnas {

void validate(const BilevelConfig& cfg) {
  if (cfg.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (cfg.batch_size < 1 || cfg.eval_batch < 1) throw ConfigError("batch size must be positive");
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0)) {
    throw ConfigError("train fraction must lie in (0, 1)");
  }
  if (!(cfg.arch_lr >= 0.0) || !(cfg.weights.lr >= 0.0)) throw ConfigError("learning rates must be >= 0");
  validate(cfg.sampler);
}

namespace {

std::uint64_t group_checksum(const std::vector<DiffArray>& group) {
  std::vector<double> sums;
  sums.reserve(group.size());
  for (const auto& g : group) sums.push_back(static_cast<double>(checksum(g) >> 11));
  return checksum(sums);
}

}  // namespace

BilevelTrainer::BilevelTrainer(SupernetPtr net, const BilevelConfig& cfg)
    : net_(std::move(net)), cfg_(cfg), sampler_rng_(Rng(cfg.seed).split(2)) {
  validate(cfg_);
  arch_ = ArchParams(net_->spec().dims, cfg_.dtype);
  arch_opt_ = std::make_unique<AdamW>(arch_.alphas(), AdamWOptions{.lr = cfg_.arch_lr,
                                                                   .beta1 = cfg_.arch_beta1,
                                                                   .beta2 = cfg_.arch_beta2,
                                                                   .weight_decay = cfg_.arch_weight_decay});
  weight_opt_ = make_optimizer(net_->weights(), cfg_.weights);
}

void BilevelTrainer::begin_epoch(std::int64_t epoch) {
  weight_opt_->set_lr(cosine_lr(cfg_.weights.lr, cfg_.weights.lr_min, epoch, cfg_.epochs));
}

Architecture BilevelTrainer::discretized() const { return discretize(net_->spec(), arch_); }

BilevelTrainer::StepLosses BilevelTrainer::step(const Batch& train, const Batch& val) {
  StepLosses out;
  const double tau = anneal_step(cfg_.sampler, step_);
  const auto weights = net_->weights();

  // architecture phase: weights frozen
  {
    net_->set_weights_requires_grad(false);
    arch_.set_requires_grad(true);
    const auto before = cfg_.verify_phases ? group_checksum(weights) : 0;
    Tape tape;
    {
      Tape::Scope scope(tape);
      const auto mix = sample_mixture(arch_, cfg_.sampler, tau, sampler_rng_);
      auto loss = batch_loss(net_->forward_mixture(val, mix), val);
      out.val = loss.item();
      check_finite(out.val, "validation loss", step_);
      if (cfg_.sampler.regularization == Regularization::L2Anchor) {
        loss = add(loss, anchor_regularizer(arch_.alphas(), cfg_.sampler.reg_scale));
      }
      tape.backward(loss);
    }
    arch_opt_->step();
    if (cfg_.verify_phases && group_checksum(weights) != before) {
      throw ConsistencyError("architecture step modified supernet weights");
    }
  }
  // weight phase: architecture frozen
  {
    arch_.set_requires_grad(false);
    net_->set_weights_requires_grad(true);
    const auto before = cfg_.verify_phases ? group_checksum(arch_.alphas()) : 0;
    Tape tape;
    {
      Tape::Scope scope(tape);
      const auto mix = sample_mixture(arch_, cfg_.sampler, tau, sampler_rng_);
      const auto loss = batch_loss(net_->forward_mixture(train, mix), train);
      out.train = loss.item();
      check_finite(out.train, "training loss", step_);
      tape.backward(loss);
    }
    weight_opt_->step();
    if (cfg_.verify_phases && group_checksum(arch_.alphas()) != before) {
      throw ConsistencyError("weight step modified architecture parameters");
    }
  }
  ++step_;
  return out;
}

BilevelResult train_bilevel(const SupernetPtr& net, const Dataset& train, const Dataset& val,
                            const BilevelConfig& cfg, const Dataset* test,
                            const std::function<void(const EpochLog&)>& on_epoch) {
  BilevelTrainer trainer(net, cfg);
  Rng data_rng = Rng(cfg.seed).split(1);
  BilevelResult result;
  for (std::int64_t e = 0; e < cfg.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    trainer.begin_epoch(e);
    const auto tb = epoch_batches(train.size(), cfg.batch_size, &data_rng);
    const auto vb = epoch_batches(val.size(), cfg.batch_size, &data_rng);
    double tl = 0.0, vl = 0.0;
    for (std::size_t i = 0; i < tb.size(); ++i) {
      const auto losses = trainer.step(train.batch(tb[i], cfg.dtype), val.batch(vb[i % vb.size()], cfg.dtype));
      tl += losses.train;
      vl += losses.val;
    }
    EpochLog log;
    log.epoch = e;
    const auto arch = trainer.discretized();
    log.arch = arch.to_string();
    log.train_loss = tl / static_cast<double>(tb.size());
    log.val_loss = vl / static_cast<double>(tb.size());
    log.val_metric = evaluate_path(*net, arch, val, cfg.eval_batch).accuracy;
    if (test != nullptr) log.test_metric = evaluate_path(*net, arch, *test, cfg.eval_batch).accuracy;
    log.alphas = trainer.arch().snapshot();
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (on_epoch) on_epoch(log);
    result.epochs.push_back(std::move(log));
  }
  result.final_arch = trainer.discretized();
  result.final_alphas = trainer.arch().snapshot();
  result.steps = trainer.steps();
  return result;
}

}  // namespace tnas
