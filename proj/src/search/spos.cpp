#include "tnas/search/spos.hpp"

#include "tnas/core/errors.hpp"
#include "tnas/core/tape.hpp"

namespace tnas {

void validate(const SposConfig& cfg) {
  if (cfg.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (cfg.batch_size < 1) throw ConfigError("batch size must be positive");
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0)) {
    throw ConfigError("train fraction must lie in (0, 1)");
  }
}

SposTrainer::SposTrainer(SupernetPtr net, const SposConfig& cfg)
    : net_(std::move(net)), cfg_(cfg), arch_rng_(Rng(cfg.seed).split(3)) {
  validate(cfg_);
  if (net_->mode() != SupernetMode::WE) throw ConfigError("SPOS trains weight-entangled supernets");
  net_->set_weights_requires_grad(true);
  opt_ = make_optimizer(net_->weights(), cfg_.weights);
}

void SposTrainer::begin_epoch(std::int64_t epoch) {
  opt_->set_lr(cosine_lr(cfg_.weights.lr, cfg_.weights.lr_min, epoch, cfg_.epochs));
}

Architecture SposTrainer::step(const Batch& batch) {
  const auto arch = Architecture::random(net_->spec(), arch_rng_);
  const auto masks = net_->active_masks(arch);
  Tape tape;
  {
    Tape::Scope scope(tape);
    const auto loss = batch_loss(net_->forward_path(batch, arch), batch);
    last_loss_ = loss.item();
    check_finite(last_loss_, "training loss", step_);
    tape.backward(loss);
  }
  opt_->step_masked(masks);
  ++step_;
  return arch;
}

std::vector<double> train_spos(const SupernetPtr& net, const Dataset& train, const SposConfig& cfg,
                               const std::function<void(std::int64_t, double)>& on_epoch) {
  SposTrainer trainer(net, cfg);
  Rng data_rng = Rng(cfg.seed).split(1);
  std::vector<double> losses;
  for (std::int64_t e = 0; e < cfg.epochs; ++e) {
    trainer.begin_epoch(e);
    const auto batches = epoch_batches(train.size(), cfg.batch_size, &data_rng);
    double total = 0.0;
    for (const auto& pos : batches) {
      trainer.step(train.batch(pos, cfg.dtype));
      total += trainer.last_loss();
    }
    losses.push_back(total / static_cast<double>(batches.size()));
    if (on_epoch) on_epoch(e, losses.back());
  }
  return losses;
}

}  // namespace tnas
