#include "freqlens/training.hpp"

#include <cmath>
#include <stdexcept>

#include "freqlens/log.hpp"
#include "freqlens/ops.hpp"
#include "freqlens/optim.hpp"
#include "freqlens/spectral.hpp"

namespace freqlens {

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("train: " + msg); };
  if (epochs < 0) fail("epochs must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(lr > 0.0f)) fail("lr must be > 0");
  if (!(momentum >= 0.0f && momentum < 1.0f)) fail("momentum must lie in [0,1)");
  if (!(weight_decay >= 0.0f)) fail("weight_decay must be >= 0");
  int prev = 0;
  for (const auto& s : lr_decay) {
    if (s.epoch <= prev) fail("lr_decay epochs must be strictly increasing and positive");
    if (s.epoch >= epochs && epochs > 0) fail("lr_decay epoch " + std::to_string(s.epoch) + " is not < epochs");
    if (!(s.factor > 0.0f)) fail("lr_decay factors must be > 0");
    prev = s.epoch;
  }
  if (!(beta_a > 0.0 && beta_b > 0.0)) fail("beta parameters must be > 0");
  if (probe_size < 0) fail("probe_size must be >= 0");
  if (crop_pad < 0) fail("crop_pad must be >= 0");
  if (holdout < 0) fail("holdout must be >= 0");
  if (eval_examples < 0) fail("eval_examples must be >= 0");
  inner_attack.validate();
  holdout_attack.validate();
  for (const auto& a : eval_attacks) a.validate();
}

float TrainConfig::lr_at(int epoch) const {
  float v = lr;
  for (const auto& s : lr_decay) {
    if (s.epoch < epoch) v *= s.factor;
  }
  return v;
}

namespace {

std::mt19937_64 stream(uint64_t seed, uint64_t id) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(id)};
  return std::mt19937_64(seq);
}

void copy_state(const Network& from, Network& to) {
  auto src = from.state();
  auto dst = to.state();
  for (size_t i = 0; i < src.size(); ++i) {
    auto s = src[i].tensor.data();
    auto d = dst[i].tensor.data();
    std::copy(s.begin(), s.end(), d.begin());
  }
}

Tensor training_loss(const Tensor& logits, const MixedBatch& batch, bool soft, int num_classes) {
  if (soft) return ops::soft_label_bce(logits, batch.soft_labels(num_classes));
  return ops::cross_entropy(logits, batch.label_a);
}

RunReport run(Network& net, const Dataset& data, const TrainConfig& cfg, bool adversarial, const StepHook& hook) {
  cfg.validate();
  if (data.train.size() == 0) throw std::invalid_argument("train: empty training split");
  RunReport report;
  report.seed = cfg.seed;

  const int K = static_cast<int>(net.num_classes());
  const bool soft = mixes_labels(cfg.augmentation);
  const auto source = beta_source(cfg.beta_a, cfg.beta_b);
  std::mt19937_64 aug_rng = stream(cfg.seed, 1);
  std::mt19937_64 attack_rng = stream(cfg.seed, 2);

  std::optional<ImageBatch> probe;
  if (cfg.probe_ratio) {
    probe = probe_batch(data.train, cfg.probe_size > 0 ? cfg.probe_size : cfg.batch_size);
    report.initial_ratio = probe_ratio(net, *probe);
  }
  const Split holdout = data.test.head(cfg.holdout);

  Sgd opt(net.parameters(), cfg.momentum, cfg.weight_decay);
  Network last_good = net.clone();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    net.train(true);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = cfg.lr_at(epoch);
    double loss_sum = 0.0;
    int64_t seen = 0, step = 0;
    for (const auto& idx : batch_indices(data.train.size(), cfg.batch_size, true, cfg.seed * 1000003ULL + epoch)) {
      ImageBatch clean = crop_flip(make_batch(data.train, idx), cfg.crop_pad, cfg.hflip, aug_rng);
      MixedBatch trained;
      std::optional<AdvBatch> adv;
      if (!adversarial) {
        trained = apply_augmentation(cfg.augmentation, clean, source, aug_rng);
      } else if (is_clean_mode(cfg.augmentation)) {
        trained = apply_augmentation(cfg.augmentation, clean, source, aug_rng);
        ImageBatch mixed{trained.images, trained.dominant_labels(), clean.indices};
        adv = attack_network(net, mixed, cfg.inner_attack, attack_rng);
        trained.images = adv->x_adv;
      } else {
        adv = attack_network(net, clean, cfg.inner_attack, attack_rng);
        ImageBatch adv_batch{adv->x_adv, clean.labels, clean.indices};
        trained = apply_augmentation(cfg.augmentation, adv_batch, source, aug_rng);
      }

      opt.zero_grad();
      Tensor loss = training_loss(net.forward(trained.images), trained, soft, K);
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        log::error("train: non-finite loss at epoch " + std::to_string(epoch) + ", restoring last good epoch");
        rec.aborted = true;
        break;
      }
      loss.backward();
      if (!opt.step(rec.lr)) {
        log::error("train: non-finite gradient at epoch " + std::to_string(epoch) + ", restoring last good epoch");
        rec.aborted = true;
        break;
      }
      loss_sum += lv * static_cast<double>(trained.size());
      seen += trained.size();
      if (hook) hook(StepInfo{epoch, step, &clean, adv ? &*adv : nullptr, &trained, lv});
      ++step;
    }

    if (rec.aborted) {
      copy_state(last_good, net);
      rec.train_loss = seen > 0 ? loss_sum / static_cast<double>(seen) : NAN;
      report.epochs.push_back(rec);
      break;
    }
    rec.train_loss = loss_sum / static_cast<double>(seen);
    if (holdout.size() > 0) {
      RobustnessOptions opts;
      opts.seed = cfg.seed + static_cast<uint64_t>(epoch);
      rec.clean_acc = evaluate_robustness(net, holdout, std::nullopt, opts);
      rec.adv_acc = evaluate_robustness(net, holdout, cfg.holdout_attack, opts);
    }
    if (probe) rec.ratio = probe_ratio(net, *probe);
    log::info("epoch " + std::to_string(epoch) + " loss " + std::to_string(rec.train_loss) + " lr " +
              std::to_string(rec.lr));
    report.epochs.push_back(rec);
    copy_state(net, last_good);
  }

  net.train(false);
  if (!cfg.eval_attacks.empty() && data.test.size() > 0) {
    const Split eval = cfg.eval_examples > 0 ? data.test.head(cfg.eval_examples) : data.test;
    RobustnessOptions opts;
    opts.seed = cfg.seed;
    report.final_eval = evaluation_table(net, eval, cfg.eval_attacks, opts);
  }
  return report;
}

}  // namespace

double probe_ratio(Network& net, const ImageBatch& probe) {
  ModeGuard mode(net, false);
  NoGradGuard ng;
  ActivationTrace trace;
  net.forward(probe.images, &trace);
  return lfi_hfi_ratio(trace.taps.front());
}

std::vector<EvalRow> evaluation_table(Network& net, const Split& split, const std::vector<AttackSpec>& attacks,
                                      const RobustnessOptions& options) {
  std::vector<EvalRow> rows;
  rows.push_back({"Natural", evaluate_robustness(net, split, std::nullopt, options)});
  for (const auto& a : attacks) rows.push_back({a.label(), evaluate_robustness(net, split, a, options)});
  return rows;
}

RunReport natural_train(Network& net, const Dataset& data, TrainConfig cfg, const StepHook& hook) {
  cfg.adversarial = false;
  return run(net, data, cfg, false, hook);
}

RunReport adversarial_train(Network& net, const Dataset& data, TrainConfig cfg, const StepHook& hook) {
  cfg.adversarial = true;
  return run(net, data, cfg, true, hook);
}

RunReport train(Network& net, const Dataset& data, const TrainConfig& cfg, const StepHook& hook) {
  return run(net, data, cfg, cfg.adversarial, hook);
}

}  // namespace freqlens
