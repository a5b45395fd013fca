#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "freqlens/attacks.hpp"
#include "freqlens/augment.hpp"
#include "freqlens/dataio.hpp"
#include "freqlens/network.hpp"

namespace freqlens {

struct LrStep {
  int epoch = 0;
  float factor = 1.0f;
};

struct TrainConfig {
  int epochs = 120;
  int64_t batch_size = 512;
  float lr = 0.1f;
  float momentum = 0.9f;
  float weight_decay = 5e-4f;
  std::vector<LrStep> lr_decay{{60, 0.1f}, {90, 0.1f}, {110, 0.5f}};
  bool adversarial = true;
  AttackSpec inner_attack = AttackSpec::pgd(7);
  AugMode augmentation = AugMode::None;
  double beta_a = 1.0;
  double beta_b = 1.0;
  bool probe_ratio = true;
  /// Probe batch size; 0 means batch_size.
  int64_t probe_size = 0;
  /// Standard input pipeline.
  int crop_pad = 4;
  bool hflip = true;
  /// Held-out slice (first examples of the test split) scored every epoch;
  /// 0 disables the per-epoch accuracy columns.
  int64_t holdout = 256;
  AttackSpec holdout_attack = AttackSpec::pgd(7);
  /// Attacks scored on the test split after the last epoch.
  std::vector<AttackSpec> eval_attacks;
  /// Test examples used by the final table; 0 means the whole split.
  int64_t eval_examples = 0;
  uint64_t seed = 0;

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
  /// Learning rate used during 1-based `epoch`.
  float lr_at(int epoch) const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double clean_acc = -1.0;  // -1 when not measured
  double adv_acc = -1.0;
  double ratio = -1.0;
  double lr = 0.0;
  bool aborted = false;
};

struct EvalRow {
  std::string label;
  double accuracy = 0.0;
};

struct RunReport {
  std::vector<EpochRecord> epochs;
  std::vector<EvalRow> final_eval;
  double initial_ratio = -1.0;
  /// Provenance, filled by the caller.
  std::string config_hash;
  uint64_t seed = 0;
  std::string version;
};

/// Observer for instrumented runs; called after each optimizer step.
struct StepInfo {
  int epoch = 0;
  int64_t step = 0;
  const ImageBatch* clean = nullptr;
  const AdvBatch* adv = nullptr;  // null for natural steps
  const MixedBatch* trained = nullptr;
  double loss = 0.0;
};
using StepHook = std::function<void(const StepInfo&)>;

RunReport natural_train(Network& net, const Dataset& data, TrainConfig cfg, const StepHook& hook = {});
RunReport adversarial_train(Network& net, const Dataset& data, TrainConfig cfg, const StepHook& hook = {});
/// Dispatches on cfg.adversarial.
RunReport train(Network& net, const Dataset& data, const TrainConfig& cfg, const StepHook& hook = {});

/// Probe-batch ratio of the stem activation (post-activation, eval mode).
double probe_ratio(Network& net, const ImageBatch& probe);

/// Clean accuracy followed by one row per attack, labelled "Natural" and
/// AttackSpec::label().
std::vector<EvalRow> evaluation_table(Network& net, const Split& split, const std::vector<AttackSpec>& attacks,
                                      const RobustnessOptions& options = {});

}  // namespace freqlens
