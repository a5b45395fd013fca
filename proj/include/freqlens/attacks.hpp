#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "freqlens/dataio.hpp"
#include "freqlens/network.hpp"

namespace freqlens {

enum class AttackKind { GN, FGSM, PGD, BIM, TPGD, CW };

std::string to_string(AttackKind kind);
AttackKind attack_kind_from_string(const std::string& name);

struct AttackSpec {
  AttackKind kind = AttackKind::PGD;
  float epsilon = 8.0f / 255.0f;
  float alpha = 2.0f / 255.0f;
  int steps = 20;
  bool random_start = true;
  float sigma = 0.1f;  // GN standard deviation
  float kappa = 0.0f;  // CW margin clamp

  /// Checks 0 <= alpha <= epsilon <= 1, steps >= 0, sigma >= 0, kappa >= 0.
  void validate() const;
  /// Column label used in evaluation tables, e.g. "PGD-20".
  std::string label() const;

  static AttackSpec gn(float sigma = 0.1f);
  static AttackSpec fgsm(float epsilon = 8.0f / 255.0f);
  static AttackSpec pgd(int steps, float epsilon = 8.0f / 255.0f, float alpha = 2.0f / 255.0f,
                        bool random_start = true);
  static AttackSpec bim(int steps, float epsilon = 8.0f / 255.0f, float alpha = 2.0f / 255.0f);
  static AttackSpec tpgd(int steps, float epsilon = 8.0f / 255.0f, float alpha = 2.0f / 255.0f);
  static AttackSpec cw(int steps, float epsilon = 8.0f / 255.0f, float alpha = 2.0f / 255.0f, float kappa = 0.0f);
};

/// The standard evaluation columns, in order: GN, FGSM, PGD-20, BIM-20, TPGD-20, CW-20.
std::vector<AttackSpec> standard_attack_suite(float gn_sigma = 0.1f);

struct AdvBatch {
  Tensor x_adv;
  Tensor x_clean;
  AttackSpec spec;
  /// Set when a non-finite gradient stopped the attack; x_adv then holds
  /// the last finite iterate.
  bool aborted = false;
};

/// Differentiable image -> logits map used by the attacks (white-box).
using Classifier = std::function<Tensor(const Tensor&)>;

/// Classifier over `net`, optionally behind a low-pass filter of the given degree.
Classifier make_classifier(Network& net, std::optional<int> lpf_degree = std::nullopt);

AdvBatch gn(const Tensor& x, float sigma, std::mt19937_64& rng);
AdvBatch fgsm(const Classifier& model, const Tensor& x, std::span<const int> labels, float epsilon);
AdvBatch pgd(const Classifier& model, const Tensor& x, std::span<const int> labels, const AttackSpec& spec,
             std::mt19937_64& rng);
AdvBatch bim(const Classifier& model, const Tensor& x, std::span<const int> labels, const AttackSpec& spec);
AdvBatch tpgd(const Classifier& model, const Tensor& x, const AttackSpec& spec, std::mt19937_64& rng);
AdvBatch cw_pgd(const Classifier& model, const Tensor& x, std::span<const int> labels, const AttackSpec& spec,
                std::mt19937_64& rng);

/// Dispatches on spec.kind.
AdvBatch run_attack(const Classifier& model, const Tensor& x, std::span<const int> labels, const AttackSpec& spec,
                    std::mt19937_64& rng);

/// Runs an attack against `net` in eval mode with parameters frozen.
AdvBatch attack_network(Network& net, const ImageBatch& batch, const AttackSpec& spec, std::mt19937_64& rng,
                        std::optional<int> lpf_degree = std::nullopt);

struct RobustnessOptions {
  int64_t batch_size = 256;
  uint64_t seed = 0;
  std::optional<int> lpf_degree;
  /// When set with lpf_degree, adversarial examples are crafted against the
  /// unfiltered model and the filter is applied only at inference.
  bool oblivious_attacker = false;
};

/// Fraction of `split` classified correctly after the attack (clean inputs
/// when `spec` is empty). Adversarial examples target the evaluated model.
double evaluate_robustness(Network& net, const Split& split, const std::optional<AttackSpec>& spec,
                           const RobustnessOptions& options = {});

}  // namespace freqlens
