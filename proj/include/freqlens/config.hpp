#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "freqlens/attacks.hpp"
#include "freqlens/dataio.hpp"
#include "freqlens/network.hpp"
#include "freqlens/training.hpp"

namespace freqlens {

struct ConfigError : std::runtime_error {
  ConfigError(const std::string& origin, int line, const std::string& msg)
      : std::runtime_error(origin + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + msg), line(line) {}
  int line = 0;
};

struct DataConfig {
  std::string source = "synth";  // synth | cifar10
  std::filesystem::path cifar_dir;
  /// For cifar10, keeps only labels < classes; for synth, the class count.
  int classes = 2;
  int64_t train_limit = 0;  // 0 = no limit
  int64_t test_limit = 0;
  SynthConfig synth;
};

struct EvalConfig {
  std::vector<AttackSpec> attacks = standard_attack_suite();
  std::optional<int> lpf_degree;
  bool oblivious_attacker = false;
  int64_t examples = 0;  // 0 = whole test split
  int64_t batch_size = 256;
  int64_t cka_examples = 256;
};

struct SweepConfig {
  std::string axis;  // lpf_degree | batch_size | quant_bits | augmentation
  std::vector<std::string> values;
};

struct ExperimentConfig {
  std::string name = "run";
  uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  DataConfig data;
  ResNetArgs model;
  TrainConfig train;
  EvalConfig eval;
  SweepConfig sweep;

  /// Every explicit assignment, keyed "section.key", after overrides.
  std::map<std::string, std::string> assignments;

  /// FNV-1a over the sorted assignments.
  std::string hash() const;
  /// Canonical text form; parsing it yields the same config and hash.
  std::string canonical_text() const;
};

ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies "section.key=value" on top of a parsed config.
void apply_overrides(ExperimentConfig& cfg, const std::vector<std::string>& overrides);

/// "8/255" or a plain decimal.
double parse_number(const std::string& text);
/// "PGD-20", "FGSM", "GN", "CW-20", ... using the given defaults for
/// epsilon, alpha, sigma and kappa.
AttackSpec parse_attack_token(const std::string& token, float epsilon, float alpha, float sigma, float kappa);
std::vector<LrStep> parse_lr_decay(const std::string& text);

}  // namespace freqlens
