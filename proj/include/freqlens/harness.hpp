#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "freqlens/cka.hpp"
#include "freqlens/config.hpp"
#include "freqlens/io.hpp"
#include "freqlens/training.hpp"

namespace freqlens {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitRuntime = 2, kExitPartialSweep = 3 };

/// Worker cap from FREQLENS_THREADS (default 1).
int thread_cap();

Dataset load_dataset(const DataConfig& cfg);
Network build_model(const ExperimentConfig& cfg);
Provenance provenance_of(const ExperimentConfig& cfg);
/// "<output_dir>/<name>-<hash prefix>" (directories created).
std::filesystem::path output_stem(const ExperimentConfig& cfg);

struct TrainOutput {
  RunReport report;
  std::filesystem::path checkpoint;
  std::filesystem::path metrics_csv;
  std::filesystem::path eval_csv;
  std::filesystem::path ratio_csv;
};

TrainOutput cmd_train(const ExperimentConfig& cfg);

/// One row per column: Natural followed by cfg.eval.attacks.
std::vector<EvalRow> cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                              const std::optional<std::filesystem::path>& out_csv = std::nullopt);

enum class SpectraMode { InputDiff, Kernel, ActivationRatio };
SpectraMode spectra_mode_from_string(const std::string& s);

struct SpectraOutput {
  std::vector<std::filesystem::path> files;
  std::vector<SpectrumMap> maps;           // input-diff: clean, adv, diff, diff-of-spectra
  std::vector<double> hf_fractions;        // kernel: one per conv
  std::vector<std::pair<std::string, double>> ratios;  // activation-ratio: per tapped layer
};

/// input-diff needs `attack`; kernel and activation-ratio need a checkpoint
/// (input-diff also needs one to craft the examples).
SpectraOutput cmd_spectra(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint, SpectraMode mode,
                          const std::optional<AttackSpec>& attack, const std::filesystem::path& out_dir);

struct CkaOutput {
  CkaMatrix matrix;
  double shallow_deep = 0.0;
  std::vector<std::filesystem::path> files;
};

/// CKA on the first cfg.eval.cka_examples test images, optionally after the
/// given attack.
CkaOutput cmd_cka(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                  const std::optional<AttackSpec>& attack, const std::filesystem::path& out_dir);

struct SweepRow {
  std::string value;
  bool ok = false;
  std::string error;
  std::vector<EvalRow> table;
};

struct SweepOutput {
  std::vector<SweepRow> rows;
  std::filesystem::path csv;
  bool partial_failure() const;
};

/// lpf_degree sweeps evaluate `checkpoint`; the other axes train one model
/// per value and report its final table.
SweepOutput cmd_sweep(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& checkpoint);

}  // namespace freqlens
