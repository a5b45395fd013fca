// Command-line front end: train, eval, spectra, cka, sweep, inspect-checkpoint.

#include <CLI11.hpp>
#include <iostream>

#include "freqlens/harness.hpp"
#include "freqlens/log.hpp"

using namespace freqlens;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "experiment config file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "override a config key: section.key=value (repeatable)");
  cmd->add_flag("-q,--quiet", c.quiet, "only log warnings and errors");
}

ExperimentConfig resolve(const Common& c) {
  if (c.quiet) log::set_level(log::Level::Warn);
  auto cfg = load_config(c.config);
  apply_overrides(cfg, c.overrides);
  return cfg;
}

void print_table(const std::vector<EvalRow>& rows) {
  for (size_t i = 0; i < rows.size(); ++i) std::cout << (i ? "," : "") << rows[i].label;
  std::cout << "\n";
  for (size_t i = 0; i < rows.size(); ++i) std::cout << (i ? "," : "") << fmt_double(100.0 * rows[i].accuracy);
  std::cout << "\n";
}

std::optional<AttackSpec> attack_from_flag(const std::string& token, const ExperimentConfig& cfg) {
  if (token.empty() || token == "none") return std::nullopt;
  // Reuse epsilon/alpha/kappa of the configured suite.
  float eps = 8.0f / 255.0f, alpha = 2.0f / 255.0f, sigma = 0.1f, kappa = 0.0f;
  for (const auto& a : cfg.eval.attacks) {
    if (a.kind == AttackKind::GN) {
      sigma = a.sigma;
    } else if (a.kind != AttackKind::FGSM) {
      eps = a.epsilon;
      alpha = a.alpha;
      kappa = a.kappa;
    }
  }
  auto spec = parse_attack_token(token, eps, alpha, sigma, kappa);
  spec.validate();
  return spec;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"freqlens: frequency-domain analysis of adversarially trained networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", tool_version());

  Common train_c, eval_c, spectra_c, cka_c, sweep_c;
  std::string checkpoint, out, mode = "input-diff", attack, axis, values;
  int lpf = 0;
  bool oblivious = false;

  auto* train_cmd = app.add_subcommand("train", "train a model and write checkpoint + reports");
  add_common(train_cmd, train_c);

  auto* eval_cmd = app.add_subcommand("eval", "accuracy table across the configured attacks");
  add_common(eval_cmd, eval_c);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file (.fql1)")->required();
  eval_cmd->add_option("--lpf", lpf, "low-pass filter degree applied before the model");
  eval_cmd->add_flag("--oblivious", oblivious, "craft examples without the filter; filter only at inference");
  eval_cmd->add_option("-o,--out", out, "CSV output path");

  auto* spectra_cmd = app.add_subcommand("spectra", "frequency-domain artifacts (PGM + CSV)");
  add_common(spectra_cmd, spectra_c);
  spectra_cmd->add_option("--checkpoint", checkpoint, "checkpoint file (.fql1)")->required();
  spectra_cmd->add_option("--mode", mode, "input-diff | kernel | activation-ratio");
  spectra_cmd->add_option("--attack", attack, "attack token for input-diff, e.g. PGD-20");
  spectra_cmd->add_option("-o,--out", out, "output directory")->required();

  auto* cka_cmd = app.add_subcommand("cka", "linear CKA matrix between layer activations");
  add_common(cka_cmd, cka_c);
  cka_cmd->add_option("--checkpoint", checkpoint, "checkpoint file (.fql1)")->required();
  cka_cmd->add_option("--attack", attack, "attack applied to the probe images first (e.g. PGD-20)");
  cka_cmd->add_option("-o,--out", out, "output directory")->required();

  auto* sweep_cmd = app.add_subcommand("sweep", "run one command per axis value and merge the tables");
  add_common(sweep_cmd, sweep_c);
  sweep_cmd->add_option("--checkpoint", checkpoint, "model to evaluate (lpf_degree axis)");
  sweep_cmd->add_option("--axis", axis, "lpf_degree | batch_size | quant_bits | augmentation");
  sweep_cmd->add_option("--values", values, "comma-separated axis values");

  std::string inspect_path;
  auto* inspect_cmd = app.add_subcommand("inspect-checkpoint", "print checkpoint metadata");
  inspect_cmd->add_option("path", inspect_path, "checkpoint file (.fql1)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train_cmd) {
      auto cfg = resolve(train_c);
      auto res = cmd_train(cfg);
      std::cout << "checkpoint " << res.checkpoint.string() << "\n";
      std::cout << "metrics " << res.metrics_csv.string() << "\n";
      if (!res.report.final_eval.empty()) print_table(res.report.final_eval);
    } else if (*eval_cmd) {
      auto overrides = eval_c.overrides;
      if (lpf > 0) overrides.push_back("eval.lpf_degree=" + std::to_string(lpf));
      if (oblivious) overrides.push_back("eval.oblivious_attacker=true");
      Common c = eval_c;
      c.overrides = overrides;
      auto cfg = resolve(c);
      std::optional<fs::path> csv;
      if (!out.empty()) csv = out;
      print_table(cmd_eval(cfg, checkpoint, csv));
    } else if (*spectra_cmd) {
      auto cfg = resolve(spectra_c);
      auto res = cmd_spectra(cfg, checkpoint, spectra_mode_from_string(mode), attack_from_flag(attack, cfg), out);
      for (const auto& f : res.files) std::cout << f.string() << "\n";
    } else if (*cka_cmd) {
      auto cfg = resolve(cka_c);
      auto res = cmd_cka(cfg, checkpoint, attack_from_flag(attack, cfg), out);
      std::cout << "shallow_deep_similarity " << fmt_double(res.shallow_deep) << "\n";
    } else if (*sweep_cmd) {
      auto overrides = sweep_c.overrides;
      if (!axis.empty()) overrides.push_back("sweep.axis=" + axis);
      if (!values.empty()) overrides.push_back("sweep.values=" + values);
      Common c = sweep_c;
      c.overrides = overrides;
      auto cfg = resolve(c);
      std::optional<fs::path> ck;
      if (!checkpoint.empty()) ck = checkpoint;
      auto res = cmd_sweep(cfg, ck);
      std::cout << res.csv.string() << "\n";
      if (res.partial_failure()) return kExitPartialSweep;
    } else if (*inspect_cmd) {
      std::cout << inspect_checkpoint(inspect_path).dump(2) << "\n";
    }
  } catch (const ConfigError& e) {
    log::error(std::string("config error: ") + e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    log::error(e.what());
    return kExitRuntime;
  }
  return kExitOk;
}
