#include "freqlens/harness.hpp"

#include <atomic>
#include <cstdlib>
#include <mutex>
#include <thread>

#include "freqlens/log.hpp"
#include "freqlens/spectral.hpp"

namespace freqlens {

namespace fs = std::filesystem;

int thread_cap() {
  if (const char* env = std::getenv("FREQLENS_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
    log::warn("ignoring invalid FREQLENS_THREADS='" + std::string(env) + "'");
  }
  return 1;
}

namespace {

Split filter_classes(const Split& s, int classes, int64_t limit) {
  Split out;
  out.channels = s.channels;
  out.height = s.height;
  out.width = s.width;
  for (int64_t i = 0; i < s.size(); ++i) {
    if (limit > 0 && out.size() >= limit) break;
    if (s.labels[i] >= classes) continue;
    out.labels.push_back(s.labels[i]);
    auto img = s.image(i);
    out.pixels.insert(out.pixels.end(), img.begin(), img.end());
  }
  return out;
}

std::string sanitize(std::string s) {
  for (auto& c : s) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return s;
}

}  // namespace

Dataset load_dataset(const DataConfig& cfg) {
  if (cfg.source == "synth") {
    auto ds = synth_dataset(cfg.synth);
    if (cfg.train_limit > 0) ds.train = ds.train.head(cfg.train_limit);
    if (cfg.test_limit > 0) ds.test = ds.test.head(cfg.test_limit);
    return ds;
  }
  Dataset full = load_cifar10_dir(cfg.cifar_dir);
  Dataset ds;
  ds.train = filter_classes(full.train, cfg.classes, cfg.train_limit);
  ds.test = filter_classes(full.test, cfg.classes, cfg.test_limit);
  ds.num_classes = cfg.classes;
  ds.provenance = full.provenance + " classes<" + std::to_string(cfg.classes);
  ds.disjoint = full.disjoint;
  return ds;
}

Network build_model(const ExperimentConfig& cfg) { return build_resnet(cfg.model, cfg.seed); }

Provenance provenance_of(const ExperimentConfig& cfg) { return Provenance{cfg.hash(), cfg.seed, tool_version()}; }

fs::path output_stem(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.output_dir);
  return cfg.output_dir / (cfg.name + "-" + cfg.hash().substr(0, 8));
}

TrainOutput cmd_train(const ExperimentConfig& cfg) {
  const Dataset data = load_dataset(cfg.data);
  Network net = build_model(cfg);
  const auto prov = provenance_of(cfg);
  TrainOutput out;
  out.report = train(net, data, cfg.train);
  out.report.config_hash = prov.config_hash;
  out.report.seed = prov.seed;
  out.report.version = prov.version;

  const auto stem = output_stem(cfg).string();
  out.checkpoint = stem + ".fql1";
  out.metrics_csv = stem + ".metrics.csv";
  out.eval_csv = stem + ".eval.csv";
  out.ratio_csv = stem + ".ratio.csv";
  nlohmann::json meta = prov.to_json();
  meta["name"] = cfg.name;
  meta["mode"] = cfg.train.adversarial ? "adversarial" : "natural";
  meta["config"] = cfg.canonical_text();
  save_checkpoint(net, out.checkpoint, meta);
  write_run_report_csv(out.report, out.metrics_csv);
  write_eval_csv(out.report.final_eval, out.eval_csv);
  write_ratio_csv(out.report, out.ratio_csv);
  for (const auto& p : {out.checkpoint, out.metrics_csv, out.eval_csv, out.ratio_csv}) write_sidecar(p, prov);
  return out;
}

std::vector<EvalRow> cmd_eval(const ExperimentConfig& cfg, const fs::path& checkpoint,
                              const std::optional<fs::path>& out_csv) {
  auto ck = load_checkpoint(checkpoint);
  const Dataset data = load_dataset(cfg.data);
  const Split split = cfg.eval.examples > 0 ? data.test.head(cfg.eval.examples) : data.test;
  RobustnessOptions opts;
  opts.batch_size = cfg.eval.batch_size;
  opts.seed = cfg.seed;
  opts.lpf_degree = cfg.eval.lpf_degree;
  opts.oblivious_attacker = cfg.eval.oblivious_attacker;
  auto rows = evaluation_table(ck.net, split, cfg.eval.attacks, opts);
  if (out_csv) {
    write_eval_csv(rows, *out_csv);
    write_sidecar(*out_csv, provenance_of(cfg),
                  {{"checkpoint", checkpoint.string()},
                   {"lpf_degree", cfg.eval.lpf_degree ? nlohmann::json(*cfg.eval.lpf_degree) : nlohmann::json()}});
  }
  return rows;
}

SpectraMode spectra_mode_from_string(const std::string& s) {
  if (s == "input-diff") return SpectraMode::InputDiff;
  if (s == "kernel") return SpectraMode::Kernel;
  if (s == "activation-ratio") return SpectraMode::ActivationRatio;
  throw std::invalid_argument("unknown spectra mode '" + s + "' (input-diff, kernel, activation-ratio)");
}

SpectraOutput cmd_spectra(const ExperimentConfig& cfg, const fs::path& checkpoint, SpectraMode mode,
                          const std::optional<AttackSpec>& attack, const fs::path& out_dir) {
  if (mode == SpectraMode::InputDiff && !attack) throw std::invalid_argument("spectra input-diff requires an attack");
  fs::create_directories(out_dir);
  const auto prov = provenance_of(cfg);
  auto ck = load_checkpoint(checkpoint);
  SpectraOutput out;
  auto emit_map = [&](const SpectrumMap& m, const std::string& name) {
    const fs::path pgm = out_dir / (name + ".pgm"), csv = out_dir / (name + ".csv");
    write_pgm16(pgm, m.height, m.width, m.values);
    write_spectrum_csv(m, csv);
    for (const auto& p : {pgm, csv}) {
      write_sidecar(p, prov, {{"checkpoint", checkpoint.string()}});
      out.files.push_back(p);
    }
    out.maps.push_back(m);
  };

  switch (mode) {
    case SpectraMode::InputDiff: {
      const Dataset data = load_dataset(cfg.data);
      const auto batch = probe_batch(data.test, cfg.eval.batch_size);
      std::mt19937_64 rng(cfg.seed);
      auto adv = attack_network(ck.net, batch, *attack, rng, cfg.eval.lpf_degree);
      emit_map(mean_spectrum(batch.images, SpectrumNorm::Log1pMinMax), "input_clean");
      emit_map(mean_spectrum(adv.x_adv, SpectrumNorm::Log1pMinMax), "input_adv");
      emit_map(spectrum_diff(batch.images, adv.x_adv), "input_diff");
      emit_map(spectrum_diff(batch.images, adv.x_adv, SpectrumNorm::Log1pMinMax, DiffMode::DifferenceOfSpectra),
               "input_diff_of_spectra");
      break;
    }
    case SpectraMode::Kernel: {
      std::vector<std::vector<std::string>> rows;
      const auto weights = ck.net.conv_weights();
      for (size_t i = 0; i < weights.size(); ++i) {
        const auto ks = kernel_spectrum(weights[i]);
        const double hf = mean_hf_energy_fraction(ks);
        out.hf_fractions.push_back(hf);
        rows.push_back({std::to_string(i), std::to_string(ks.rows), std::to_string(ks.cols), fmt_double(hf)});
        SpectrumMap m{ks.rows, ks.cols, ks.values, SpectrumNorm::Log1pMinMax};
        log1p_minmax(m.values);
        emit_map(m, "kernel_conv" + std::to_string(i));
      }
      const fs::path csv = out_dir / "kernel_hf_fraction.csv";
      write_csv(csv, {"conv", "rows", "cols", "hf_energy_fraction"}, rows);
      write_sidecar(csv, prov, {{"checkpoint", checkpoint.string()}});
      out.files.push_back(csv);
      break;
    }
    case SpectraMode::ActivationRatio: {
      const Dataset data = load_dataset(cfg.data);
      const auto batch = probe_batch(data.train, cfg.train.probe_size > 0 ? cfg.train.probe_size : cfg.train.batch_size);
      ActivationTrace trace;
      {
        ModeGuard mode_guard(ck.net, false);
        NoGradGuard ng;
        ck.net.forward(batch.images, &trace);
      }
      std::vector<std::vector<std::string>> rows;
      for (size_t i = 0; i < trace.taps.size(); ++i) {
        if (trace.taps[i].rank() != 4) continue;
        const double r = lfi_hfi_ratio(trace.taps[i]);
        out.ratios.emplace_back(trace.names[i], r);
        rows.push_back({trace.names[i], fmt_double(r)});
      }
      const fs::path csv = out_dir / "activation_ratio.csv";
      write_csv(csv, {"layer", "R"}, rows);
      write_sidecar(csv, prov, {{"checkpoint", checkpoint.string()}});
      out.files.push_back(csv);
      break;
    }
  }
  return out;
}

CkaOutput cmd_cka(const ExperimentConfig& cfg, const fs::path& checkpoint, const std::optional<AttackSpec>& attack,
                  const fs::path& out_dir) {
  fs::create_directories(out_dir);
  auto ck = load_checkpoint(checkpoint);
  const Dataset data = load_dataset(cfg.data);
  const auto batch = probe_batch(data.test, cfg.eval.cka_examples);
  Tensor images = batch.images;
  if (attack) {
    std::mt19937_64 rng(cfg.seed);
    images = attack_network(ck.net, batch, *attack, rng).x_adv;
  }
  CkaOutput out;
  out.matrix = cka_matrix(ck.net, images);
  out.shallow_deep = shallow_deep_similarity(out.matrix);
  const auto prov = provenance_of(cfg);
  const nlohmann::json extra{{"checkpoint", checkpoint.string()}, {"attack", attack ? attack->label() : "none"}};
  const fs::path csv = out_dir / "cka.csv", pgm = out_dir / "cka.pgm", scalar = out_dir / "cka_shallow_deep.csv";
  write_cka_csv(out.matrix, csv);
  std::vector<double> clamped(out.matrix.values);
  write_pgm16(pgm, out.matrix.size(), out.matrix.size(), clamped);
  write_csv(scalar, {"shallow_deep_similarity"}, {{fmt_double(out.shallow_deep)}});
  for (const auto& p : {csv, pgm, scalar}) {
    write_sidecar(p, prov, extra);
    out.files.push_back(p);
  }
  return out;
}

bool SweepOutput::partial_failure() const {
  for (const auto& r : rows) {
    if (!r.ok) return true;
  }
  return false;
}

SweepOutput cmd_sweep(const ExperimentConfig& cfg, const std::optional<fs::path>& checkpoint) {
  if (cfg.sweep.axis.empty() || cfg.sweep.values.empty()) {
    throw ConfigError("<config>", 0, "sweep requires sweep.axis and sweep.values");
  }
  const std::string& axis = cfg.sweep.axis;
  if (axis == "lpf_degree" && !checkpoint) throw std::invalid_argument("lpf_degree sweep requires a checkpoint");

  SweepOutput out;
  out.rows.resize(cfg.sweep.values.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next++; i < out.rows.size(); i = next++) {
      SweepRow& row = out.rows[i];
      row.value = cfg.sweep.values[i];
      try {
        ExperimentConfig c = cfg;
        if (axis == "lpf_degree") {
          apply_overrides(c, {"eval.lpf_degree=" + row.value});
          row.table = cmd_eval(c, *checkpoint);
        } else {
          const std::string key = axis == "batch_size"   ? "train.batch_size"
                                  : axis == "quant_bits" ? "model.quant_bits"
                                                         : "train.augmentation";
          apply_overrides(c, {key + "=" + row.value, "run.name=" + cfg.name + "-" + axis + "-" + row.value});
          row.table = cmd_train(c).report.final_eval;
        }
        row.ok = true;
      } catch (const std::exception& e) {
        row.error = e.what();
        log::error("sweep " + axis + "=" + row.value + ": " + row.error);
      }
    }
  };
  const int n = std::min<int>(thread_cap(), static_cast<int>(out.rows.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<std::string> header{axis, "status"};
  header.push_back("Natural");
  for (const auto& a : cfg.eval.attacks) header.push_back(a.label());
  header.push_back("error");
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : out.rows) {
    std::vector<std::string> cells{r.value, r.ok ? "ok" : "error"};
    for (size_t k = 0; k + 3 < header.size(); ++k) {
      cells.push_back(r.ok && k < r.table.size() ? fmt_double(100.0 * r.table[k].accuracy) : "");
    }
    cells.push_back(sanitize(r.error));
    rows.push_back(std::move(cells));
  }
  out.csv = output_stem(cfg).string() + ".sweep-" + axis + ".csv";
  write_csv(out.csv, header, rows);
  write_sidecar(out.csv, provenance_of(cfg), {{"axis", axis}});
  return out;
}

}  // namespace freqlens
