// Acceptance run: one PASS/FAIL line per criterion.
//
//   freqlens_acceptance [--config micro.cfg] [--only 1,2,8]
//
// Criteria 1-7 are exact property checks; 8-14 train the micro models
// described by the golden config and compare them directionally.
#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <semaphore>
#include <set>
#include <sstream>

#include "freqlens/augment.hpp"
#include "freqlens/cka.hpp"
#include "freqlens/fft.hpp"
#include "freqlens/grad_check.hpp"
#include "freqlens/harness.hpp"
#include "freqlens/io.hpp"
#include "freqlens/log.hpp"
#include "freqlens/quant.hpp"
#include "freqlens/spectral.hpp"
#include "oracles.hpp"

using namespace freqlens;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

double max_abs_diff(std::span<const float> a, std::span<const float> b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

bool same_bits(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

// ---- 1 ---------------------------------------------------------------------

Verdict autodiff() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    auto net = oracle::random_micro_net(rng, 2, 6, 3);
    auto x = oracle::random_images(4, 2, 6, 6, rng);
    auto y = oracle::random_labels(4, 3, rng);
    auto res = grad_check(net, x, y, 1e-5, 6, rng());
    v.require(!res.vacuous && res.samples > 0, "micro-net " + std::to_string(trial) + " has no sampled gradient");
    worst = std::max(worst, res.max_rel_error);
  }
  v.require(worst < 1e-3, "micro-net rel error " + fmt(worst) + " >= 1e-3");
  Network lin({LayerSpec::pool(), LayerSpec::dense(3, 4)}, 3, 4, 4, 5);
  auto x = oracle::random_images(6, 3, 4, 4, rng);
  auto y = oracle::random_labels(6, 4, rng);
  const double lin_err = grad_check(lin, x, y, 1e-6, 16, 1).max_rel_error;
  v.require(lin_err < 1e-4, "linear-softmax rel error " + fmt(lin_err) + " >= 1e-4");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  v.require(secs < 60.0, "runtime " + fmt(secs) + " s");
  v.note("20 micro-nets max rel " + fmt(worst) + ", linear-softmax " + fmt(lin_err) + ", " + fmt(secs, 3) + " s");
  return v;
}

// ---- 2 ---------------------------------------------------------------------

Verdict spectral() {
  Verdict v;
  std::mt19937_64 rng(2);
  double decomp = 0, inner = 0, idem = 0;
  for (int trial = 0; trial < 50; ++trial) {
    SignalMatrix x{2 + trial % 7, 1 + trial % 5, {}};
    x.x = oracle::uniform_d(size_t(x.n * x.d), rng);
    auto lo = lfi(x), hi = hfi(x);
    double ip = 0;
    for (size_t i = 0; i < x.x.size(); ++i) {
      decomp = std::max(decomp, std::abs(lo.x[i] + hi.x[i] - x.x[i]));
      ip += lo.x[i] * hi.x[i];
    }
    inner = std::max(inner, std::abs(ip));
    auto lo2 = lfi(lo), hi2 = hfi(hi);
    for (size_t i = 0; i < x.x.size(); ++i)
      idem = std::max({idem, std::abs(lo2.x[i] - lo.x[i]), std::abs(hi2.x[i] - hi.x[i])});
  }
  v.require(decomp < 1e-6, "LFI+HFI residual " + fmt(decomp));
  v.require(inner < 1e-6, "<LFI,HFI> " + fmt(inner));
  v.require(idem < 1e-6, "projector idempotence " + fmt(idem));

  double roundtrip = 0, parseval = 0, naive = 0;
  for (int64_t n : {8, 16, 27, 32}) {
    auto sig = oracle::uniform_d(size_t(n), rng);
    std::vector<fft::Complex> buf(sig.begin(), sig.end());
    fft::dft1d_inplace(buf, false);
    double e_time = 0, e_freq = 0, norm = 0;
    for (size_t i = 0; i < buf.size(); ++i) {
      e_time += sig[i] * sig[i];
      e_freq += std::norm(buf[i]);
    }
    parseval = std::max(parseval, std::abs(e_freq / double(n) - e_time) / e_time);
    auto ref = oracle::dft1(sig);
    for (size_t i = 0; i < buf.size(); ++i) {
      naive = std::max(naive, std::abs(buf[i] - ref[i]) / std::sqrt(e_freq));
    }
    fft::dft1d_inplace(buf, true);
    for (size_t i = 0; i < buf.size(); ++i) {
      roundtrip = std::max(roundtrip, std::abs(buf[i].real() - sig[i]));
      norm = std::max(norm, std::abs(sig[i]));
    }
    roundtrip /= norm;
    // 2-D against the naive oracle
    auto img = oracle::uniform_d(size_t(n * 6), rng);
    auto fast = fft::dft2d(img, n, 6);
    auto slow = oracle::dft2(std::vector<oracle::cd>(img.begin(), img.end()), n, 6);
    double scale = 0;
    for (auto& c : slow) scale = std::max(scale, std::abs(c));
    for (size_t i = 0; i < fast.size(); ++i) naive = std::max(naive, std::abs(fast[i] - slow[i]) / scale);
  }
  v.require(roundtrip < 1e-4, "DFT round-trip " + fmt(roundtrip));
  v.require(parseval < 1e-4, "Parseval " + fmt(parseval));
  v.require(naive < 1e-4, "naive-DFT oracle " + fmt(naive));

  auto x = oracle::random_images(3, 3, 16, 16, rng);
  const double ident = max_abs_diff(low_pass_filter(x, 16).data(), x.data());
  v.require(ident < 1e-5, "LPF(d=size) identity " + fmt(ident));
  auto soft = x.clone();
  for (auto& p : soft.data()) p = 0.5f + 0.05f * (p - 0.5f);
  double lpf_idem = 0;
  for (int d : {1, 3, 5, 7, 9, 11, 13, 15, 16}) {
    auto once = low_pass_filter(soft, d);
    lpf_idem = std::max(lpf_idem, max_abs_diff(low_pass_filter(once, d).data(), once.data()));
  }
  v.require(lpf_idem < 1e-5, "LPF idempotence " + fmt(lpf_idem));
  v.note("decomp " + fmt(decomp) + ", round-trip " + fmt(roundtrip) + ", Parseval " + fmt(parseval) + ", naive " +
         fmt(naive) + ", LPF identity " + fmt(ident) + ", LPF idempotence (odd d, d=size) " + fmt(lpf_idem));
  return v;
}

// ---- 3 ---------------------------------------------------------------------

Verdict attacks() {
  Verdict v;
  std::mt19937_64 rng(6);
  const AttackKind kinds[] = {AttackKind::FGSM, AttackKind::PGD, AttackKind::BIM,
                              AttackKind::TPGD, AttackKind::CW,  AttackKind::GN};
  std::uniform_int_distribution<int> pick(0, 5), steps(0, 3), batch(1, 3), chan(1, 3), side(4, 6), classes(2, 4);
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  std::optional<Network> net;
  int64_t c = 1, hw = 4;
  int k = 2, budget = 0, range = 0;
  float worst = 0.0f;
  for (int draw = 0; draw < 1000; ++draw) {
    if (draw % 25 == 0) {
      c = chan(rng);
      hw = side(rng);
      k = classes(rng);
      net.emplace(oracle::random_micro_net(rng, c, hw, k));
    }
    const int64_t b = batch(rng);
    auto x = oracle::random_images(b, c, hw, hw, rng);
    for (auto& p : x.data()) {
      const float u = unit(rng);
      if (u < 0.1f) p = 0.0f;
      else if (u > 0.9f) p = 1.0f;
    }
    auto y = oracle::random_labels(b, k, rng);
    AttackSpec spec;
    spec.kind = kinds[pick(rng)];
    spec.epsilon = unit(rng) * 0.1f;
    spec.alpha = unit(rng) * spec.epsilon;
    spec.steps = spec.kind == AttackKind::FGSM ? 1 : steps(rng);
    spec.random_start = unit(rng) < 0.5f;
    spec.sigma = unit(rng) * 0.2f;
    spec.kappa = unit(rng);
    auto out = run_attack(make_classifier(*net), x, y, spec, rng);
    for (float p : out.x_adv.data()) range += (p < 0.0f || p > 1.0f || !std::isfinite(p));
    if (spec.kind != AttackKind::GN) {
      const float d = static_cast<float>(max_abs_diff(out.x_adv.data(), x.data()));
      worst = std::max(worst, d - spec.epsilon);
      budget += d > spec.epsilon + 1e-6f;
    }
  }
  v.require(budget == 0, std::to_string(budget) + " draws exceed the budget");
  v.require(range == 0, std::to_string(range) + " pixels outside [0,1]");

  int fgsm_mismatch = 0, bim_mismatch = 0;
  for (int trial = 0; trial < 20; ++trial) {
    auto n = oracle::random_micro_net(rng, 2, 6, 3);
    auto model = make_classifier(n);
    auto x = oracle::random_images(3, 2, 6, 6, rng);
    auto y = oracle::random_labels(3, 3, rng);
    const float eps = 0.01f + 0.003f * float(trial);
    std::mt19937_64 r(trial);
    fgsm_mismatch += !same_bits(pgd(model, x, y, AttackSpec::pgd(1, eps, eps, false), r).x_adv,
                                fgsm(model, x, y, eps).x_adv);
    std::mt19937_64 r2(trial);
    bim_mismatch += !same_bits(bim(model, x, y, AttackSpec::bim(5, eps, eps / 4)).x_adv,
                               pgd(model, x, y, AttackSpec::pgd(5, eps, eps / 4, false), r2).x_adv);
  }
  v.require(fgsm_mismatch == 0, "PGD(1, alpha=eps) != FGSM in " + std::to_string(fgsm_mismatch) + " cases");
  v.require(bim_mismatch == 0, "BIM != PGD(no start) in " + std::to_string(bim_mismatch) + " cases");
  v.note("1000 draws, max excess over eps " + fmt(std::max(worst, 0.0f)) + ", FGSM/BIM equivalences bitwise");
  return v;
}

// ---- 4 ---------------------------------------------------------------------

ActivationMatrix to_act(const oracle::Mat& a) {
  ActivationMatrix m;
  m.m = int64_t(a.size());
  m.p = int64_t(a[0].size());
  m.layer = "x";
  for (auto& row : a) m.x.insert(m.x.end(), row.begin(), row.end());
  return m;
}

Verdict cka() {
  Verdict v;
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int64_t> rows(4, 12), cols(2, 16);
  double self = 0, ortho = 0, iso = 0, sym = 0, hsic = 0;
  for (int pair = 0; pair < 50; ++pair) {
    const int64_t m = rows(rng), p = cols(rng), q = cols(rng);
    auto x = oracle::random_mat(m, p, rng), y = oracle::random_mat(m, q, rng);
    const auto ax = to_act(x), ay = to_act(y);
    const double base = linear_cka(ax, ay);
    self = std::max(self, std::abs(linear_cka(ax, ax) - 1.0));
    sym = std::max(sym, std::abs(base - linear_cka(ay, ax)));
    hsic = std::max(hsic, std::abs(base - oracle::cka_oracle(x, y)));
    ortho = std::max(ortho, std::abs(base - linear_cka(to_act(oracle::matmul(x, oracle::random_orthogonal(p, rng))), ay)));
    for (auto& row : x)
      for (double& e : row) e *= 0.37;
    iso = std::max(iso, std::abs(base - linear_cka(to_act(x), ay)));
  }
  v.require(self < 1e-6, "self-similarity " + fmt(self));
  v.require(ortho < 1e-6, "orthogonal invariance " + fmt(ortho));
  v.require(iso < 1e-6, "isotropic scaling " + fmt(iso));
  v.require(sym < 1e-6, "symmetry " + fmt(sym));
  v.require(hsic < 1e-6, "HSIC oracle " + fmt(hsic));
  v.note("50 pairs, worst deviations: self " + fmt(self) + ", orthogonal " + fmt(ortho) + ", scale " + fmt(iso) +
         ", symmetry " + fmt(sym) + ", HSIC " + fmt(hsic));
  return v;
}

// ---- 5 ---------------------------------------------------------------------

Verdict augmentation() {
  Verdict v;
  std::mt19937_64 rng(5);
  const int64_t B = 8, C = 3, H = 8, per = C * H * H;
  ImageBatch batch{oracle::random_images(B, C, H, H, rng), oracle::random_labels(B, 4, rng), {}};

  v.require(same_bits(mixup(batch, constant_source(1.0), rng).images, batch.images), "mixup lambda=1 identity");
  v.require(same_bits(cutmix(batch, constant_source(0.0), rng).images, batch.images), "cutmix empty patch identity");
  for (const bool is_mixup : {true, false}) {
    std::mt19937_64 a(3), b(3);
    auto m = is_mixup ? mixup(batch, constant_source(0.0), a) : cutmix(batch, constant_source(1.0), a);
    bool swapped = true;
    for (auto [i, j] : pair_batch(B, b))
      for (int64_t k = 0; k < per; ++k) swapped &= m.images.data()[i * per + k] == batch.images.data()[j * per + k];
    v.require(swapped, is_mixup ? "mixup lambda=0 swap" : "cutmix full patch swap");
  }

  auto positive = batch;
  positive.images = batch.images.clone();
  for (auto& p : positive.images.data()) p = 0.25f + 0.5f * p;
  auto cut = cutout(positive, beta_source(1.0, 1.0), rng);
  int mask_errors = 0;
  for (int64_t b = 0; b < B; ++b) {
    const auto& box = cut.boxes[b];
    for (int64_t c = 0; c < C; ++c)
      for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < H; ++j) {
          const bool inside = i >= box.h0 && i < box.h0 + box.dh && j >= box.w0 && j < box.w0 + box.dw;
          const int64_t at = ((b * C + c) * H + i) * H + j;
          const float expect = inside ? 0.0f : positive.images.data()[at];
          mask_errors += cut.images.data()[at] != expect;
        }
  }
  v.require(mask_errors == 0, "cutout differs from reference mask at " + std::to_string(mask_errors) + " pixels");

  double label_sum = 0;
  auto net = oracle::random_micro_net(rng, C, H, 4);
  auto adv = attack_network(net, batch, AttackSpec::pgd(3), rng);
  ImageBatch adv_batch{adv.x_adv, batch.labels, {}};
  int out_of_range = 0;
  for (auto mode : {AugMode::AMixup, AugMode::ACutout, AugMode::ACutmix}) {
    auto m = apply_augmentation(mode, adv_batch, beta_source(1.0, 1.0), rng);
    for (float p : m.images.data()) out_of_range += p < 0.0f || p > 1.0f;
    auto t = m.soft_labels(4);
    for (int64_t r = 0; r < B; ++r) {
      double s = 0;
      for (int k = 0; k < 4; ++k) s += t.data()[r * 4 + k];
      label_sum = std::max(label_sum, std::abs(s - 1.0));
    }
  }
  v.require(label_sum < 1e-6, "soft labels sum deviates by " + fmt(label_sum));
  v.require(out_of_range == 0, std::to_string(out_of_range) + " A-mode pixels outside [0,1]");
  v.note("endpoints exact, cutout mask exact, soft-label sum error " + fmt(label_sum));
  return v;
}

// ---- 6 ---------------------------------------------------------------------

Verdict quantization() {
  Verdict v;
  std::mt19937_64 rng(1);
  for (int bits : {2, 4, 8}) {
    auto w = oracle::uniform(1000, rng, -2, 2);
    auto q = quantize_values(w, bits);
    v.require(quantize_values(q, bits) == q, std::to_string(bits) + "-bit idempotence");
    std::set<float> levels(q.begin(), q.end());
    v.require(levels.size() <= size_t((1 << bits) - 1), std::to_string(bits) + "-bit level count");
  }
  auto w = Tensor::from({4, 3, 3, 3}, oracle::uniform(108, rng, -1, 1));
  const double ident = max_abs_diff(fat_transform(w, Tensor::full({27}, 60.0f)).data(), w.data());
  double zero = 0;
  const Tensor masked = fat_transform(w, Tensor::full({27}, -60.0f));
  for (float e : masked.data()) zero = std::max(zero, double(std::abs(e)));
  std::vector<float> logits(27, -60.0f);
  logits[0] = 60.0f;
  auto dc = fat_transform(w, Tensor::from({27}, logits));
  double dc_err = 0;
  for (int64_t r = 0; r < 4; ++r) {
    std::vector<double> row(w.data().begin() + r * 27, w.data().begin() + (r + 1) * 27);
    // a DC-only spectrum inverts to the constant F[0] / N
    const double level = oracle::dft1(row)[0].real() / 27.0;
    for (int64_t k = 0; k < 27; ++k) dc_err = std::max(dc_err, std::abs(double(dc.data()[r * 27 + k]) - level));
  }
  v.require(ident < 1e-5, "FAT identity mask " + fmt(ident));
  v.require(zero < 1e-5, "FAT zero mask " + fmt(zero));
  v.require(dc_err < 1e-5, "FAT DC-only vs DFT oracle " + fmt(dc_err));
  v.note("FAT identity " + fmt(ident) + ", zero " + fmt(zero) + ", DC-only " + fmt(dc_err));
  return v;
}

// ---- 7 ---------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Verdict formats(const fs::path& work) {
  Verdict v;
  fs::create_directories(work);
  SynthConfig sc;
  sc.seed = 7;
  sc.n_per_class = 10;
  sc.size = 32;
  auto ds = synth_dataset(sc);
  for (auto& p : ds.train.pixels) p = std::round(p * 255.0f) / 255.0f;
  write_cifar10_bin(ds.train, work / "a.bin");
  auto back = load_cifar10_bin({work / "a.bin"});
  write_cifar10_bin(back, work / "b.bin");
  v.require(back.pixels == ds.train.pixels && back.labels == ds.train.labels, "CIFAR reload differs");
  v.require(slurp(work / "a.bin") == slurp(work / "b.bin"), "CIFAR rewrite differs");

  ResNetArgs args;
  args.depth_blocks = 1;
  args.image_size = 8;
  args.quant_bits = 4;
  args.fat = true;
  auto net = build_resnet(args, 3);
  std::mt19937_64 rng(2);
  net.forward(oracle::random_images(4, 3, 8, 8, rng));
  save_checkpoint(net, work / "a.fql1");
  auto ck = load_checkpoint(work / "a.fql1");
  bool same = true;
  auto sa = net.state(), sb = ck.net.state();
  same &= sa.size() == sb.size();
  for (size_t i = 0; same && i < sa.size(); ++i) same &= same_bits(sa[i].tensor, sb[i].tensor);
  save_checkpoint(ck.net, work / "b.fql1");
  v.require(same, "checkpoint state differs after reload");
  v.require(slurp(work / "a.fql1") == slurp(work / "b.fql1"), "checkpoint rewrite differs");

  auto cfg = parse_config(R"(
[run]
seed = 12
mode = adversarial
[data]
n_per_class = 12
test_per_class = 6
size = 8
[model]
depth_blocks = 1
[train]
epochs = 2
batch_size = 8
lr_decay = 1:0.5
augmentation = C-cutmix
holdout = 6
[inner_attack]
steps = 2
[holdout_attack]
steps = 2
[eval]
attacks = FGSM, PGD-3
)");
  auto run_once = [&] {
    auto replay = parse_config(cfg.canonical_text());
    auto data = load_dataset(replay.data);
    auto n = build_model(replay);
    return train(n, data, replay.train);
  };
  const auto r1 = run_once(), r2 = run_once();
  std::ostringstream a, b;
  auto dump = [](const RunReport& r, std::ostringstream& s) {
    for (const auto& e : r.epochs)
      s << fmt_double(e.train_loss) << ' ' << fmt_double(e.clean_acc) << ' ' << fmt_double(e.adv_acc) << ' '
        << fmt_double(e.ratio) << ' ' << fmt_double(e.lr) << ' ' << e.aborted << '\n';
    for (const auto& row : r.final_eval) s << row.label << ' ' << fmt_double(row.accuracy) << '\n';
    s << fmt_double(r.initial_ratio);
  };
  dump(r1, a);
  dump(r2, b);
  v.require(a.str() == b.str(), "replayed RunReport differs");
  v.require(r1.epochs.size() == 2, "replay produced " + std::to_string(r1.epochs.size()) + " epochs");
  v.note("CIFAR, checkpoint and 2-epoch AT replay bitwise identical");
  return v;
}

// ---- 8-14 ------------------------------------------------------------------

struct Trained {
  std::string tag;
  Network net;
  RunReport report;
};

struct Directional {
  ExperimentConfig cfg;
  Dataset data;
  Split eval;
  AttackSpec pgd20;
  RobustnessOptions opts;
  std::map<std::string, std::shared_future<std::shared_ptr<Trained>>> runs;

  double accuracy(Network& net, const std::optional<AttackSpec>& spec, std::optional<int> lpf = std::nullopt) {
    auto o = opts;
    o.lpf_degree = lpf;
    return 100.0 * evaluate_robustness(net, eval, spec, o);
  }
  Trained& get(const std::string& tag) { return *runs.at(tag).get(); }
};

std::shared_ptr<Trained> train_variant(const ExperimentConfig& base, const Dataset& data, const std::string& tag) {
  ExperimentConfig cfg = base;
  cfg.train.eval_attacks.clear();
  if (tag == "natural") cfg.train.adversarial = false;
  if (tag == "qm2" || tag == "qm2fat") cfg.model.quant_bits = 2;
  if (tag == "qm2fat") cfg.model.fat = true;
  if (tag == "A-mixup" || tag == "A-cutout" || tag == "A-cutmix") cfg.train.augmentation = aug_mode_from_string(tag);
  auto out = std::make_shared<Trained>(Trained{tag, build_model(cfg), {}});
  const auto t0 = std::chrono::steady_clock::now();
  out->report = train(out->net, data, cfg.train);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::fprintf(stderr, "  trained %-9s in %.0f s\n", tag.c_str(), secs);
  return out;
}

double ratio_growth(const RunReport& r) {
  if (r.epochs.empty() || !(r.initial_ratio > 0.0)) return NAN;
  return r.epochs.back().ratio / r.initial_ratio;
}

Verdict robustness_gap(Directional& d) {
  Verdict v;
  auto& nat = d.get("natural").net;
  auto& at = d.get("at").net;
  const double nc = d.accuracy(nat, std::nullopt), np = d.accuracy(nat, d.pgd20);
  const double ac = d.accuracy(at, std::nullopt), ap = d.accuracy(at, d.pgd20);
  v.require(ap - np >= 20.0, "PGD-20 gap " + fmt(ap - np) + " < 20 points");
  v.require(ac <= nc, "AT clean " + fmt(ac) + " > natural clean " + fmt(nc));
  v.note("PGD-20 AT " + fmt(ap) + " vs natural " + fmt(np) + "; clean AT " + fmt(ac) + " vs natural " + fmt(nc));
  return v;
}

Verdict ratio_trajectory(Directional& d) {
  Verdict v;
  const auto& nat = d.get("natural").report;
  const auto& at = d.get("at").report;
  const double gn = ratio_growth(nat), ga = ratio_growth(at);
  v.require(ga >= 1.5 * gn, "AT growth " + fmt(ga) + " < 1.5 x natural growth " + fmt(gn));
  v.note("R final/initial: AT " + fmt(at.initial_ratio) + " -> " + fmt(at.epochs.back().ratio) + " (x" + fmt(ga) +
         "), natural " + fmt(nat.initial_ratio) + " -> " + fmt(nat.epochs.back().ratio) + " (x" + fmt(gn) + ")");
  return v;
}

Verdict kernel_smoothness(Directional& d) {
  Verdict v;
  const double hn = mean_hf_energy_fraction(kernel_spectrum(d.get("natural").net.stem_weight()));
  const double ha = mean_hf_energy_fraction(kernel_spectrum(d.get("at").net.stem_weight()));
  v.require(ha < hn, "AT stem hf fraction " + fmt(ha) + " >= natural " + fmt(hn));
  v.note("stem hf energy fraction AT " + fmt(ha) + " vs natural " + fmt(hn));
  return v;
}

Verdict lpf_robustness(Directional& d) {
  Verdict v;
  auto& at = d.get("at").net;
  const int degree = static_cast<int>(d.eval.height / 2);
  const double c_full = d.accuracy(at, std::nullopt), p_full = d.accuracy(at, d.pgd20);
  const double c_lpf = d.accuracy(at, std::nullopt, degree), p_lpf = d.accuracy(at, d.pgd20, degree);
  v.require(p_lpf >= p_full - 1.0, "PGD-20 with LPF " + fmt(p_lpf) + " < full-band " + fmt(p_full) + " - 1");
  v.require(c_full - c_lpf <= 8.0, "clean drop " + fmt(c_full - c_lpf) + " > 8 points");
  v.note("d=" + std::to_string(degree) + ": PGD-20 " + fmt(p_full) + " -> " + fmt(p_lpf) + ", clean " + fmt(c_full) +
         " -> " + fmt(c_lpf));
  return v;
}

Verdict quantization_gap(Directional& d) {
  Verdict v;
  auto& q32 = d.get("at").net;
  auto& q2 = d.get("qm2").net;
  auto& fat = d.get("qm2fat").net;
  const double p32 = d.accuracy(q32, d.pgd20), p2 = d.accuracy(q2, d.pgd20), pf = d.accuracy(fat, d.pgd20);
  const double c2 = d.accuracy(q2, std::nullopt), cf = d.accuracy(fat, std::nullopt);
  v.require(p2 < p32, "QM-2 PGD-20 " + fmt(p2) + " >= QM-32 " + fmt(p32));
  v.require(pf >= p2, "QM-2+FAT PGD-20 " + fmt(pf) + " < QM-2 " + fmt(p2));
  v.require(cf >= c2, "QM-2+FAT clean " + fmt(cf) + " < QM-2 " + fmt(c2));
  v.note("PGD-20 QM-32 " + fmt(p32) + ", QM-2 " + fmt(p2) + ", QM-2+FAT " + fmt(pf) + "; clean QM-2 " + fmt(c2) +
         ", QM-2+FAT " + fmt(cf));
  return v;
}

Verdict augmentation_effect(Directional& d) {
  Verdict v;
  const double base = d.accuracy(d.get("at").net, d.pgd20);
  std::string detail = "PGD-20 none " + fmt(base);
  for (const std::string tag : {"A-mixup", "A-cutout", "A-cutmix"}) {
    const double p = d.accuracy(d.get(tag).net, d.pgd20);
    v.require(p <= base + 2.0, tag + " PGD-20 " + fmt(p) + " beats baseline " + fmt(base) + " by > 2");
    detail += ", " + tag + " " + fmt(p);
  }
  v.note(detail);
  return v;
}

Verdict cka_structure(Directional& d) {
  // Activations of each model's own PGD-20 examples, as in the layer study.
  Verdict v;
  const auto batch = probe_batch(d.data.test, d.cfg.eval.cka_examples);
  auto similarity = [&](Network& net) {
    std::mt19937_64 rng(d.cfg.seed);
    return shallow_deep_similarity(cka_matrix(net, attack_network(net, batch, d.pgd20, rng).x_adv));
  };
  const double sn = similarity(d.get("natural").net);
  const double sa = similarity(d.get("at").net);
  v.require(sn > sa, "natural " + fmt(sn) + " <= AT " + fmt(sa));
  v.note("shallow/deep CKA on PGD-20 examples: natural " + fmt(sn) + " vs AT " + fmt(sa));
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string config = FREQLENS_GOLDEN_CONFIG;
  std::vector<int> only;
  app.add_option("-c,--config", config, "micro configuration for criteria 8-14")->check(CLI::ExistingFile);
  app.add_option("--only", only, "run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  log::set_level(log::Level::Warn);

  auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
  const fs::path work = fs::temp_directory_path() / "freqlens_acceptance";

  std::vector<std::pair<int, std::function<Verdict()>>> checks{
      {1, autodiff}, {2, spectral}, {3, attacks}, {4, cka}, {5, augmentation}, {6, quantization},
      {7, [&] { return formats(work); }}};

  std::optional<Directional> dir;
  if (std::any_of(only.begin(), only.end(), [](int id) { return id >= 8; }) || only.empty()) {
    dir.emplace();
    dir->cfg = load_config(config);
    dir->data = load_dataset(dir->cfg.data);
    dir->eval = dir->cfg.eval.examples > 0 ? dir->data.test.head(dir->cfg.eval.examples) : dir->data.test;
    dir->pgd20 = AttackSpec::pgd(20, dir->cfg.train.inner_attack.epsilon, dir->cfg.train.inner_attack.alpha);
    for (const auto& a : dir->cfg.eval.attacks)
      if (a.label() == "PGD-20") dir->pgd20 = a;
    dir->opts.batch_size = dir->cfg.eval.batch_size;
    dir->opts.seed = dir->cfg.seed;

    std::set<std::string> tags;
    if (wanted(8) || wanted(9) || wanted(10) || wanted(14)) tags.insert({"natural", "at"});
    if (wanted(11)) tags.insert("at");
    if (wanted(12)) tags.insert({"at", "qm2", "qm2fat"});
    if (wanted(13)) tags.insert({"at", "A-mixup", "A-cutout", "A-cutmix"});
    // Runs are independent; a counting semaphore keeps at most thread_cap() in flight.
    auto slots = std::make_shared<std::counting_semaphore<64>>(std::clamp(thread_cap(), 1, 64));
    std::fprintf(stderr, "training %zu micro models (%d at a time) from %s\n", tags.size(), thread_cap(),
                 config.c_str());
    for (const auto& tag : tags) {
      dir->runs[tag] = std::async(std::launch::async, [&, tag, slots] {
                         slots->acquire();
                         struct Release {
                           std::counting_semaphore<64>& s;
                           ~Release() { s.release(); }
                         } release{*slots};
                         return train_variant(dir->cfg, dir->data, tag);
                       }).share();
    }
    checks.push_back({8, [&] { return robustness_gap(*dir); }});
    checks.push_back({9, [&] { return ratio_trajectory(*dir); }});
    checks.push_back({10, [&] { return kernel_smoothness(*dir); }});
    checks.push_back({11, [&] { return lpf_robustness(*dir); }});
    checks.push_back({12, [&] { return quantization_gap(*dir); }});
    checks.push_back({13, [&] { return augmentation_effect(*dir); }});
    checks.push_back({14, [&] { return cka_structure(*dir); }});
  }

  int failed = 0, ran = 0;
  for (auto& [id, fn] : checks) {
    if (!wanted(id)) continue;
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("error: ") + e.what();
    }
    ++ran;
    failed += !v.pass;
    std::printf("criterion %2d: %s  %s\n", id, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
