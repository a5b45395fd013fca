#include "freqlens/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "freqlens/log.hpp"
#include "freqlens/ops.hpp"
#include "freqlens/spectral.hpp"

namespace freqlens {

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::GN: return "GN";
    case AttackKind::FGSM: return "FGSM";
    case AttackKind::PGD: return "PGD";
    case AttackKind::BIM: return "BIM";
    case AttackKind::TPGD: return "TPGD";
    case AttackKind::CW: return "CW";
  }
  return "?";
}

AttackKind attack_kind_from_string(const std::string& name) {
  std::string up = name;
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
  for (auto k : {AttackKind::GN, AttackKind::FGSM, AttackKind::PGD, AttackKind::BIM, AttackKind::TPGD, AttackKind::CW}) {
    if (to_string(k) == up) return k;
  }
  throw std::invalid_argument("unknown attack kind '" + name + "'");
}

void AttackSpec::validate() const {
  if (!(epsilon >= 0.0f && epsilon <= 1.0f)) throw std::invalid_argument("attack: epsilon must lie in [0,1]");
  if (kind != AttackKind::GN && kind != AttackKind::FGSM && !(alpha >= 0.0f && alpha <= epsilon)) {
    throw std::invalid_argument("attack: alpha must lie in [0, epsilon]");
  }
  if (steps < 0) throw std::invalid_argument("attack: steps must be >= 0");
  if (sigma < 0.0f) throw std::invalid_argument("attack: sigma must be >= 0");
  if (kappa < 0.0f) throw std::invalid_argument("attack: kappa must be >= 0");
}

std::string AttackSpec::label() const {
  switch (kind) {
    case AttackKind::GN:
    case AttackKind::FGSM: return to_string(kind);
    default: return to_string(kind) + "-" + std::to_string(steps);
  }
}

AttackSpec AttackSpec::gn(float sigma) {
  AttackSpec s;
  s.kind = AttackKind::GN;
  s.sigma = sigma;
  s.steps = 0;
  s.random_start = false;
  return s;
}

AttackSpec AttackSpec::fgsm(float epsilon) {
  AttackSpec s;
  s.kind = AttackKind::FGSM;
  s.epsilon = epsilon;
  s.alpha = epsilon;
  s.steps = 1;
  s.random_start = false;
  return s;
}

AttackSpec AttackSpec::pgd(int steps, float epsilon, float alpha, bool random_start) {
  AttackSpec s;
  s.kind = AttackKind::PGD;
  s.steps = steps;
  s.epsilon = epsilon;
  s.alpha = alpha;
  s.random_start = random_start;
  return s;
}

AttackSpec AttackSpec::bim(int steps, float epsilon, float alpha) {
  auto s = pgd(steps, epsilon, alpha, false);
  s.kind = AttackKind::BIM;
  return s;
}

AttackSpec AttackSpec::tpgd(int steps, float epsilon, float alpha) {
  auto s = pgd(steps, epsilon, alpha, false);
  s.kind = AttackKind::TPGD;
  return s;
}

AttackSpec AttackSpec::cw(int steps, float epsilon, float alpha, float kappa) {
  auto s = pgd(steps, epsilon, alpha, true);
  s.kind = AttackKind::CW;
  s.kappa = kappa;
  return s;
}

std::vector<AttackSpec> standard_attack_suite(float gn_sigma) {
  return {AttackSpec::gn(gn_sigma), AttackSpec::fgsm(),     AttackSpec::pgd(20),
          AttackSpec::bim(20),      AttackSpec::tpgd(20),   AttackSpec::cw(20)};
}

namespace {

using LossFn = std::function<Tensor(const Tensor& logits)>;

/// d loss / d x at x; empty when the gradient is not finite.
std::optional<std::vector<float>> input_gradient(const Classifier& model, const std::vector<float>& x,
                                                 const Shape& shape, const LossFn& loss_fn) {
  Tensor xi = Tensor::from(shape, x, true);
  Tensor loss = loss_fn(model(xi));
  loss.backward();
  auto g = xi.grad();
  if (!all_finite(g)) return std::nullopt;
  return std::vector<float>(g.begin(), g.end());
}

inline float sign_of(float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); }

/// Signed-gradient ascent with clamp to [0,1] and projection onto the
/// epsilon ball around `clean`.
AdvBatch iterate(const Classifier& model, const Tensor& clean, std::vector<float> start, const AttackSpec& spec,
                 const LossFn& loss_fn) {
  auto c = clean.data();
  std::vector<float> cur = std::move(start);
  bool aborted = false;
  for (int t = 0; t < spec.steps; ++t) {
    auto g = input_gradient(model, cur, clean.shape(), loss_fn);
    if (!g) {
      log::warn("attack: non-finite input gradient, stopping early");
      aborted = true;
      break;
    }
    for (size_t i = 0; i < cur.size(); ++i) {
      const float v = std::clamp(cur[i] + spec.alpha * sign_of((*g)[i]), 0.0f, 1.0f);
      cur[i] = std::clamp(v, c[i] - spec.epsilon, c[i] + spec.epsilon);
    }
  }
  return AdvBatch{Tensor::from(clean.shape(), std::move(cur)), clean, spec, aborted};
}

std::vector<float> uniform_start(const Tensor& x, float epsilon, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(-epsilon, epsilon);
  std::vector<float> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = std::clamp(v + u(rng), 0.0f, 1.0f);
  return out;
}

std::vector<int> to_vec(std::span<const int> labels) { return {labels.begin(), labels.end()}; }

}  // namespace

Classifier make_classifier(Network& net, std::optional<int> lpf_degree) {
  return [&net, lpf_degree](const Tensor& x) {
    return lpf_degree ? net.forward(low_pass_filter(x, *lpf_degree)) : net.forward(x);
  };
}

AdvBatch gn(const Tensor& x, float sigma, std::mt19937_64& rng) {
  if (sigma < 0.0f) throw std::invalid_argument("gn: sigma must be >= 0");
  std::vector<float> out(x.data().begin(), x.data().end());
  if (sigma > 0.0f) {
    std::normal_distribution<float> n(0.0f, sigma);
    for (auto& v : out) v = std::clamp(v + n(rng), 0.0f, 1.0f);
  }
  return AdvBatch{Tensor::from(x.shape(), std::move(out)), x, AttackSpec::gn(sigma), false};
}

AdvBatch fgsm(const Classifier& model, const Tensor& x, std::span<const int> labels, float epsilon) {
  auto spec = AttackSpec::fgsm(epsilon);
  spec.validate();
  std::vector<float> base(x.data().begin(), x.data().end());
  if (epsilon == 0.0f) return AdvBatch{Tensor::from(x.shape(), base), x, spec, false};
  auto ys = to_vec(labels);
  auto g = input_gradient(model, base, x.shape(), [&](const Tensor& z) { return ops::cross_entropy(z, ys); });
  if (!g) {
    log::warn("fgsm: non-finite input gradient, batch left clean");
    return AdvBatch{Tensor::from(x.shape(), base), x, spec, true};
  }
  for (size_t i = 0; i < base.size(); ++i) base[i] = std::clamp(base[i] + epsilon * sign_of((*g)[i]), 0.0f, 1.0f);
  return AdvBatch{Tensor::from(x.shape(), std::move(base)), x, spec, false};
}

AdvBatch pgd(const Classifier& model, const Tensor& x, std::span<const int> labels, const AttackSpec& spec,
             std::mt19937_64& rng) {
  spec.validate();
  auto ys = to_vec(labels);
  auto start = spec.random_start ? uniform_start(x, spec.epsilon, rng)
                                 : std::vector<float>(x.data().begin(), x.data().end());
  return iterate(model, x, std::move(start), spec, [&](const Tensor& z) { return ops::cross_entropy(z, ys); });
}

AdvBatch bim(const Classifier& model, const Tensor& x, std::span<const int> labels, const AttackSpec& spec) {
  auto s = spec;
  s.random_start = false;
  std::mt19937_64 unused(0);
  auto out = pgd(model, x, labels, s, unused);
  out.spec.kind = AttackKind::BIM;
  return out;
}

AdvBatch tpgd(const Classifier& model, const Tensor& x, const AttackSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  Tensor reference;
  {
    NoGradGuard ng;
    Tensor logits = model(x);
    reference = Tensor::from(logits.shape(), ops::softmax_rows(logits.data(), logits.dim(0), logits.dim(1)));
  }
  std::normal_distribution<float> n(0.0f, 0.001f);
  auto c = x.data();
  std::vector<float> start(c.begin(), c.end());
  for (size_t i = 0; i < start.size(); ++i) {
    start[i] = std::clamp(std::clamp(start[i] + n(rng), 0.0f, 1.0f), c[i] - spec.epsilon, c[i] + spec.epsilon);
  }
  return iterate(model, x, std::move(start), spec,
                 [&](const Tensor& z) { return ops::kl_from_reference(z, reference); });
}

AdvBatch cw_pgd(const Classifier& model, const Tensor& x, std::span<const int> labels, const AttackSpec& spec,
                std::mt19937_64& rng) {
  spec.validate();
  auto ys = to_vec(labels);
  auto start = spec.random_start ? uniform_start(x, spec.epsilon, rng)
                                 : std::vector<float>(x.data().begin(), x.data().end());
  return iterate(model, x, std::move(start), spec,
                 [&](const Tensor& z) { return ops::margin_loss(z, ys, spec.kappa); });
}

AdvBatch run_attack(const Classifier& model, const Tensor& x, std::span<const int> labels, const AttackSpec& spec,
                    std::mt19937_64& rng) {
  switch (spec.kind) {
    case AttackKind::GN: return gn(x, spec.sigma, rng);
    case AttackKind::FGSM: return fgsm(model, x, labels, spec.epsilon);
    case AttackKind::PGD: return pgd(model, x, labels, spec, rng);
    case AttackKind::BIM: return bim(model, x, labels, spec);
    case AttackKind::TPGD: return tpgd(model, x, spec, rng);
    case AttackKind::CW: return cw_pgd(model, x, labels, spec, rng);
  }
  throw std::logic_error("unhandled attack kind");
}

AdvBatch attack_network(Network& net, const ImageBatch& batch, const AttackSpec& spec, std::mt19937_64& rng,
                        std::optional<int> lpf_degree) {
  ModeGuard mode(net, false);
  FrozenParams frozen(net);
  return run_attack(make_classifier(net, lpf_degree), batch.images, batch.labels, spec, rng);
}

double evaluate_robustness(Network& net, const Split& split, const std::optional<AttackSpec>& spec,
                           const RobustnessOptions& options) {
  if (split.size() == 0) throw std::invalid_argument("evaluate_robustness: empty dataset");
  ModeGuard mode(net, false);
  FrozenParams frozen(net);
  const auto infer = make_classifier(net, options.lpf_degree);
  const auto attacker = options.oblivious_attacker ? make_classifier(net) : infer;
  std::mt19937_64 rng(options.seed);
  int64_t correct = 0;
  for (const auto& idx : batch_indices(split.size(), options.batch_size, false, 0)) {
    auto batch = make_batch(split, idx);
    Tensor inputs = batch.images;
    if (spec) inputs = run_attack(attacker, batch.images, batch.labels, *spec, rng).x_adv;
    NoGradGuard ng;
    auto pred = ops::argmax_rows(infer(inputs));
    for (size_t i = 0; i < pred.size(); ++i) correct += pred[i] == batch.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(split.size());
}

}  // namespace freqlens
