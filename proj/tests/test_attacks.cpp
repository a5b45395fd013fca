#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "freqlens/attacks.hpp"
#include "freqlens/ops.hpp"
#include "oracles.hpp"

using namespace freqlens;

namespace {

// logits = [0, x]; cross-entropy against label 0 grows with x.
Classifier rising_toy() {
  return [](const Tensor& x) {
    auto flat = ops::reshape(x, {x.dim(0), 1});
    return ops::linear(flat, Tensor::from({2, 1}, {0.0f, 1.0f}), Tensor::zeros({2}));
  };
}

float linf(const Tensor& a, const Tensor& b) {
  float m = 0.0f;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

bool same_bits(const Tensor& a, const Tensor& b) {
  return std::equal(a.data().begin(), a.data().end(), b.data().begin(), b.data().end());
}

}  // namespace

TEST_SUITE("attacks") {
  TEST_CASE("toy loss: iterative attacks stop at the ball boundary") {
    auto x = Tensor::from({1, 1, 1, 1}, {0.5f});
    std::vector<int> y{0};
    std::mt19937_64 rng(1);
    auto spec = AttackSpec::pgd(20, 0.1f, 0.04f, false);
    auto p = pgd(rising_toy(), x, y, spec, rng);
    CHECK(p.x_adv.data()[0] == doctest::Approx(0.6f).epsilon(1e-6));
    auto b = bim(rising_toy(), x, y, AttackSpec::bim(20, 0.1f, 0.04f));
    CHECK(b.x_adv.data()[0] == doctest::Approx(0.6f).epsilon(1e-6));
    auto f = fgsm(rising_toy(), x, y, 0.1f);
    CHECK(f.x_adv.data()[0] == doctest::Approx(0.6f).epsilon(1e-6));
  }

  TEST_CASE("trivial budgets") {
    std::mt19937_64 rng(2);
    auto x = oracle::random_images(2, 1, 4, 4, rng);
    std::vector<int> y{0, 1};
    auto net = oracle::random_micro_net(rng, 1, 4, 2);
    auto model = make_classifier(net);
    CHECK(same_bits(pgd(model, x, y, AttackSpec::pgd(0, 0.1f, 0.01f, false), rng).x_adv, x));
    CHECK(same_bits(fgsm(model, x, y, 0.0f).x_adv, x));
    CHECK(same_bits(gn(x, 0.0f, rng).x_adv, x));
  }

  TEST_CASE("invalid specs are rejected") {
    auto s = AttackSpec::pgd(3);
    s.alpha = s.epsilon * 2;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = AttackSpec::pgd(-1);
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    CHECK_THROWS(attack_kind_from_string("DeepFool"));
  }

  TEST_CASE("labels") {
    CHECK(AttackSpec::pgd(20).label() == "PGD-20");
    CHECK(AttackSpec::fgsm().label() == "FGSM");
    auto suite = standard_attack_suite();
    std::vector<std::string> labels;
    for (auto& a : suite) labels.push_back(a.label());
    CHECK(labels == std::vector<std::string>{"GN", "FGSM", "PGD-20", "BIM-20", "TPGD-20", "CW-20"});
  }

  TEST_CASE("single-step PGD without random start is FGSM, bitwise") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
      auto net = oracle::random_micro_net(rng, 2, 6, 3);
      auto model = make_classifier(net);
      auto x = oracle::random_images(3, 2, 6, 6, rng);
      auto y = oracle::random_labels(3, 3, rng);
      const float eps = 0.01f + 0.05f * float(trial) / 10.0f;
      auto a = pgd(model, x, y, AttackSpec::pgd(1, eps, eps, false), rng);
      auto b = fgsm(model, x, y, eps);
      CHECK(same_bits(a.x_adv, b.x_adv));
    }
  }

  TEST_CASE("BIM equals PGD without random start") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 10; ++trial) {
      auto net = oracle::random_micro_net(rng, 2, 6, 3);
      auto model = make_classifier(net);
      auto x = oracle::random_images(2, 2, 6, 6, rng);
      auto y = oracle::random_labels(2, 3, rng);
      std::mt19937_64 r2(trial);
      auto a = bim(model, x, y, AttackSpec::bim(5, 0.03f, 0.01f));
      auto b = pgd(model, x, y, AttackSpec::pgd(5, 0.03f, 0.01f, false), r2);
      CHECK(same_bits(a.x_adv, b.x_adv));
    }
  }

  TEST_CASE("random start is seeded") {
    std::mt19937_64 rng(5);
    auto net = oracle::random_micro_net(rng, 1, 4, 2);
    auto model = make_classifier(net);
    auto x = oracle::random_images(2, 1, 4, 4, rng);
    std::vector<int> y{0, 1};
    std::mt19937_64 a(9), b(9);
    CHECK(same_bits(pgd(model, x, y, AttackSpec::pgd(3), a).x_adv, pgd(model, x, y, AttackSpec::pgd(3), b).x_adv));
  }

  TEST_CASE("1000 randomized draws respect the budget and the pixel range") {
    std::mt19937_64 rng(6);
    const AttackKind kinds[] = {AttackKind::FGSM, AttackKind::PGD, AttackKind::BIM, AttackKind::TPGD, AttackKind::CW,
                                AttackKind::GN};
    std::uniform_int_distribution<int> pick(0, 5), steps(0, 3), batch(1, 3), chan(1, 3), side(4, 6), classes(2, 4);
    std::uniform_real_distribution<float> unit(0.0f, 1.0f);
    std::optional<Network> net;
    int64_t c = 1, hw = 4;
    int k = 2;
    int violations = 0, range_violations = 0;
    for (int draw = 0; draw < 1000; ++draw) {
      if (draw % 25 == 0) {
        c = chan(rng);
        hw = side(rng);
        k = classes(rng);
        net.emplace(oracle::random_micro_net(rng, c, hw, k));
      }
      const int64_t b = batch(rng);
      auto x = oracle::random_images(b, c, hw, hw, rng);
      // push some pixels onto the box boundary
      for (auto& v : x.data()) {
        const float u = unit(rng);
        if (u < 0.1f) v = 0.0f;
        else if (u > 0.9f) v = 1.0f;
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
      REQUIRE(out.x_adv.shape() == x.shape());
      for (float v : out.x_adv.data()) range_violations += (v < 0.0f || v > 1.0f || !std::isfinite(v));
      if (spec.kind != AttackKind::GN) violations += linf(out.x_adv, x) > spec.epsilon + 1e-6f;
    }
    CHECK(violations == 0);
    CHECK(range_violations == 0);
  }

  TEST_CASE("attack_network leaves parameters and mode untouched") {
    std::mt19937_64 rng(7);
    auto net = oracle::random_micro_net(rng, 1, 4, 2);
    net.train(true);
    auto before = net.state();
    std::vector<std::vector<float>> copy;
    for (auto& s : before) copy.emplace_back(s.tensor.data().begin(), s.tensor.data().end());
    ImageBatch batch{oracle::random_images(2, 1, 4, 4, rng), {0, 1}, {0, 1}};
    attack_network(net, batch, AttackSpec::pgd(3), rng);
    CHECK(net.training());
    auto after = net.state();
    for (size_t i = 0; i < after.size(); ++i)
      CHECK(std::vector<float>(after[i].tensor.data().begin(), after[i].tensor.data().end()) == copy[i]);
  }

  TEST_CASE("evaluate_robustness is batch-size invariant") {
    std::mt19937_64 rng(8);
    auto net = oracle::random_micro_net(rng, 1, 4, 2);
    Split split;
    split.channels = 1;
    split.height = split.width = 4;
    split.pixels = oracle::uniform(10 * 16, rng);
    split.labels = oracle::random_labels(10, 2, rng);
    RobustnessOptions a, b;
    a.batch_size = 3;
    b.batch_size = 10;
    CHECK(evaluate_robustness(net, split, std::nullopt, a) == evaluate_robustness(net, split, std::nullopt, b));
    auto spec = AttackSpec::bim(3);
    CHECK(evaluate_robustness(net, split, spec, a) == evaluate_robustness(net, split, spec, b));
    const double acc = evaluate_robustness(net, split, AttackSpec::pgd(2), a);
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
  }
}
