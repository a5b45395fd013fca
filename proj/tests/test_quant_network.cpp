#include <doctest.h>

#include <set>

#include "freqlens/ops.hpp"
#include "freqlens/quant.hpp"
#include "oracles.hpp"

using namespace freqlens;

TEST_SUITE("quant") {
  TEST_CASE("fake quantization is idempotent with at most 2^n-1 levels") {
    std::mt19937_64 rng(1);
    for (int bits : {2, 4, 8}) {
      auto w = oracle::uniform(500, rng, -2, 2);
      auto q = quantize_values(w, bits);
      auto qq = quantize_values(q, bits);
      CHECK(q == qq);
      std::set<float> levels(q.begin(), q.end());
      CHECK(levels.size() <= size_t((1 << bits) - 1));
    }
  }

  TEST_CASE("32 bits and all-zero tensors pass through") {
    std::vector<float> w{0.1f, -0.3f, 0.25f};
    CHECK(quantize_values(w, 32) == w);
    std::vector<float> z(4, 0.0f);
    CHECK(quantize_values(z, 2) == z);
  }

  TEST_CASE("invalid bit widths are rejected") {
    CHECK_FALSE(valid_quant_bits(3));
    CHECK_THROWS(quantize_weights(Tensor::zeros({2}), 3));
  }

  TEST_CASE("2-bit grid is {-s, 0, s}") {
    std::vector<float> w{1.0f, -0.6f, 0.2f, -1.0f};
    auto q = quantize_values(w, 2);
    CHECK(q == std::vector<float>{1.0f, -1.0f, 0.0f, -1.0f});
  }

  TEST_CASE("straight-through gradient is the identity") {
    auto w = Tensor::from({3}, {0.4f, -0.9f, 0.1f}, true);
    auto loss = ops::sum(ops::mul(quantize_weights(w, 2), Tensor::from({3}, {1.0f, 2.0f, 3.0f})));
    loss.backward();
    CHECK(w.grad()[0] == 1.0f);
    CHECK(w.grad()[1] == 2.0f);
    CHECK(w.grad()[2] == 3.0f);
  }

  TEST_CASE("FAT limits") {
    std::mt19937_64 rng(2);
    auto w = Tensor::from({3, 2, 3, 3}, oracle::uniform(54, rng, -1, 1));
    SUBCASE("identity mask") {
      auto out = fat_transform(w, Tensor::full({18}, 60.0f));
      for (int64_t i = 0; i < w.numel(); ++i) CHECK(std::abs(out.data()[i] - w.data()[i]) < 1e-6);
    }
    SUBCASE("zero mask") {
      auto out = fat_transform(w, Tensor::full({18}, -60.0f));
      for (float v : out.data()) CHECK(std::abs(v) < 1e-6);
    }
    SUBCASE("DC-only mask vs DFT oracle") {
      std::vector<float> logits(18, -60.0f);
      logits[0] = 60.0f;
      auto out = fat_transform(w, Tensor::from({18}, logits));
      for (int64_t r = 0; r < 3; ++r) {
        std::vector<double> row(w.data().begin() + r * 18, w.data().begin() + (r + 1) * 18);
        auto f = oracle::dft1(row);
        // inverse of a DC-only spectrum: every entry equals F0 / N
        for (int k = 0; k < 18; ++k) CHECK(std::abs(out.data()[r * 18 + k] - f[0].real() / 18.0) < 1e-5);
      }
    }
    SUBCASE("mask length mismatch") { CHECK_THROWS_AS(fat_transform(w, Tensor::zeros({9})), std::invalid_argument); }
  }

  TEST_CASE("FAT gradients vs finite differences") {
    std::mt19937_64 rng(3);
    auto wv = oracle::uniform(2 * 9, rng, -1, 1);
    auto lv = oracle::uniform(9, rng, -2, 2);
    auto gv = oracle::uniform(2 * 9, rng, -1, 1);
    auto objective = [&](const std::vector<float>& wd, const std::vector<float>& ld) {
      NoGradGuard ng;
      auto out = fat_transform(Tensor::from({2, 1, 3, 3}, wd), Tensor::from({9}, ld));
      double acc = 0;
      for (size_t i = 0; i < gv.size(); ++i) acc += double(out.data()[i]) * gv[i];
      return acc;
    };
    auto w = Tensor::from({2, 1, 3, 3}, wv, true);
    auto l = Tensor::from({9}, lv, true);
    ops::sum(ops::mul(fat_transform(w, l), Tensor::from({2, 1, 3, 3}, gv))).backward();
    const float h = 1e-2f;
    for (size_t i = 0; i < 9; ++i) {
      auto lp = lv, lm = lv;
      lp[i] += h;
      lm[i] -= h;
      CHECK(l.grad()[i] == doctest::Approx((objective(wv, lp) - objective(wv, lm)) / (2 * h)).epsilon(2e-2));
      auto wp = wv, wm = wv;
      wp[i] += h;
      wm[i] -= h;
      CHECK(w.grad()[i] == doctest::Approx((objective(wp, lv) - objective(wm, lv)) / (2 * h)).epsilon(2e-2));
    }
  }
}

TEST_SUITE("network") {
  TEST_CASE("resnet shapes and weighted layer count") {
    ResNetArgs args;
    args.depth_blocks = 1;
    args.num_classes = 2;
    args.image_size = 16;
    auto net = build_resnet(args, 1);
    CHECK(net.weighted_layer_count() == 8);
    CHECK(net.conv_weights().size() == 7);
    CHECK(net.stem_weight().shape() == Shape{16, 3, 3, 3});
    std::mt19937_64 rng(1);
    ActivationTrace trace;
    auto logits = net.forward(oracle::random_images(3, 3, 16, 16, rng), &trace);
    CHECK(logits.shape() == Shape{3, 2});
    CHECK(trace.taps.size() == 8);
    CHECK(trace.taps.front().shape() == Shape{3, 16, 16, 16});
  }

  TEST_CASE("quantization and FAT skip the stem") {
    ResNetArgs args;
    args.depth_blocks = 1;
    args.quant_bits = 2;
    args.fat = true;
    auto specs = resnet_specs(args);
    CHECK(specs[0].quant_bits == 32);
    CHECK_FALSE(specs[0].fat);
    CHECK(specs.back().quant_bits == 2);
    auto bad = specs;
    bad[0].quant_bits = 4;
    CHECK_THROWS_AS(Network(bad, 3, 32, 32, 0), std::invalid_argument);
  }

  TEST_CASE("validation errors name the layer") {
    std::vector<LayerSpec> specs{LayerSpec::conv(3, 4, 3, 1, 1), LayerSpec::batch_norm(5), LayerSpec::pool(),
                                 LayerSpec::dense(4, 2)};
    try {
      Network(specs, 3, 8, 8, 0);
      FAIL("expected rejection");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
    }
    std::mt19937_64 rng(1);
    Network ok({LayerSpec::conv(3, 4, 3, 1, 1), LayerSpec::pool(), LayerSpec::dense(4, 2)}, 3, 8, 8, 0);
    CHECK_THROWS_AS(ok.forward(oracle::random_images(1, 3, 9, 8, rng)), std::invalid_argument);
  }

  TEST_CASE("clone owns independent storage") {
    ResNetArgs args;
    args.depth_blocks = 1;
    args.image_size = 8;
    auto net = build_resnet(args, 2);
    auto copy = net.clone();
    copy.stem_weight().data()[0] += 1.0f;
    CHECK(copy.stem_weight().data()[0] != net.stem_weight().data()[0]);
    CHECK(copy.state().size() == net.state().size());
  }

  TEST_CASE("same seed, same initialization") {
    ResNetArgs args;
    args.depth_blocks = 1;
    auto a = build_resnet(args, 9), b = build_resnet(args, 9);
    auto sa = a.state(), sb = b.state();
    for (size_t i = 0; i < sa.size(); ++i) {
      CHECK(sa[i].name == sb[i].name);
      CHECK(std::vector<float>(sa[i].tensor.data().begin(), sa[i].tensor.data().end()) ==
            std::vector<float>(sb[i].tensor.data().begin(), sb[i].tensor.data().end()));
    }
  }

  TEST_CASE("eval-mode batchnorm leaves running stats untouched") {
    ResNetArgs args;
    args.depth_blocks = 1;
    args.image_size = 8;
    auto net = build_resnet(args, 3);
    std::mt19937_64 rng(4);
    auto x = oracle::random_images(4, 3, 8, 8, rng);
    auto before = net.layers()[1].bn.running_mean.clone();
    {
      ModeGuard eval(net, false);
      net.forward(x);
    }
    for (int64_t i = 0; i < before.numel(); ++i) CHECK(before.data()[i] == net.layers()[1].bn.running_mean.data()[i]);
    net.forward(x);
    bool moved = false;
    for (int64_t i = 0; i < before.numel(); ++i) moved |= before.data()[i] != net.layers()[1].bn.running_mean.data()[i];
    CHECK(moved);
  }
}
