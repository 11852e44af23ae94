#include <doctest/doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "aimsim/error.hpp"
#include "aimsim/pipeline.hpp"
#include "support.hpp"

using namespace aimsim;
using namespace testing;

namespace {

/// Smallest ADC resolution that resolves every output of every converter group.
int fpg_adc_bits(const MappingConfig& m, int rows, int act_bits) {
  const int in_bits = m.input_accumulation == Accumulation::digital ? 1 : act_bits;
  const int part = partition_rows(rows, m.max_rows)[1];
  return static_cast<int>(std::ceil(fpg_bits(m.bits_per_cell, in_bits, part, m.scheme == Scheme::differential)));
}

struct Bundled {
  FloatNetwork folded;
  QuantizedNetwork q;
  ImageBatch test, calib;
  std::vector<ActivationSpec> acts;
};

const Bundled& bundled() {
  static const Bundled b = [] {
    Bundled x;
    x.folded = fold_batchnorm(load_model(data_dir() + "/models/digits_cnn/manifest.json"));
    x.q = quantize_network(x.folded, 8);
    x.test = take_first(load_idx_dataset(data_dir() + "/digits/test-images-idx3-ubyte",
                                         data_dir() + "/digits/test-labels-idx1-ubyte"),
                        200);
    x.calib = take_first(load_idx_dataset(data_dir() + "/digits/calib-images-idx3-ubyte",
                                          data_dir() + "/digits/calib-labels-idx1-ubyte"),
                         100);
    x.acts = calibrate_activation_ranges(x.folded, x.calib, 8);
    return x;
  }();
  return b;
}

const MappingConfig kSchemes[] = {
    scheme(Scheme::offset, 8),
    scheme(Scheme::offset, 2),
    scheme(Scheme::offset, 4, Accumulation::digital, true),
    scheme(Scheme::differential, 7),
    scheme(Scheme::differential, 2),
    scheme(Scheme::differential, 7, Accumulation::digital),
};

}  // namespace

TEST_CASE("activation quantization") {
  ActivationSpec s;
  s.bits = 4;
  s.x_max = 1.5;
  CHECK(quantize_activation(1.5f, s) == 15);
  CHECK(quantize_activation(9.0f, s) == 15);
  CHECK(quantize_activation(-0.3f, s) == 0);
  std::set<int> codes;
  for (int k = 0; k <= 3000; ++k) codes.insert(quantize_activation(k * 0.001f, s));
  CHECK(codes.size() == 16);
  s.is_signed = true;
  s.x_min = -1.5;
  CHECK(quantize_activation(-1.5f, s) == -15);
  CHECK(clip_quantize(0.11, s) == doctest::Approx(0.1));
  s.bits = 1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("activation range calibration") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  SUBCASE("uniform data keeps the whole range") {
    std::vector<float> v(100000);
    for (auto& x : v) x = u(rng);
    const auto s = calibrate_activation_range(v, 8);
    CHECK(s.x_min == 0.0);
    CHECK(s.x_max == doctest::Approx(1.0).epsilon(0.01));
    CHECK_FALSE(s.is_signed);
  }
  SUBCASE("a lone outlier is clipped") {
    std::vector<float> v(1000000);
    for (auto& x : v) x = u(rng);
    v[123] = 100.0f;
    const auto s = calibrate_activation_range(v, 8);
    CHECK(s.x_max < 2.0);
    // L1 objective at the chosen range is below the objective at the outlier itself.
    auto l1 = [&](double xm) {
      ActivationSpec t;
      t.bits = 12;
      t.x_max = xm;
      double e = 0.0;
      for (float x : v) e += std::abs(x - clip_quantize(x, t));
      return e;
    };
    CHECK(l1(s.x_max) < l1(100.0));
  }
  SUBCASE("degenerate data") {
    CHECK(calibrate_activation_range(std::vector<float>(50, 0.0f), 8).x_max == doctest::Approx(1e-6));
    const auto c = calibrate_activation_range(std::vector<float>(50, 0.25f), 8);
    CHECK(c.x_max > 0.0);
    CHECK(quantize_activation(0.25f, c) * c.step() == doctest::Approx(0.25).epsilon(0.01));
  }
  SUBCASE("signed data is anchored symmetrically") {
    const auto s = calibrate_activation_range(std::vector<float>{-2.0f, 1.0f, 0.5f}, 8);
    CHECK(s.is_signed);
    CHECK(s.x_min == -s.x_max);
  }
}

TEST_CASE("convolution unrolling") {
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  SUBCASE("1x1 kernel gives per-pixel channel vectors") {
    s.in_channels = 3;
    s.out_channels = 2;
    CodeTensor t{2, 2, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}};
    const auto u = unroll_conv(s, t);
    CHECK(u == IntMatrix(4, 3, t.data));
  }
  SUBCASE("3x3 valid on 5x5 gives 9 windows of 9") {
    s.kx = s.ky = 3;
    s.in_channels = 1;
    s.out_channels = 1;
    CodeTensor t{5, 5, 1, std::vector<int>(25, 1)};
    const auto u = unroll_conv(s, t);
    CHECK(u.rows() == 9);
    CHECK(u.cols() == 9);
  }
  SUBCASE("unrolled MVM equals direct convolution") {
    std::mt19937_64 rng(6);
    for (int t = 0; t < 20; ++t) {
      std::uniform_int_distribution<int> k(1, 4), c(1, 5), st(1, 2), pad(0, 2), hw(4, 9);
      s.kx = k(rng);
      s.ky = k(rng);
      s.in_channels = c(rng);
      s.out_channels = c(rng);
      s.stride = st(rng);
      s.padding = std::min(pad(rng), std::min(s.kx, s.ky) - 1);
      CodeTensor in{hw(rng), hw(rng), s.in_channels, {}};
      in.data = random_codes(rng, 1, static_cast<std::size_t>(in.h * in.w * in.c), 0, 255).data();
      const IntMatrix w = random_codes(rng, static_cast<std::size_t>(s.matrix_rows()), s.out_channels, -127, 127);
      int oh = 0, ow = 0;
      const auto want = direct_conv(s, in, w, oh, ow);
      const auto got = integer_mvm(w, unroll_conv(s, in));
      REQUIRE(got.size() == static_cast<std::size_t>(oh * ow));
      for (std::size_t p = 0; p < got.size(); ++p)
        for (int j = 0; j < s.out_channels; ++j) REQUIRE(got[p][j] == want[p * s.out_channels + j]);
    }
  }
}

TEST_CASE("error-free layers equal the integer reference") {
  std::mt19937_64 rng(21);
  for (const auto& m : kSchemes) {
    const IntMatrix w = random_codes(rng, 32, 7, -127, 127);
    const IntMatrix x = random_codes(rng, 9, 32, 0, 255);
    PipelineConfig cfg;
    cfg.mapping = m;
    MappedNetwork mapped = map_dense(w, cfg);
    const auto want = integer_mvm(w, x);
    const auto prog = program(mapped, 1, 0);

    RunOptions no_adc;
    no_adc.use_adc = false;
    const RealMatrix y0 = run_layer_mvm(mapped, prog, 0, x, no_adc);

    mapped.cfg.adc.bits = fpg_adc_bits(m, 32, 8);
    mapped.cfg.adc.policy = AdcPolicy::full_range;
    calibrate_adc(mapped, ImageBatch{}, 1);
    const RealMatrix y1 = run_layer_mvm(mapped, prog, 0, x, RunOptions{});
    for (std::size_t v = 0; v < 9; ++v)
      for (std::size_t j = 0; j < 7; ++j) {
        CHECK(y0(v, j) == static_cast<double>(want[v][j]));
        CHECK(y1(v, j) == y0(v, j));
      }
  }
}

TEST_CASE("signed inputs run as two passes") {
  std::mt19937_64 rng(4);
  const IntMatrix w = random_codes(rng, 10, 3, -127, 127);
  const IntMatrix x = random_codes(rng, 4, 10, -255, 255);
  PipelineConfig cfg;
  cfg.mapping = scheme(Scheme::offset, 2);
  const auto mapped = map_dense(w, cfg);
  const auto y = run_layer_signed(mapped, program(mapped, 1, 0), 0, x, RunOptions{});
  const auto want = integer_mvm(w, x);
  for (std::size_t v = 0; v < 4; ++v)
    for (std::size_t j = 0; j < 3; ++j) CHECK(y(v, j) == static_cast<double>(want[v][j]));
}

TEST_CASE("zero input gives the bias through the activation") {
  QuantizedNetwork net = dense_net(IntMatrix(4, 3, 5));
  net.layers[0].bias = {0.5, -0.5, 2.0};
  net.layers[0].spec.activation = Activation::relu;
  ActivationSpec a;
  PipelineConfig cfg;
  const auto mapped = map_network(net, {a}, cfg);
  const Tensor zero(1, 1, 4);
  const auto out = forward_mapped(mapped, program(mapped, 1, 0), std::span<const Tensor>(&zero, 1), RunOptions{});
  CHECK(out[0].data == std::vector<float>{0.5f, 0.0f, 2.0f});
}

TEST_CASE("bundled network: ideal analog execution equals integer inference") {
  const auto& b = bundled();
  std::vector<int> first_pred;
  for (const auto& m : kSchemes) {
    PipelineConfig cfg;
    cfg.mapping = m;
    const auto mapped = map_network(b.q, b.acts, cfg);
    const auto res = run_inference(mapped, b.test, 1, 1);
    CHECK(res.accuracies[0] == digital_reference_accuracy(mapped, b.test));
    const auto pred = predict(mapped, program(mapped, 1, 0), b.test, RunOptions{});
    if (first_pred.empty()) first_pred = pred;
    CHECK(pred == first_pred);  // every scheme makes identical decisions
  }
}

TEST_CASE("bundled network: determinism and the alpha trend") {
  const auto& b = bundled();
  PipelineConfig cfg;
  cfg.mapping = scheme(Scheme::differential, 7);
  cfg.errors = ErrorModel::state_independent(0.1);
  const auto mapped = map_network(b.q, b.acts, cfg);
  const auto r1 = run_inference(mapped, b.test, 2, 7);
  const auto r2 = run_inference(mapped, b.test, 2, 7, Exec::reference);
  CHECK(r1.accuracies == run_inference(mapped, b.test, 2, 7).accuracies);
  CHECK(r1.accuracies == r2.accuracies);

  std::vector<double> means;
  for (double alpha : {0.0, 0.1, 0.2, 0.4, 0.8}) {
    cfg.errors = ErrorModel::state_independent(alpha);
    means.push_back(run_inference(map_network(b.q, b.acts, cfg), b.test, 3, 3).mean);
  }
  for (std::size_t k = 1; k < means.size(); ++k) CHECK(means[k] <= means[k - 1] + 0.02);
  CHECK(means.back() < means.front() - 0.3);
}

TEST_CASE("ADC calibration bookkeeping") {
  std::mt19937_64 rng(5);
  const IntMatrix w = random_codes(rng, 16, 4, -127, 127);
  PipelineConfig cfg;
  cfg.mapping = scheme(Scheme::differential, 2);
  cfg.adc.bits = 6;
  cfg.adc.policy = AdcPolicy::inner_percentile;
  MappedNetwork mapped = map_dense(w, cfg);
  ImageBatch one;
  Tensor img(1, 1, 16);
  for (auto& v : img.data) v = 0.5f;
  one.images.push_back(img);
  one.labels.push_back(0);
  const OutputStats s = calibrate_adc(mapped, one, 1);
  CHECK(s.groups().size() == 4);  // four slices, one partition
  for (const auto& [key, bounds] : s.groups()) {
    CHECK(s.count(key) == 4);  // one conversion per column for one input vector
    CHECK(mapped.cfg.adc.ranges.count(key) == 1);
  }
}

TEST_CASE("pipeline configuration errors") {
  PipelineConfig cfg;
  cfg.rp_hat = -1.0;
  CHECK_THROWS_AS(map_dense(IntMatrix(2, 2, 1), cfg), ConfigError);
  cfg.rp_hat = 0.0;
  cfg.mapping.weight_bits = 6;
  cfg.mapping.bits_per_cell = 5;
  CHECK_THROWS_AS(map_network(dense_net(IntMatrix(2, 2, 1), 8), {ActivationSpec{}}, cfg), ConfigError);
  CHECK_THROWS_AS(run_inference(map_dense(IntMatrix(2, 2, 1), PipelineConfig{}), ImageBatch{}, 0, 1), ConfigError);
}
