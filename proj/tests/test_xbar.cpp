#include <doctest/doctest.h>

#include <cmath>
#include <random>

#include "aimsim/devices.hpp"
#include "aimsim/error.hpp"
#include "aimsim/xbar.hpp"
#include "support.hpp"

using namespace aimsim;
using namespace testing;

namespace {

RealMatrix random_g(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RealMatrix g(r, c);
  for (auto& v : g.data()) v = u(rng);
  return g;
}

std::vector<std::uint8_t> random_bits(std::mt19937_64& rng, std::size_t n, double p = 0.5) {
  std::bernoulli_distribution b(p);
  std::vector<std::uint8_t> out(n);
  for (auto& v : out) v = b(rng) ? 1 : 0;
  return out;
}

}  // namespace

TEST_CASE("ideal column currents") {
  std::mt19937_64 rng(1);
  const auto a = ArrayInstance::programmed(random_g(rng, 16, 4), 1, 0.0);
  for (double v : column_currents_ideal(a, std::vector<std::uint8_t>(16, 0))) CHECK(v == 0.0);

  std::vector<std::uint8_t> one(16, 0);
  one[5] = 1;
  const auto c = column_currents_ideal(a, one);
  for (std::size_t j = 0; j < 4; ++j) CHECK(c[j] == a.conductance(5, j));

  const auto bits = random_bits(rng, 16);
  const auto got = column_currents_ideal(a, bits);
  for (std::size_t j = 0; j < 4; ++j) {
    double want = 0.0;
    for (std::size_t i = 0; i < 16; ++i) want += bits[i] * a.conductance(i, j);
    CHECK(got[j] == want);
  }
}

TEST_CASE("parasitic ladder") {
  std::mt19937_64 rng(2);
  SUBCASE("vanishing segment resistance approaches the ideal sum") {
    const auto a = ArrayInstance::programmed(random_g(rng, 32, 3), 1, 0.0, 1e-12);
    const auto bits = random_bits(rng, 32);
    const auto ideal = column_currents_ideal(a, bits);
    const auto par = column_currents_parasitic(a, bits);
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(par[j] - ideal[j]) <= 1e-6 * ideal[j]);
  }
  SUBCASE("single active cell is a series resistor chain") {
    for (double rp : {1e-4, 1e-2, 0.5}) {
      for (int k = 0; k < 20; ++k) {
        std::vector<double> g(20, 0.0);
        g[static_cast<std::size_t>(k)] = 0.37;
        // Cell at node k sits k + 1 segments from the virtual ground.
        const double want = 1.0 / (1.0 / 0.37 + (k + 1) * rp);
        CHECK(std::abs(ladder_current(g, rp) - want) <= 1e-12 * want);
      }
    }
  }
  SUBCASE("recursion matches a dense nodal solve") {
    std::uniform_int_distribution<int> len(1, 64);
    std::uniform_real_distribution<double> u(0.0, 1.0), lrp(-6.0, -1.0);
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
      std::vector<double> g(static_cast<std::size_t>(len(rng)));
      for (auto& v : g) v = u(rng) < 0.3 ? 0.0 : u(rng);
      g.back() = 0.5;
      const double rp = std::pow(10.0, lrp(rng));
      const double want = nodal_current(g, rp);
      worst = std::max(worst, std::abs(ladder_current(g, rp) - want) / want);
    }
    CHECK(worst < 1e-10);
  }
  SUBCASE("node voltages satisfy Kirchhoff's current law") {
    std::vector<double> g(40);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : g) v = u(rng);
    const double rp = 0.01;
    const auto v = ladder_node_voltages(g, rp);
    const double i0 = ladder_current(g, rp);
    CHECK(v[0] / rp == doctest::Approx(i0).epsilon(1e-12));
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double left = (v[i] - (i == 0 ? 0.0 : v[i - 1])) / rp;
      const double right = i + 1 < g.size() ? (v[i + 1] - v[i]) / rp : 0.0;
      CHECK(std::abs(g[i] * (1.0 - v[i]) + right - left) < 1e-9);
      if (i > 0) CHECK(v[i] >= v[i - 1]);
    }
  }
  SUBCASE("array solve equals the per-column ladder") {
    const auto a = ArrayInstance::programmed(random_g(rng, 24, 5), 1, 0.0, 3e-3);
    const auto bits = random_bits(rng, 24);
    const auto got = column_currents_parasitic(a, bits);
    for (std::size_t j = 0; j < 5; ++j) {
      std::vector<double> g(24);
      for (std::size_t i = 0; i < 24; ++i) g[i] = bits[i] ? a.conductance(i, j) : 0.0;
      CHECK(got[j] == doctest::Approx(nodal_current(g, 3e-3)).epsilon(1e-10));
    }
  }
  SUBCASE("zero resistance is rejected by the parasitic solver") {
    const auto a = ArrayInstance::programmed(RealMatrix(2, 2, 0.5), 1, 0.0);
    CHECK_THROWS_AS(column_currents_parasitic(a, std::vector<std::uint8_t>{1, 1}), SimulationError);
  }
}

TEST_CASE("differential pairs under IR drop") {
  // Both columns sag; the difference error is smaller than either column's error.
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int smaller = 0;
  double sum_diff = 0.0, sum_min = 0.0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    RealMatrix g(64, 2);
    for (std::size_t i = 0; i < 64; ++i) {
      const double w = u(rng) - 0.5;  // plus holds w > 0, minus holds w < 0, plus a shared floor
      g(i, 0) = 0.05 + std::max(w, 0.0);
      g(i, 1) = 0.05 + std::max(-w, 0.0);
    }
    const auto a = ArrayInstance::programmed(g, 1, 0.0, 2e-3);
    const auto bits = random_bits(rng, 64);
    const auto ideal = column_currents_ideal(a, bits);
    const auto par = column_currents_parasitic(a, bits);
    const double e_plus = ideal[0] - par[0], e_minus = ideal[1] - par[1];
    CHECK(e_plus > 0.0);
    CHECK(e_minus > 0.0);
    if (std::abs(e_plus - e_minus) < std::min(e_plus, e_minus)) ++smaller;
    sum_diff += std::abs(e_plus - e_minus);
    sum_min += std::min(e_plus, e_minus);
  }
  CHECK(smaller > trials / 2);
  CHECK(sum_diff < sum_min);
}

TEST_CASE("analog vs digital input accumulation") {
  std::mt19937_64 rng(4);
  const IntMatrix codes = random_codes(rng, 12, 5, 0, 127);
  const auto a = ArrayInstance::ideal(codes, 127, 0.0);
  std::vector<int> x(12);
  std::uniform_int_distribution<int> d(0, 255);
  for (auto& v : x) v = d(rng);
  const auto planes = InputBitPlanes::from_codes(x, 8);
  CHECK(planes.reconstruct() == x);

  const auto an = run_array_mvm(a, planes, Accumulation::analog);
  const auto dg = run_array_mvm(a, planes, Accumulation::digital);
  CHECK(an.values == dg.values);
  CHECK(an.adc_conversions == 5);
  CHECK(dg.adc_conversions == 40);
  const auto want = integer_mvm(codes, IntMatrix(1, 12, x));
  for (std::size_t j = 0; j < 5; ++j) CHECK(an.values[j] == static_cast<double>(want[0][j]));
}

TEST_CASE("small worked arrays") {
  SUBCASE("identity") {
    IntMatrix eye(4, 4, 0);
    for (std::size_t i = 0; i < 4; ++i) eye(i, i) = 1;
    const auto a = ArrayInstance::ideal(eye, 1, 0.0);
    const std::vector<int> x{1, 2, 3, 4};
    CHECK(run_array_mvm(a, InputBitPlanes::from_codes(x, 3), Accumulation::analog).values ==
          std::vector<double>{1, 2, 3, 4});
  }
  SUBCASE("plus equals minus") {
    const IntMatrix c(3, 2, 9);
    const auto p = ArrayInstance::ideal(c, 127, 0.0, 0.0, ArrayRole::plus);
    const auto m = ArrayInstance::ideal(c, 127, 0.0, 0.0, ArrayRole::minus);
    const auto in = InputBitPlanes::from_codes(std::vector<int>{3, 1, 2}, 2);
    const auto d = combine_differential(array_analog_output(p, in, Accumulation::analog),
                                        array_analog_output(m, in, Accumulation::analog));
    for (double v : d.values[0]) CHECK(v == 0.0);
  }
  SUBCASE("one pair holding +3") {
    const auto p = ArrayInstance::ideal(IntMatrix(1, 1, 3), 127, 0.0);
    const auto m = ArrayInstance::ideal(IntMatrix(1, 1, 0), 127, 0.0);
    const std::vector<std::uint8_t> on{1};
    CHECK(column_currents_ideal(p, on)[0] - column_currents_ideal(m, on)[0] == doctest::Approx(3.0 / 127.0));
  }
}

TEST_CASE("offset subtraction") {
  SUBCASE("zero weights cancel for any input") {
    const auto st = decompose(IntMatrix(6, 3, 0), scheme(Scheme::offset, 8));
    const auto a = ArrayInstance::ideal(st.blocks[0].codes, 255, 0.0);
    const std::vector<int> x{5, 0, 255, 17, 3, 99};
    const auto cols = run_array_mvm(a, InputBitPlanes::from_codes(x, 8), Accumulation::analog).values;
    for (double v : combine_offset(cols, 379.0, {128, 0.0, false})) CHECK(v == 0.0);
  }
  SUBCASE("W = 1, x = 2") {
    const auto a = ArrayInstance::ideal(IntMatrix(1, 1, 129), 255, 0.0);
    const auto cols = run_array_mvm(a, InputBitPlanes::from_codes(std::vector<int>{2}, 8), Accumulation::analog).values;
    CHECK(cols[0] == 258.0);
    CHECK(combine_offset(cols, 2.0, {128, 0.0, false})[0] == 2.0);
  }
  SUBCASE("unit column equals the digital estimate for ideal cells, including leakage") {
    std::mt19937_64 rng(8);
    const IntMatrix w = random_codes(rng, 10, 4, -127, 127);
    MappingConfig cfg = scheme(Scheme::offset, 8, Accumulation::analog, true);
    cfg.on_off_ratio = 50.0;
    const auto st = decompose(w, cfg);
    const auto a = ArrayInstance::ideal(st.blocks[0].codes, 255, st.g_min);
    const std::vector<int> x{3, 0, 9, 1, 255, 7, 7, 0, 2, 100};
    const auto cols = run_array_mvm(a, InputBitPlanes::from_codes(x, 8), Accumulation::analog).values;
    double xs = 0.0;
    for (int v : x) xs += v;
    const std::span<const double> data(cols.data(), 4);
    const auto with_unit = combine_offset(data, xs, {128, a.leakage(), true}, cols[4]);
    const auto digital = combine_offset(data, xs, {128, a.leakage(), false});
    const auto want = integer_mvm(w, IntMatrix(1, 10, x));
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(with_unit[j] == doctest::Approx(digital[j]).epsilon(1e-12));
      CHECK(digital[j] == doctest::Approx(static_cast<double>(want[0][j])).epsilon(1e-9));
    }
    CHECK_THROWS_AS(combine_offset(data, xs, {128, 0.0, true}), SimulationError);
  }
}

TEST_CASE("batched kernel agrees with the per-vector path") {
  std::mt19937_64 rng(12);
  const IntMatrix inputs = random_codes(rng, 37, 30, 0, 255);
  SeededStream s(1, 0, 0, 0);
  const RealMatrix g = sample_programmed(ErrorModel::state_independent(0.05),
                                         integers_to_conductance(random_codes(rng, 20, 6, 0, 127), 127, 0.01), s);
  for (double rp : {0.0, 1e-3}) {
    const auto a = ArrayInstance::programmed(g, 127, 0.01, rp);
    for (bool per_bit : {false, true}) {
      const auto ref = analog_batch(a, inputs, 5, 8, per_bit, Exec::reference);
      const auto par = analog_batch(a, inputs, 5, 8, per_bit, Exec::parallel);
      REQUIRE(ref.data.size() == par.data.size());
      for (std::size_t k = 0; k < ref.data.size(); ++k) {
        CHECK(par.data[k] == doctest::Approx(ref.data[k]).epsilon(1e-12));
      }
    }
  }
  const auto ideal = ArrayInstance::ideal(random_codes(rng, 20, 6, 0, 127), 127, 0.0);
  CHECK(analog_batch(ideal, inputs, 0, 8, false, Exec::reference).data ==
        analog_batch(ideal, inputs, 0, 8, false, Exec::parallel).data);
  CHECK_THROWS_AS(analog_batch(ideal, inputs, 20, 8, false), SimulationError);
  CHECK_THROWS_AS(analog_batch(ideal, inputs, 0, 7, false), SimulationError);
}
