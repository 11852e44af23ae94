#include <doctest/doctest.h>

#include <cmath>

#include "aimsim/devices.hpp"
#include "aimsim/error.hpp"
#include "support.hpp"

using namespace aimsim;
using namespace testing;

TEST_CASE("sigma of the error families") {
  CHECK(sigma(ErrorModel::state_independent(0.02), 0.1) == doctest::Approx(0.01));
  CHECK(sigma(ErrorModel::state_independent(0.02), 0.9) == doctest::Approx(0.01));
  CHECK(sigma(ErrorModel::state_proportional(0.02), 0.5) == doctest::Approx(0.01));
  CHECK(sigma(ErrorModel::state_proportional(0.3), 0.0) == 0.0);
  CHECK(sigma(ErrorModel::ideal(), 0.5) == 0.0);

  const auto t = ErrorModel::table({0.0, 0.5, 1.0}, {0.0, 0.02, 0.04});
  CHECK(sigma(t, 0.25) == doctest::Approx(0.01));
  CHECK(sigma(t, 1.0) == doctest::Approx(0.04));
  CHECK_THROWS_AS(sigma(t, 1.5), ConfigError);
}

TEST_CASE("SONOS fit") {
  const auto m = ErrorModel::sonos();
  CHECK(sigma(m, 1e-9) / 1e-9 == doctest::Approx(kSonosSigmaSat / kSonosGc).epsilon(1e-6));
  for (double g = 0.01; g <= 0.3 + 1e-12; g += 0.01) {
    const double rel = sigma(m, g) / g;
    CHECK(rel >= 0.05);
    CHECK(rel <= 0.07);
  }
  // Saturation: sigma grows less over the upper half of the range than over the lower half.
  CHECK(sigma(m, 1.0) - sigma(m, 0.5) < sigma(m, 0.5) - sigma(m, 0.0));

  const auto levels = sonos_seven_bit_levels();
  REQUIRE(levels.size() == 128);
  CHECK(levels[0] == doctest::Approx(1e-7));
  CHECK(levels[127] == 1.0);
  CHECK(levels[64] == doctest::Approx(64.0 / 127.0).epsilon(1e-6));
  CHECK(levels[127] / levels[0] == doctest::Approx(kSonosOnOff));
}

TEST_CASE("programming error sampling") {
  RealMatrix target(4, 5);
  for (std::size_t k = 0; k < target.size(); ++k) target.data()[k] = 0.05 * static_cast<double>(k);
  SeededStream s(1, 0, 0, 0);
  CHECK(sample_programmed(ErrorModel::ideal(), target, s) == target);
  SeededStream z(1, 0, 0, 0);
  CHECK(sample_programmed(ErrorModel::state_proportional(0.2), RealMatrix(3, 3, 0.0), z) == RealMatrix(3, 3, 0.0));

  SUBCASE("sample std at the midpoint") {
    SeededStream big(7, 0, 0, 0);
    const auto out = sample_programmed(ErrorModel::state_independent(0.04), RealMatrix(1000, 1000, 0.5), big);
    double mean = 0.0, ss = 0.0;
    for (double v : out.data()) mean += v;
    mean /= static_cast<double>(out.size());
    for (double v : out.data()) ss += (v - mean) * (v - mean);
    CHECK(std::sqrt(ss / static_cast<double>(out.size() - 1)) == doctest::Approx(0.02).epsilon(0.01));
  }
  SUBCASE("clipping at zero") {
    SeededStream c(3, 0, 0, 0);
    for (double v : sample_programmed(ErrorModel::state_independent(1.0), RealMatrix(50, 50, 0.01), c).data()) {
      CHECK(v >= 0.0);
    }
  }
}

TEST_CASE("streams are addressed by seed, trial, layer and array") {
  auto draw = [](std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
    SeededStream s(a, b, c, d);
    return s.normal();
  };
  CHECK(draw(1, 2, 3, 4) == draw(1, 2, 3, 4));
  CHECK(draw(1, 2, 3, 4) != draw(1, 2, 3, 5));
  CHECK(draw(1, 2, 3, 4) != draw(1, 2, 4, 4));
  CHECK(draw(1, 2, 3, 4) != draw(1, 3, 3, 4));
  CHECK(draw(1, 2, 3, 4) != draw(2, 2, 3, 4));
  CHECK(draw(1ull << 40, 0, 0, 0) != draw(0, 0, 0, 0));
}

TEST_CASE("error accumulation on a bit line grows with N") {
  // Var of a column sum of N independent cell errors is N times the cell variance.
  const auto m = ErrorModel::state_independent(0.1);
  const double cell_var = sigma(m, 0.5) * sigma(m, 0.5);
  for (int n : {16, 64}) {
    SeededStream s(42, 0, 0, static_cast<std::uint64_t>(n));
    const auto g = sample_programmed(m, RealMatrix(20000, static_cast<std::size_t>(n), 0.5), s);
    double mean = 0.0, ss = 0.0;
    std::vector<double> col(g.rows());
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (double v : g.row(r)) col[r] += v - 0.5;
      mean += col[r];
    }
    mean /= static_cast<double>(col.size());
    for (double c : col) ss += (c - mean) * (c - mean);
    CHECK(ss / static_cast<double>(col.size() - 1) / cell_var == doctest::Approx(n).epsilon(0.05));
  }
}

TEST_CASE("error model validation and tables") {
  CHECK_THROWS_AS(ErrorModel::state_independent(-0.1).validate(), ConfigError);
  CHECK_THROWS_AS(ErrorModel::table({0.5, 0.1}, {0.0, 0.0}).validate(), ConfigError);
  const auto dir = temp_dir("sigma_table");
  write_text(dir / "t.csv", "g,sigma\n0,0\n1,0.1\n");
  CHECK(sigma(load_sigma_table(dir / "t.csv"), 0.3) == doctest::Approx(0.03));
  write_text(dir / "bad.csv", "g,sigma\n0,0\nzz,1\n");
  CHECK_THROWS(load_sigma_table(dir / "bad.csv"));
}
