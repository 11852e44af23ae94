#include <doctest/doctest.h>

#include <sstream>

#include "aimsim/error.hpp"
#include "aimsim/harness.hpp"
#include "support.hpp"

using namespace aimsim;
using namespace testing;

namespace {

std::string config_text(const std::string& extra = "", int trials = 2, const std::string& errors = "") {
  const std::string d = data_dir();
  return "schema_version = 1\nname = \"t\"\n"
         "[model]\nmanifest = \"" + d + "/models/digits_cnn/manifest.json\"\n"
         "[dataset]\ntest_images = \"" + d + "/digits/test-images-idx3-ubyte\"\n"
         "test_labels = \"" + d + "/digits/test-labels-idx1-ubyte\"\n"
         "calib_images = \"" + d + "/digits/calib-images-idx3-ubyte\"\n"
         "calib_labels = \"" + d + "/digits/calib-labels-idx1-ubyte\"\n"
         "test_count = 100\ncalib_count = 50\n"
         "[errors]\n" + (errors.empty() ? "model = \"state_independent\"\nalpha = 0.1\n" : errors) +
         "[run]\ntrials = " + std::to_string(trials) + "\nseed = 5\n" + extra;
}

RunRecord fake(const std::string& name, std::vector<std::pair<std::string, nlohmann::json>> point, double mean) {
  RunRecord r;
  r.name = name;
  r.sweep_point = std::move(point);
  r.mean = mean;
  r.two_sigma = 0.01;
  return r;
}

}  // namespace

TEST_CASE("config parsing") {
  const auto c = parse_experiment(config_text(), "/");
  CHECK(c.name == "t");
  CHECK(c.trials == 2);
  CHECK(c.seed == 5);
  CHECK(c.test_count == 100);
  CHECK(c.pipeline.errors.kind == ErrorKind::state_independent);
  CHECK(c.pipeline.mapping.scheme == Scheme::differential);
  CHECK(c.pipeline.mapping.bits_per_cell == 7);

  SUBCASE("unknown keys are rejected") {
    CHECK_THROWS_AS(parse_experiment(config_text("colour = 3\n"), "/"), ConfigError);
    CHECK_THROWS_AS(parse_experiment(config_text("[mystery]\nx = 1\n"), "/"), ConfigError);
  }
  SUBCASE("schema version must match") {
    std::string t = config_text();
    t.replace(t.find("schema_version = 1"), 18, "schema_version = 9");
    CHECK_THROWS_AS(parse_experiment(t, "/"), ConfigError);
  }
  SUBCASE("type and value errors") {
    CHECK_THROWS_AS(parse_experiment(config_text("threads = \"many\"\n"), "/"), ConfigError);
    CHECK_THROWS_AS(parse_experiment(config_text("", 2, "model = \"gremlins\"\n"), "/"), ConfigError);
    CHECK_THROWS_AS(parse_experiment("name = [", "/"), ConfigError);
  }
  SUBCASE("overrides") {
    const auto o = with_override(c, "run.seed", 99);
    CHECK(o.seed == 99);
    CHECK(o.manifest == c.manifest);
    CHECK_THROWS_AS(with_override(c, "run.nothing", 1), ConfigError);
  }
}

TEST_CASE("sweep expansion") {
  const auto c = parse_experiment(
      config_text("[sweep]\n\"errors.alpha\" = [0.01, 0.02, 0.03]\n\"mapping.scheme\" = [\"offset\", \"differential\"]\n"),
      "/");
  const auto points = expand_sweep(c);
  REQUIRE(points.size() == 6);
  CHECK(points[0].sweep_point.size() == 2);
  CHECK(points[0].pipeline.errors.alpha == doctest::Approx(0.01));
  CHECK(points[5].pipeline.errors.alpha == doctest::Approx(0.03));
  CHECK(points[1].pipeline.mapping.scheme != points[0].pipeline.mapping.scheme);
  CHECK(points[3].resolved_toml.find("sweep") == std::string::npos);
  CHECK_THROWS_AS(parse_experiment(config_text("[sweep]\n\"model.manifest\" = [\"a\"]\n"), "/"), ConfigError);
  CHECK_THROWS_AS(parse_experiment(config_text("[sweep]\n\"errors.alpha\" = []\n"), "/"), ConfigError);
  CHECK_THROWS_AS(parse_experiment(config_text("[sweep]\n\"errors.nope\" = [1]\n"), "/"), ConfigError);
}

TEST_CASE("run records") {
  const auto cfg = parse_experiment(config_text(), "/");
  const Workspace ws = load_workspace(cfg);
  const RunRecord r = run_point(cfg, ws);
  CHECK(r.accuracies.size() == 2);
  CHECK(r.mean == doctest::Approx((r.accuracies[0] + r.accuracies[1]) / 2));
  CHECK(r.two_sigma >= 0.0);
  CHECK(r.op_counts.at("adc_conversions").get<std::int64_t>() > 0);
  CHECK(r.activation_ranges.size() == 3);

  const RunRecord back = RunRecord::from_json(nlohmann::json::parse(r.to_json().dump()));
  CHECK(back.accuracies == r.accuracies);
  CHECK(back.config_toml == r.config_toml);
  CHECK(back.seed == r.seed);
  CHECK(rerun_record(back).accuracies == r.accuracies);
  CHECK(run_point(cfg, ws).accuracies == r.accuracies);
}

TEST_CASE("ten trials give ten accuracies and two sigma") {
  const auto r = summarize({0.9, 0.8, 0.9, 0.8, 0.9, 0.8, 0.9, 0.8, 0.9, 0.8});
  CHECK(r.accuracies.size() == 10);
  CHECK(r.mean == doctest::Approx(0.85));
  CHECK(r.two_sigma == doctest::Approx(2.0 * std::sqrt(0.025 / 9.0 * 1.0)));
}

TEST_CASE("experiment output files") {
  const auto dir = temp_dir("experiment");
  const auto cfg = parse_experiment(
      config_text("output = \"" + dir.string() + "\"\n[sweep]\n\"errors.alpha\" = [0.0, 0.3]\n", 1), "/");
  const auto records = run_experiment(cfg);
  REQUIRE(records.size() == 2);
  CHECK(std::filesystem::exists(dir / "t_0.json"));
  CHECK(std::filesystem::exists(dir / "t_1.json"));
  std::ifstream csv(dir / "summary.csv");
  std::string line;
  int lines = 0;
  while (std::getline(csv, line)) ++lines;
  CHECK(lines == 3);
  CHECK(load_record(dir / "t_1.json").accuracies == records[1].accuracies);
  CHECK(records[0].mean == records[0].digital_accuracy);  // alpha = 0 is the ideal case
}

TEST_CASE("plot data") {
  std::vector<RunRecord> rs{fake("adc", {{"adc.bits", 5}}, 0.5), fake("adc", {{"adc.bits", 6}}, 0.7),
                            fake("adc", {{"adc.bits", 7}}, 0.9)};
  std::ostringstream out;
  emit_plotdata(rs, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "x_param,x,mean,lo,hi,series");
  int rows = 0;
  while (std::getline(in, line)) {
    CHECK(line.rfind("adc.bits,", 0) == 0);
    ++rows;
  }
  CHECK(rows == 3);

  std::ostringstream sink;
  CHECK_THROWS_AS(emit_plotdata({}, sink), ConfigError);
  rs.push_back(fake("other", {{"errors.alpha", 0.1}}, 0.4));
  try {
    emit_plotdata(rs, sink);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("errors.alpha") != std::string::npos);
    CHECK(msg.find("adc.bits") != std::string::npos);
  }
}
