// Command-line experiment runner.
#include <fstream>
#include <iostream>

#include <omp.h>

#include <cli11/CLI11.hpp>

#include "aimsim/analysis.hpp"
#include "aimsim/error.hpp"
#include "aimsim/harness.hpp"

namespace fs = std::filesystem;
using namespace aimsim;

namespace {

struct Overrides {
  std::optional<std::int64_t> seed, trials, threads;
  std::optional<std::string> out;
};

ExperimentConfig apply(ExperimentConfig cfg, const Overrides& o) {
  if (o.seed) cfg = with_override(cfg, "run.seed", *o.seed);
  if (o.trials) cfg = with_override(cfg, "run.trials", *o.trials);
  if (o.threads) cfg = with_override(cfg, "run.threads", *o.threads);
  if (o.out) cfg = with_override(cfg, "run.output", fs::absolute(*o.out).string());
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
  return cfg;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw SimulationError("cannot write " + p.string());
  return f;
}

int simulate(const std::string& input, const Overrides& o) {
  if (fs::path(input).extension() == ".json") {
    const RunRecord old = load_record(input);
    ExperimentConfig cfg = apply(parse_experiment(old.config_toml, "/"), o);
    cfg.sweep_point = old.sweep_point;
    const RunRecord fresh = run_point(cfg, load_workspace(cfg), old.sweep_index);
    fs::create_directories(cfg.output);
    const fs::path dst = fs::path(cfg.output) / (fresh.name + "_" + std::to_string(fresh.sweep_index) + ".json");
    open_out(dst) << fresh.to_json().dump(2) << "\n";
    const bool same = fresh.accuracies == old.accuracies;
    std::cout << "re-ran " << input << ": mean " << fresh.mean << ", accuracies "
              << (same ? "identical to the record" : "DIFFER from the record") << "\n";
    return same || o.seed || o.trials ? 0 : 1;
  }
  const ExperimentConfig cfg = apply(load_experiment(input), o);
  const auto records = run_experiment(cfg, &std::cerr);
  std::cout << "wrote " << records.size() << " record(s) and summary.csv to " << cfg.output.string() << "\n";
  return 0;
}

int calibrate(const std::string& input, const Overrides& o) {
  const ExperimentConfig cfg = apply(load_experiment(input), o);
  const ExperimentConfig point = expand_sweep(cfg).front();
  const Workspace ws = load_workspace(point);
  OutputStats stats;
  const MappedNetwork mapped = prepare(point, ws, &stats);
  nlohmann::json j;
  j["name"] = point.name;
  j["activation_ranges"] = nlohmann::json::array();
  for (std::size_t l = 0; l < mapped.activations.size(); ++l) {
    if (!mapped.is_analog(l)) continue;
    const auto& a = mapped.activations[l];
    j["activation_ranges"].push_back({{"layer", l}, {"bits", a.bits}, {"x_min", a.x_min}, {"x_max", a.x_max},
                                      {"signed", a.is_signed}});
  }
  j["adc"] = {{"bits", mapped.cfg.adc.bits}, {"policy", to_string(mapped.cfg.adc.policy)},
              {"percentile", mapped.cfg.adc.percentile}, {"ranges", nlohmann::json::array()}};
  for (const auto& [key, r] : mapped.cfg.adc.ranges) {
    j["adc"]["ranges"].push_back(
        {{"layer", key.layer}, {"slice", key.slice}, {"partition", key.partition}, {"lo", r.lo}, {"hi", r.hi}});
  }
  fs::create_directories(point.output);
  open_out(point.output / "calibration.json") << j.dump(2) << "\n";
  auto csv = open_out(point.output / "adc_output_stats.csv");
  write_output_stats_csv(csv, stats);
  std::cout << "wrote calibration.json and adc_output_stats.csv to " << point.output.string() << "\n";
  return 0;
}

int stats(const std::string& input, const Overrides& o) {
  const ExperimentConfig cfg = apply(load_experiment(input), o);
  const ExperimentConfig point = expand_sweep(cfg).front();
  const Workspace ws = load_workspace(point);
  OutputStats adc_stats;
  const MappedNetwork mapped = prepare(point, ws, &adc_stats);
  fs::create_directories(point.output);

  std::vector<std::pair<std::string, OpCounts>> ops;
  std::vector<std::pair<int, std::vector<double>>> cond;
  for (std::size_t l = 0; l < mapped.net.layers.size(); ++l) {
    if (!mapped.is_analog(l)) continue;
    const auto& spec = mapped.net.layers[l].spec;
    ops.emplace_back("layer" + std::to_string(l),
                     count_ops(mapped.cfg.mapping, spec.matrix_rows(), spec.matrix_cols(), mapped.activations[l].bits));
    cond.emplace_back(static_cast<int>(l), conductance_stats(mapped.stacks[l]));
  }
  ops.emplace_back("network_per_image", network_op_counts(mapped));
  auto f1 = open_out(point.output / "op_counts.csv");
  write_op_counts_csv(f1, ops);
  auto f2 = open_out(point.output / "conductance_stats.csv");
  write_conductance_stats_csv(f2, cond);
  auto f3 = open_out(point.output / "bitline_currents.csv");
  write_current_stats_csv(f3, bitline_current_stats(mapped, ws.calibration));
  auto f4 = open_out(point.output / "adc_output_stats.csv");
  write_output_stats_csv(f4, adc_stats);
  std::cout << "wrote op_counts.csv, conductance_stats.csv, bitline_currents.csv, adc_output_stats.csv to "
            << point.output.string() << "\n";
  return 0;
}

int plotdata(const std::vector<std::string>& files, const Overrides& o) {
  std::vector<RunRecord> records;
  for (const auto& f : files) records.push_back(load_record(f));
  if (o.out) {
    auto f = open_out(*o.out);
    emit_plotdata(records, f);
  } else {
    emit_plotdata(records, std::cout);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Analog in-memory inference simulator"};
  app.require_subcommand(1);
  Overrides o;
  std::string config;
  std::vector<std::string> records;

  auto add_flags = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "master seed override");
    sub->add_option("--trials", o.trials, "Monte-Carlo trials override");
    sub->add_option("--threads", o.threads, "OpenMP threads (0 = default)");
    sub->add_option("--out", o.out, "output directory (plotdata: output CSV file)");
  };
  auto* sim = app.add_subcommand("simulate", "run calibration and Monte-Carlo inference (config or run record)");
  sim->add_option("config", config, "TOML config, or a JSON run record to re-execute")->required();
  add_flags(sim);
  auto* cal = app.add_subcommand("calibrate", "calibrate activation and ADC ranges");
  cal->add_option("config", config, "TOML config")->required();
  add_flags(cal);
  auto* st = app.add_subcommand("stats", "write op-count, conductance, bit-line and ADC statistics");
  st->add_option("config", config, "TOML config")->required();
  add_flags(st);
  auto* plot = app.add_subcommand("plotdata", "merge run records into a tidy CSV series");
  plot->add_option("records", records, "JSON run records")->required();
  add_flags(plot);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*sim) return simulate(config, o);
    if (*cal) return calibrate(config, o);
    if (*st) return stats(config, o);
    return plotdata(records, o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
