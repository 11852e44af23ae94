#include "aimsim/harness.hpp"

#include <chrono>
#include <fstream>
#include <ostream>
#include <sstream>

#include <omp.h>

#include <tomlplusplus/toml.hpp>

#include "aimsim/error.hpp"

#ifndef AIMSIM_VERSION
#define AIMSIM_VERSION "dev"
#endif

namespace aimsim {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class Kind { string, integer, number, boolean, path, ratio };

struct Field {
  const char* section;
  const char* key;
  Kind kind;
};

constexpr Field kSchema[] = {
    {"", "schema_version", Kind::integer},
    {"", "name", Kind::string},
    {"model", "manifest", Kind::path},
    {"model", "weight_bits", Kind::integer},
    {"dataset", "test_images", Kind::path},
    {"dataset", "test_labels", Kind::path},
    {"dataset", "calib_images", Kind::path},
    {"dataset", "calib_labels", Kind::path},
    {"dataset", "test_count", Kind::integer},
    {"dataset", "calib_count", Kind::integer},
    {"mapping", "scheme", Kind::string},
    {"mapping", "bits_per_cell", Kind::integer},
    {"mapping", "on_off_ratio", Kind::ratio},
    {"mapping", "max_rows", Kind::integer},
    {"mapping", "input_accumulation", Kind::string},
    {"mapping", "unit_column", Kind::boolean},
    {"errors", "model", Kind::string},
    {"errors", "alpha", Kind::number},
    {"errors", "sigma_sat", Kind::number},
    {"errors", "g_c", Kind::number},
    {"errors", "table", Kind::path},
    {"adc", "bits", Kind::integer},
    {"adc", "policy", Kind::string},
    {"adc", "percentile", Kind::number},
    {"adc", "power_of_two_slices", Kind::boolean},
    {"adc", "calibrate_with_errors", Kind::boolean},
    {"activations", "bits", Kind::integer},
    {"activations", "search_bits", Kind::integer},
    {"run", "rp_hat", Kind::number},
    {"run", "trials", Kind::integer},
    {"run", "seed", Kind::integer},
    {"run", "threads", Kind::integer},
    {"run", "output", Kind::path},
};

const Field* find_field(std::string_view section, std::string_view key) {
  for (const auto& f : kSchema) {
    if (section == f.section && key == f.key) return &f;
  }
  return nullptr;
}

bool is_section(std::string_view name) {
  for (const auto& f : kSchema) {
    if (name == f.section && name != "") return true;
  }
  return name == "sweep";
}

bool kind_matches(const toml::node& n, Kind kind) {
  switch (kind) {
    case Kind::string:
    case Kind::path: return n.is_string();
    case Kind::integer: return n.is_integer();
    case Kind::number: return n.is_number();
    case Kind::boolean: return n.is_boolean();
    case Kind::ratio: return n.is_number() || (n.is_string() && *n.value<std::string>() == "inf");
  }
  return false;
}

std::string kind_name(Kind kind) {
  switch (kind) {
    case Kind::string: return "a string";
    case Kind::path: return "a path string";
    case Kind::integer: return "an integer";
    case Kind::number: return "a number";
    case Kind::boolean: return "a boolean";
    case Kind::ratio: return "a number or \"inf\"";
  }
  return "?";
}

std::pair<std::string, std::string> split_key(const std::string& dotted) {
  const auto dot = dotted.find('.');
  if (dot == std::string::npos) return {"", dotted};
  return {dotted.substr(0, dot), dotted.substr(dot + 1)};
}

void validate_table(const toml::table& root) {
  for (const auto& [k, node] : root) {
    const std::string key(k.str());
    if (node.is_table()) {
      if (!is_section(key)) throw ConfigError("unknown config section [" + key + "]");
      for (const auto& [sk, sn] : *node.as_table()) {
        const std::string sub(sk.str());
        if (key == "sweep") {
          const auto [sec, name] = split_key(sub);
          const Field* f = find_field(sec, name);
          if (!f || sec.empty()) throw ConfigError("sweep axis '" + sub + "' does not name a parameter");
          if (f->kind == Kind::path) throw ConfigError("sweep axis '" + sub + "' is a path; only scalars can be swept");
          const auto* arr = sn.as_array();
          if (!arr || arr->empty()) throw ConfigError("sweep axis '" + sub + "' needs a non-empty value list");
          for (const auto& v : *arr) {
            if (!kind_matches(v, f->kind)) throw ConfigError("sweep axis '" + sub + "' values must be " + kind_name(f->kind));
          }
          continue;
        }
        const Field* f = find_field(key, sub);
        if (!f) throw ConfigError("unknown config key '" + key + "." + sub + "'");
        if (!kind_matches(sn, f->kind)) throw ConfigError("'" + key + "." + sub + "' must be " + kind_name(f->kind));
      }
    } else {
      const Field* f = find_field("", key);
      if (!f) throw ConfigError("unknown config key '" + key + "'");
      if (!kind_matches(node, f->kind)) throw ConfigError("'" + key + "' must be " + kind_name(f->kind));
    }
  }
}

template <typename T>
T get_or(const toml::table& root, const char* section, const char* key, T fallback) {
  const toml::node* n = section[0] ? root.at_path(std::string(section) + "." + key).node() : root.get(key);
  if (!n) return fallback;
  if constexpr (std::is_same_v<T, double>) {
    return n->value<double>().value_or(fallback);
  } else if constexpr (std::is_same_v<T, bool>) {
    return n->value<bool>().value_or(fallback);
  } else if constexpr (std::is_same_v<T, std::string>) {
    return n->value<std::string>().value_or(fallback);
  } else {
    return static_cast<T>(n->value<std::int64_t>().value_or(static_cast<std::int64_t>(fallback)));
  }
}

std::string require_string(const toml::table& root, const char* section, const char* key) {
  const auto v = get_or<std::string>(root, section, key, "");
  if (v.empty()) throw ConfigError(std::string("missing required key '") + section + "." + key + "'");
  return v;
}

toml::table& section_of(toml::table& root, const std::string& section) {
  if (!root.contains(section)) root.insert(section, toml::table{});
  auto* t = root.get_as<toml::table>(section);
  if (!t) throw ConfigError("'" + section + "' is not a table");
  return *t;
}

void set_value(toml::table& root, const std::string& dotted, const json& value) {
  const auto [sec, key] = split_key(dotted);
  const Field* f = find_field(sec, key);
  if (!f) throw ConfigError("'" + dotted + "' does not name a parameter");
  toml::table& t = sec.empty() ? root : section_of(root, sec);
  if (value.is_boolean()) {
    t.insert_or_assign(key, value.get<bool>());
  } else if (value.is_number_integer()) {
    t.insert_or_assign(key, value.get<std::int64_t>());
  } else if (value.is_number()) {
    t.insert_or_assign(key, value.get<double>());
  } else if (value.is_string()) {
    t.insert_or_assign(key, value.get<std::string>());
  } else {
    throw ConfigError("'" + dotted + "' must be set to a scalar");
  }
  const toml::node* n = sec.empty() ? root.get(key) : t.get(key);
  if (!kind_matches(*n, f->kind)) throw ConfigError("'" + dotted + "' must be " + kind_name(f->kind));
}

json node_to_json(const toml::node& n) {
  if (n.is_boolean()) return *n.value<bool>();
  if (n.is_integer()) return *n.value<std::int64_t>();
  if (n.is_floating_point()) return *n.value<double>();
  if (n.is_string()) return *n.value<std::string>();
  throw ConfigError("sweep values must be scalars");
}

Scheme parse_scheme(const std::string& s) {
  if (s == "offset") return Scheme::offset;
  if (s == "differential") return Scheme::differential;
  throw ConfigError("mapping.scheme must be 'offset' or 'differential', got '" + s + "'");
}

Accumulation parse_accumulation(const std::string& s) {
  if (s == "analog") return Accumulation::analog;
  if (s == "digital") return Accumulation::digital;
  throw ConfigError("mapping.input_accumulation must be 'analog' or 'digital', got '" + s + "'");
}

AdcPolicy parse_policy(const std::string& s) {
  if (s == "full_range") return AdcPolicy::full_range;
  if (s == "inner_percentile") return AdcPolicy::inner_percentile;
  throw ConfigError("adc.policy must be 'full_range' or 'inner_percentile', got '" + s + "'");
}

ErrorModel parse_errors(const toml::table& root) {
  const auto model = get_or<std::string>(root, "errors", "model", "ideal");
  const double alpha = get_or<double>(root, "errors", "alpha", 0.0);
  if (model == "ideal") return ErrorModel::ideal();
  if (model == "state_independent") return ErrorModel::state_independent(alpha);
  if (model == "state_proportional") return ErrorModel::state_proportional(alpha);
  if (model == "sonos") return ErrorModel::sonos();
  if (model == "saturating") {
    return ErrorModel::saturating(get_or<double>(root, "errors", "sigma_sat", kSonosSigmaSat),
                                  get_or<double>(root, "errors", "g_c", kSonosGc));
  }
  if (model == "table") {
    const auto path = require_string(root, "errors", "table");
    try {
      return load_sigma_table(path);
    } catch (const LoadError& e) {
      throw ConfigError(e.what());
    }
  }
  throw ConfigError("errors.model '" + model + "' is not one of ideal, state_independent, state_proportional, "
                    "saturating, sonos, table");
}

void absolutize(toml::table& root, const fs::path& base_dir) {
  for (const auto& f : kSchema) {
    if (f.kind != Kind::path) continue;
    toml::node* n = f.section[0] ? root.at_path(std::string(f.section) + "." + f.key).node() : root.get(f.key);
    if (!n || !n->is_string()) continue;
    fs::path p = *n->value<std::string>();
    if (p.is_relative()) p = base_dir / p;
    p = fs::absolute(p).lexically_normal();
    auto& t = f.section[0] ? *root.get_as<toml::table>(f.section) : root;
    t.insert_or_assign(f.key, p.string());
  }
}

std::string to_toml_text(const toml::table& t) {
  std::ostringstream ss;
  ss << toml::toml_formatter(t);
  return ss.str();
}

ExperimentConfig from_table(toml::table root, const fs::path& base_dir) {
  validate_table(root);
  const auto version = get_or<std::int64_t>(root, "", "schema_version", -1);
  if (version != kSchemaVersion) {
    throw ConfigError("schema_version must be " + std::to_string(kSchemaVersion) + ", got " + std::to_string(version));
  }
  absolutize(root, base_dir);

  ExperimentConfig c;
  c.name = get_or<std::string>(root, "", "name", "experiment");
  c.manifest = require_string(root, "model", "manifest");
  c.weight_bits = get_or<int>(root, "model", "weight_bits", 8);
  c.test_images = require_string(root, "dataset", "test_images");
  c.test_labels = require_string(root, "dataset", "test_labels");
  c.calib_images = require_string(root, "dataset", "calib_images");
  c.calib_labels = require_string(root, "dataset", "calib_labels");
  const auto test_count = get_or<std::int64_t>(root, "dataset", "test_count", 0);
  const auto calib_count = get_or<std::int64_t>(root, "dataset", "calib_count", 0);
  if (test_count < 0 || calib_count < 0) throw ConfigError("dataset counts must be >= 0");
  c.test_count = static_cast<std::size_t>(test_count);
  c.calib_count = static_cast<std::size_t>(calib_count);

  auto& m = c.pipeline.mapping;
  m.scheme = parse_scheme(get_or<std::string>(root, "mapping", "scheme", "differential"));
  m.weight_bits = c.weight_bits;
  m.bits_per_cell = get_or<int>(root, "mapping", "bits_per_cell", m.scheme == Scheme::offset ? 8 : 7);
  const toml::node* ratio = root.at_path("mapping.on_off_ratio").node();
  m.on_off_ratio = ratio && ratio->is_number() ? *ratio->value<double>() : kInfiniteOnOff;
  m.max_rows = get_or<int>(root, "mapping", "max_rows", 1152);
  m.input_accumulation = parse_accumulation(get_or<std::string>(root, "mapping", "input_accumulation", "analog"));
  m.unit_column = get_or<bool>(root, "mapping", "unit_column", false);
  m.validate();

  c.pipeline.errors = parse_errors(root);

  auto& adc = c.pipeline.adc;
  adc.bits = get_or<int>(root, "adc", "bits", 0);
  adc.policy = parse_policy(get_or<std::string>(root, "adc", "policy", "full_range"));
  adc.percentile = get_or<double>(root, "adc", "percentile", 99.98);
  adc.power_of_two_slices = get_or<bool>(root, "adc", "power_of_two_slices", true);
  adc.validate();
  c.pipeline.calibrate_with_errors = get_or<bool>(root, "adc", "calibrate_with_errors", false);

  c.pipeline.activation_bits = get_or<int>(root, "activations", "bits", 8);
  c.pipeline.calibration_search_bits = get_or<int>(root, "activations", "search_bits", 12);
  if (c.pipeline.activation_bits < 2 || c.pipeline.activation_bits > 16) {
    throw ConfigError("activations.bits must be in [2, 16]");
  }
  if (c.pipeline.calibration_search_bits < 1 || c.pipeline.calibration_search_bits > 24) {
    throw ConfigError("activations.search_bits must be in [1, 24]");
  }

  c.pipeline.rp_hat = get_or<double>(root, "run", "rp_hat", 0.0);
  if (!(c.pipeline.rp_hat >= 0.0)) throw ConfigError("run.rp_hat must be >= 0");
  c.trials = get_or<int>(root, "run", "trials", 10);
  if (c.trials < 1) throw ConfigError("run.trials must be >= 1");
  const auto seed = get_or<std::int64_t>(root, "run", "seed", 1);
  if (seed < 0) throw ConfigError("run.seed must be >= 0");
  c.seed = static_cast<std::uint64_t>(seed);
  c.threads = get_or<int>(root, "run", "threads", 0);
  if (c.threads < 0) throw ConfigError("run.threads must be >= 0");
  c.output = get_or<std::string>(root, "run", "output", (base_dir / "results").string());

  if (const auto* sweep = root.get_as<toml::table>("sweep")) {
    for (const auto& [k, node] : *sweep) {
      json values = json::array();
      for (const auto& v : *node.as_array()) values.push_back(node_to_json(v));
      c.sweep_axes.emplace_back(std::string(k.str()), std::move(values));
    }
    root.erase("sweep");
  }
  c.resolved_toml = to_toml_text(root);
  return c;
}

toml::table parse_toml(const std::string& text, const std::string& source) {
  try {
    return toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream ss;
    ss << source << ":" << e.source().begin.line << ":" << e.source().begin.column << ": " << e.description();
    throw ConfigError(ss.str());
  }
}

json toml_to_json(const std::string& text) {
  std::ostringstream ss;
  ss << toml::json_formatter(parse_toml(text, "config"));
  return json::parse(ss.str());
}

json op_counts_json(const OpCounts& c) {
  return {{"slices", c.slices},
          {"partitions", c.partitions},
          {"arrays", c.arrays},
          {"array_activations", c.array_activations},
          {"integrator_ops", c.integrator_ops},
          {"adc_conversions", c.adc_conversions},
          {"shift_add_ops", c.shift_add_ops},
          {"digital_subtractions", c.digital_subtractions},
          {"cells_programmed", c.cells_programmed},
          {"rows_per_array", c.rows_per_array}};
}

std::string value_text(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return out + "\"";
}

}  // namespace

ExperimentConfig parse_experiment(const std::string& toml_text, const fs::path& base_dir) {
  return from_table(parse_toml(toml_text, "config"), base_dir);
}

ExperimentConfig load_experiment(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_table(parse_toml(ss.str(), path.string()), fs::absolute(path).parent_path());
}

ExperimentConfig with_override(const ExperimentConfig& cfg, const std::string& key, const json& value) {
  toml::table t = parse_toml(cfg.resolved_toml, "config");
  set_value(t, key, value);
  ExperimentConfig out = from_table(std::move(t), "/");
  out.sweep_axes = cfg.sweep_axes;
  out.sweep_point = cfg.sweep_point;
  return out;
}

std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& base) {
  std::vector<std::vector<std::pair<std::string, json>>> points{{}};
  for (const auto& [key, values] : base.sweep_axes) {
    std::vector<std::vector<std::pair<std::string, json>>> next;
    for (const auto& p : points) {
      for (const auto& v : values) {
        auto q = p;
        q.emplace_back(key, v);
        next.push_back(std::move(q));
      }
    }
    points = std::move(next);
  }
  std::vector<ExperimentConfig> out;
  for (const auto& p : points) {
    toml::table t = parse_toml(base.resolved_toml, "config");
    for (const auto& [key, v] : p) set_value(t, key, v);
    ExperimentConfig c = from_table(std::move(t), "/");
    c.sweep_axes = base.sweep_axes;
    c.sweep_point = p;
    out.push_back(std::move(c));
  }
  return out;
}

json RunRecord::to_json() const {
  json point = json::array();
  for (const auto& [k, v] : sweep_point) point.push_back({{"key", k}, {"value", v}});
  return {{"tool", "aimsim"},
          {"version", version},
          {"name", name},
          {"sweep_index", sweep_index},
          {"sweep_point", point},
          {"seed", seed},
          {"trials", accuracies.size()},
          {"accuracies", accuracies},
          {"mean", mean},
          {"two_sigma", two_sigma},
          {"digital_accuracy", digital_accuracy},
          {"activation_ranges", activation_ranges},
          {"adc_ranges", adc_ranges},
          {"op_counts_per_image", op_counts},
          {"wall_time_s", wall_time_s},
          {"config", config},
          {"config_toml", config_toml}};
}

RunRecord RunRecord::from_json(const json& j) {
  try {
    RunRecord r;
    r.version = j.value("version", "");
    r.name = j.at("name").get<std::string>();
    r.sweep_index = j.value("sweep_index", std::size_t{0});
    for (const auto& p : j.value("sweep_point", json::array())) {
      r.sweep_point.emplace_back(p.at("key").get<std::string>(), p.at("value"));
    }
    r.seed = j.at("seed").get<std::uint64_t>();
    r.accuracies = j.at("accuracies").get<std::vector<double>>();
    r.mean = j.at("mean").get<double>();
    r.two_sigma = j.at("two_sigma").get<double>();
    r.digital_accuracy = j.value("digital_accuracy", 0.0);
    r.activation_ranges = j.value("activation_ranges", json::array());
    r.adc_ranges = j.value("adc_ranges", json::array());
    r.op_counts = j.value("op_counts_per_image", json::object());
    r.wall_time_s = j.value("wall_time_s", 0.0);
    r.config = j.value("config", json::object());
    r.config_toml = j.at("config_toml").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed run record: ") + e.what());
  }
}

RunRecord load_record(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open run record " + path.string());
  try {
    return RunRecord::from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

Workspace load_workspace(const ExperimentConfig& cfg) {
  Workspace ws;
  ws.folded = fold_batchnorm(load_model(cfg.manifest));
  ws.test = load_idx_dataset(cfg.test_images, cfg.test_labels);
  if (cfg.test_count > 0) ws.test = take_first(ws.test, cfg.test_count);
  ws.calibration = load_idx_dataset(cfg.calib_images, cfg.calib_labels);
  if (cfg.calib_count > 0) ws.calibration = take_first(ws.calibration, cfg.calib_count);
  return ws;
}

MappedNetwork prepare(const ExperimentConfig& cfg, const Workspace& ws, OutputStats* adc_stats) {
  const QuantizedNetwork q = quantize_network(ws.folded, cfg.weight_bits);
  auto acts = calibrate_activation_ranges(ws.folded, ws.calibration, cfg.pipeline.activation_bits,
                                          cfg.pipeline.calibration_search_bits);
  MappedNetwork mapped = map_network(q, std::move(acts), cfg.pipeline);
  OutputStats stats = calibrate_adc(mapped, ws.calibration, cfg.seed);
  if (adc_stats) *adc_stats = std::move(stats);
  return mapped;
}

OpCounts network_op_counts(const MappedNetwork& mapped) {
  OpCounts total;
  std::array<int, 3> shape = mapped.net.input_shape;
  for (std::size_t l = 0; l < mapped.net.layers.size(); ++l) {
    const auto& spec = mapped.net.layers[l].spec;
    std::int64_t positions = 1;
    if (spec.kind == LayerKind::conv2d) {
      shape = conv_output_shape(spec, shape[0], shape[1]);
      positions = static_cast<std::int64_t>(shape[0]) * shape[1];
    } else if (spec.kind == LayerKind::dense) {
      shape = {1, 1, spec.out_channels};
    } else if (spec.kind == LayerKind::maxpool || spec.kind == LayerKind::avgpool) {
      shape = {shape[0] / spec.ky, shape[1] / spec.kx, shape[2]};
    }
    if (!spec.is_analog()) continue;
    const auto& act = mapped.activations[l];
    const OpCounts c = count_ops(mapped.cfg.mapping, spec.matrix_rows(), spec.matrix_cols(), act.bits);
    total += c.scaled(positions * (act.is_signed ? 2 : 1));
  }
  return total;
}

RunRecord run_point(const ExperimentConfig& cfg, const Workspace& ws, std::size_t sweep_index) {
  const auto start = std::chrono::steady_clock::now();
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
  const MappedNetwork mapped = prepare(cfg, ws);

  RunRecord r;
  r.name = cfg.name;
  r.sweep_index = sweep_index;
  r.sweep_point = cfg.sweep_point;
  r.config_toml = cfg.resolved_toml;
  r.config = toml_to_json(cfg.resolved_toml);
  r.seed = cfg.seed;
  r.version = AIMSIM_VERSION;
  r.digital_accuracy = digital_reference_accuracy(mapped, ws.test);
  const InferenceResult res = run_inference(mapped, ws.test, cfg.trials, cfg.seed);
  r.accuracies = res.accuracies;
  r.mean = res.mean;
  r.two_sigma = res.two_sigma;
  for (std::size_t l = 0; l < mapped.net.layers.size(); ++l) {
    if (!mapped.is_analog(l)) continue;
    const auto& a = mapped.activations[l];
    r.activation_ranges.push_back(
        {{"layer", l}, {"bits", a.bits}, {"x_min", a.x_min}, {"x_max", a.x_max}, {"signed", a.is_signed}});
  }
  for (const auto& [key, range] : mapped.cfg.adc.ranges) {
    r.adc_ranges.push_back(
        {{"layer", key.layer}, {"slice", key.slice}, {"partition", key.partition}, {"lo", range.lo}, {"hi", range.hi}});
  }
  r.op_counts = op_counts_json(network_op_counts(mapped));
  r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg, std::ostream* log) {
  const auto points = expand_sweep(cfg);
  const Workspace ws = load_workspace(points.front());
  std::vector<RunRecord> records;
  for (std::size_t i = 0; i < points.size(); ++i) {
    records.push_back(run_point(points[i], ws, i));
    if (log) {
      *log << "[" << (i + 1) << "/" << points.size() << "]";
      for (const auto& [k, v] : points[i].sweep_point) *log << " " << k << "=" << value_text(v);
      *log << " mean=" << records.back().mean << " 2sigma=" << records.back().two_sigma << "\n";
    }
  }
  const fs::path dir = cfg.output;
  fs::create_directories(dir);
  for (const auto& r : records) {
    std::ofstream out(dir / (r.name + "_" + std::to_string(r.sweep_index) + ".json"));
    if (!out) throw SimulationError("cannot write run record into " + dir.string());
    out << r.to_json().dump(2) << "\n";
  }
  std::ofstream csv(dir / "summary.csv");
  if (!csv) throw SimulationError("cannot write " + (dir / "summary.csv").string());
  write_summary_csv(csv, records);
  return records;
}

RunRecord rerun_record(const RunRecord& record) {
  ExperimentConfig cfg = parse_experiment(record.config_toml, "/");
  cfg.sweep_point = record.sweep_point;
  const Workspace ws = load_workspace(cfg);
  return run_point(cfg, ws, record.sweep_index);
}

void write_summary_csv(std::ostream& out, const std::vector<RunRecord>& records) {
  out << "index,name";
  if (!records.empty()) {
    for (const auto& [k, v] : records.front().sweep_point) out << ',' << csv_field(k);
  }
  out << ",trials,seed,mean,two_sigma,lo,hi,digital_accuracy\n";
  out.precision(10);
  for (const auto& r : records) {
    out << r.sweep_index << ',' << csv_field(r.name);
    for (const auto& [k, v] : r.sweep_point) out << ',' << csv_field(value_text(v));
    out << ',' << r.accuracies.size() << ',' << r.seed << ',' << r.mean << ',' << r.two_sigma << ','
        << r.mean - r.two_sigma << ',' << r.mean + r.two_sigma << ',' << r.digital_accuracy << '\n';
  }
}

void emit_plotdata(const std::vector<RunRecord>& records, std::ostream& out) {
  if (records.empty()) throw ConfigError("plotdata needs at least one run record");
  auto axes_of = [](const RunRecord& r) {
    std::vector<std::string> keys;
    for (const auto& [k, v] : r.sweep_point) keys.push_back(k);
    return keys;
  };
  auto joined = [](const std::vector<std::string>& keys) {
    std::string s = "[";
    for (std::size_t i = 0; i < keys.size(); ++i) s += (i ? ", " : "") + keys[i];
    return s + "]";
  };
  const auto axes = axes_of(records.front());
  for (const auto& r : records) {
    if (axes_of(r) != axes) {
      throw ConfigError("record '" + r.name + "' #" + std::to_string(r.sweep_index) + " sweeps " +
                        joined(axes_of(r)) + " but record '" + records.front().name + "' #" +
                        std::to_string(records.front().sweep_index) + " sweeps " + joined(axes));
    }
  }
  out << "x_param,x,mean,lo,hi,series\n";
  out.precision(10);
  for (const auto& r : records) {
    std::string series = r.name;
    for (std::size_t k = 1; k < r.sweep_point.size(); ++k) {
      series += " " + r.sweep_point[k].first + "=" + value_text(r.sweep_point[k].second);
    }
    const std::string x_param = axes.empty() ? "index" : axes.front();
    const std::string x = axes.empty() ? std::to_string(r.sweep_index) : value_text(r.sweep_point.front().second);
    out << csv_field(x_param) << ',' << csv_field(x) << ',' << r.mean << ',' << r.mean - r.two_sigma << ','
        << r.mean + r.two_sigma << ',' << csv_field(series) << '\n';
  }
}

}  // namespace aimsim
