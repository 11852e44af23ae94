#include "aimsim/devices.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "aimsim/error.hpp"

namespace aimsim {

std::string to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::ideal: return "ideal";
    case ErrorKind::state_independent: return "state_independent";
    case ErrorKind::state_proportional: return "state_proportional";
    case ErrorKind::tabulated_sigma: return "tabulated_sigma";
  }
  return "?";
}

ErrorModel ErrorModel::state_independent(double alpha) {
  ErrorModel m;
  m.kind = ErrorKind::state_independent;
  m.alpha = alpha;
  m.validate();
  return m;
}

ErrorModel ErrorModel::state_proportional(double alpha) {
  ErrorModel m;
  m.kind = ErrorKind::state_proportional;
  m.alpha = alpha;
  m.validate();
  return m;
}

ErrorModel ErrorModel::saturating(double sigma_sat, double g_c) {
  ErrorModel m;
  m.kind = ErrorKind::tabulated_sigma;
  m.sigma_sat = sigma_sat;
  m.g_c = g_c;
  m.validate();
  return m;
}

ErrorModel ErrorModel::table(std::vector<double> g, std::vector<double> sig) {
  ErrorModel m;
  m.kind = ErrorKind::tabulated_sigma;
  m.table_g = std::move(g);
  m.table_sigma = std::move(sig);
  m.validate();
  return m;
}

ErrorModel ErrorModel::sonos() { return saturating(kSonosSigmaSat, kSonosGc); }

void ErrorModel::validate() const {
  if (alpha < 0.0) throw ConfigError("error alpha must be >= 0");
  if (kind != ErrorKind::tabulated_sigma) return;
  if (table_g.empty()) {
    if (sigma_sat < 0.0 || !(g_c > 0.0)) throw ConfigError("saturating sigma needs sigma_sat >= 0 and g_c > 0");
    return;
  }
  if (table_g.size() != table_sigma.size() || table_g.size() < 2) {
    throw ConfigError("sigma table needs at least two (g, sigma) rows");
  }
  for (std::size_t k = 0; k < table_g.size(); ++k) {
    if (table_sigma[k] < 0.0) throw ConfigError("sigma table has a negative sigma");
    if (k > 0 && !(table_g[k] > table_g[k - 1])) throw ConfigError("sigma table g column must ascend");
  }
}

double sigma(const ErrorModel& m, double g) {
  if (!(g >= 0.0 && g <= 1.0)) throw ConfigError("conductance " + std::to_string(g) + " outside [0, 1]");
  switch (m.kind) {
    case ErrorKind::ideal: return 0.0;
    case ErrorKind::state_independent: return m.alpha / 2.0;
    case ErrorKind::state_proportional: return m.alpha * g;
    case ErrorKind::tabulated_sigma: {
      if (m.table_g.empty()) return m.sigma_sat * (1.0 - std::exp(-g / m.g_c));
      const auto it = std::upper_bound(m.table_g.begin(), m.table_g.end(), g);
      if (it == m.table_g.begin()) return m.table_sigma.front();
      if (it == m.table_g.end()) return m.table_sigma.back();
      const auto k = static_cast<std::size_t>(it - m.table_g.begin());
      const double t = (g - m.table_g[k - 1]) / (m.table_g[k] - m.table_g[k - 1]);
      return m.table_sigma[k - 1] + t * (m.table_sigma[k] - m.table_sigma[k - 1]);
    }
  }
  return 0.0;
}

ErrorModel load_sigma_table(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw LoadError("cannot open sigma table " + csv_path.string());
  std::vector<double> g, s;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    double a = 0, b = 0;
    if (!(ls >> a >> b)) {
      if (line_no == 1) continue;  // header
      throw LoadError(csv_path.string() + ":" + std::to_string(line_no) + ": expected 'g,sigma'");
    }
    g.push_back(a);
    s.push_back(b);
  }
  return ErrorModel::table(std::move(g), std::move(s));
}

SeededStream::SeededStream(std::uint64_t master_seed, std::uint64_t trial, std::uint64_t layer,
                           std::uint64_t array) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(layer),
                    static_cast<std::uint32_t>(array), 0x5eedu};
  engine_.seed(seq);
}

RealMatrix sample_programmed(const ErrorModel& model, const RealMatrix& target, SeededStream& stream) {
  RealMatrix out = target;
  if (model.kind == ErrorKind::ideal) return out;
  for (auto& g : out.data()) {
    const double sd = sigma(model, std::clamp(g, 0.0, 1.0));
    const double z = stream.normal();  // always drawn so cell k maps to the k-th variate
    g = std::max(0.0, g + sd * z);
  }
  return out;
}

std::vector<double> sonos_seven_bit_levels() {
  constexpr double g_min = 1.0 / kSonosOnOff;
  std::vector<double> levels(128);
  for (int k = 0; k < 128; ++k) levels[k] = g_min + (k / 127.0) * (1.0 - g_min);
  return levels;
}

}  // namespace aimsim
