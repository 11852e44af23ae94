#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "aimsim/matrix.hpp"

namespace aimsim {

enum class ErrorKind { ideal, state_independent, state_proportional, tabulated_sigma };

std::string to_string(ErrorKind k);

/// Programming-error model: maps a target conductance to the standard deviation of
/// its programmed value. All conductances are normalized to G_max = 1.
///
/// The state-independent and state-proportional families are normalized so that
/// equal alphas give equal sigma at the midpoint conductance g = 0.5:
///   state_independent:  sigma = alpha / 2
///   state_proportional: sigma = alpha * g
/// The tabulated family is either the saturating exponential
///   sigma = sigma_sat * (1 - exp(-g / g_c))
/// or, when `table_g` is non-empty, a piecewise-linear lookup clamped at the ends.
struct ErrorModel {
  ErrorKind kind = ErrorKind::ideal;
  double alpha = 0.0;
  double sigma_sat = 0.0;
  double g_c = 1.0;
  std::vector<double> table_g, table_sigma;

  static ErrorModel ideal() { return {}; }
  static ErrorModel state_independent(double alpha);
  static ErrorModel state_proportional(double alpha);
  static ErrorModel saturating(double sigma_sat, double g_c);
  static ErrorModel table(std::vector<double> g, std::vector<double> sigma);
  /// SONOS charge-trap cell fit: ~6.4% relative error at low conductance, saturating above ~0.5 G_max.
  static ErrorModel sonos();

  void validate() const;
};

/// Default SONOS fit constants (normalized to I_max = 1.6 uA).
inline constexpr double kSonosSigmaSat = 0.048;
inline constexpr double kSonosGc = 0.75;
inline constexpr double kSonosOnOff = 1e7;

double sigma(const ErrorModel& model, double g);

/// Loads a two-column CSV (g, sigma), optional header line, ascending g.
ErrorModel load_sigma_table(const std::filesystem::path& csv_path);

/// Deterministic random stream addressed by (master seed, trial, layer, array).
/// Cells of one array draw from the stream in row-major order.
class SeededStream {
 public:
  SeededStream(std::uint64_t master_seed, std::uint64_t trial, std::uint64_t layer, std::uint64_t array);

  double normal() { return normal_(engine_); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Adds independent N(0, sigma(target)) errors; results are clipped at 0.
RealMatrix sample_programmed(const ErrorModel& model, const RealMatrix& target, SeededStream& stream);

/// 128 target conductances of the 7-bit SONOS cell: level 0 at 1 / 1e7, linear up to 1.
std::vector<double> sonos_seven_bit_levels();

}  // namespace aimsim
