#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "aimsim/adc.hpp"
#include "aimsim/mapping.hpp"
#include "aimsim/matrix.hpp"

namespace aimsim {

enum class ArrayRole { plus, minus, offset, unit };

/// One programmed array.
///
/// Analog outputs are reported in "code units": a current I (normalized, V_D = 1,
/// G_max = 1) is multiplied by v_max / (1 - g_min), so a cell holding integer v
/// contributes v + leakage per active input bit, where leakage = g_min * v_max / (1 - g_min).
struct ArrayInstance {
  RealMatrix conductance;   // programmed G, rows x cols
  RealMatrix code_weights;  // (G - g_min) * code_scale; exact integers for unperturbed cells
  double rp_hat = 0.0;
  ArrayRole role = ArrayRole::offset;
  int slice = 0;
  int v_max = 1;
  double g_min = 0.0;

  std::size_t rows() const { return conductance.rows(); }
  std::size_t cols() const { return conductance.cols(); }
  double code_scale() const { return v_max / (1.0 - g_min); }
  double leakage() const { return g_min * code_scale(); }

  /// Array holding exactly the target levels of `codes`.
  static ArrayInstance ideal(const IntMatrix& codes, int v_max, double g_min, double rp_hat = 0.0,
                             ArrayRole role = ArrayRole::offset, int slice = 0);
  /// Array holding arbitrary programmed conductances.
  static ArrayInstance programmed(RealMatrix conductance, int v_max, double g_min, double rp_hat = 0.0,
                                  ArrayRole role = ArrayRole::offset, int slice = 0);
  void validate() const;
};

/// Bit planes of unsigned integer inputs, least significant plane first.
struct InputBitPlanes {
  int bits = 0;
  std::vector<std::vector<std::uint8_t>> planes;

  static InputBitPlanes from_codes(std::span<const int> codes, int bits);
  std::size_t rows() const { return planes.empty() ? 0 : planes.front().size(); }
  std::vector<int> reconstruct() const;
  int active_rows(int bit) const;
};

struct AnalogOutput {
  std::vector<double> weights;               // 2^b per conversion for digital accumulation, {1} for analog
  std::vector<std::vector<double>> values;   // [conversion][column], code units
  double full_scale_lo = 0.0;                // bookkeeping of the widest possible output interval
  double full_scale_hi = 0.0;

  std::size_t cols() const { return values.empty() ? 0 : values.front().size(); }
  std::size_t conversions() const { return values.size(); }
  /// Exact weighted sum over conversions (no quantization).
  std::vector<double> accumulated() const;
};

struct DigitalOutput {
  std::vector<double> values;
  std::int64_t adc_conversions = 0;
};

/// I_j = sum_i bits_i * G_ij.
std::vector<double> column_currents_ideal(const ArrayInstance& array, std::span<const std::uint8_t> bits);

/// Bit-line ladder solution. Node 0 sits one segment from the virtual ground; node i
/// is joined to node i+1 by one segment of resistance rp_hat. Active cells connect
/// the unit supply to their node; inactive cells are open.
std::vector<double> column_currents_parasitic(const ArrayInstance& array, std::span<const std::uint8_t> bits);

/// Node voltages of one column ladder (g_active[i] = 0 for an inactive cell).
std::vector<double> ladder_node_voltages(std::span<const double> g_active, double rp_hat);
/// Current delivered to ground by one column ladder.
double ladder_current(std::span<const double> g_active, double rp_hat);

/// Pre-ADC outputs of one array: one conversion per column for analog accumulation,
/// one per input bit for digital accumulation.
AnalogOutput array_analog_output(const ArrayInstance& array, const InputBitPlanes& input, Accumulation acc);

/// Elementwise plus - minus, formed before any quantization.
AnalogOutput combine_differential(const AnalogOutput& plus, const AnalogOutput& minus);

/// Quantizes each conversion (when adc_bits > 0) and shift-and-adds over conversions.
DigitalOutput digitize(const AnalogOutput& analog, int adc_bits, const AdcRange* range);

DigitalOutput run_array_mvm(const ArrayInstance& array, const InputBitPlanes& input, Accumulation acc,
                            int adc_bits = 0, const AdcRange* range = nullptr);

struct OffsetSubtraction {
  int offset_code = 0;            // 2^(weight_bits-1)
  double leakage_per_input = 0.0; // leakage summed over slices with their shift weights
  bool unit_column = false;
};

/// y_j = col_j - u, where u is the unit-column output when present, otherwise the
/// digital estimate (offset_code + leakage) * x_sum.
std::vector<double> combine_offset(std::span<const double> columns, double x_sum, const OffsetSubtraction& cfg,
                                   std::optional<double> unit_column_output = std::nullopt);

enum class Exec { reference, parallel };

/// Pre-ADC outputs for a batch of input vectors (rows of `inputs`, unsigned codes
/// of `input_bits` bits). Layout: [vector][conversion][column].
struct AnalogBatch {
  std::size_t vectors = 0, conversions = 0, cols = 0;
  std::vector<double> data;

  double& at(std::size_t v, std::size_t c, std::size_t j) { return data[(v * conversions + c) * cols + j]; }
  double at(std::size_t v, std::size_t c, std::size_t j) const { return data[(v * conversions + c) * cols + j]; }
};

/// Array row i reads input column row_begin + i. `per_bit` selects one conversion
/// per input bit; otherwise the 2^b-weighted sum is formed (a single conversion).
/// Exec::reference runs the per-vector bit-serial path; Exec::parallel runs the
/// batched OpenMP kernel.
AnalogBatch analog_batch(const ArrayInstance& array, const IntMatrix& inputs, std::size_t row_begin,
                         int input_bits, bool per_bit, Exec exec = Exec::parallel);

}  // namespace aimsim
