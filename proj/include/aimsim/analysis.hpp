#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "aimsim/adc.hpp"
#include "aimsim/devices.hpp"
#include "aimsim/mapping.hpp"
#include "aimsim/pipeline.hpp"

namespace aimsim {

/// Operation counts of one full MVM (one input vector through one weight matrix).
struct OpCounts {
  std::int64_t slices = 0;
  std::int64_t partitions = 0;
  std::int64_t arrays = 0;
  std::int64_t array_activations = 0;   // one per array per applied input bit
  std::int64_t integrator_ops = 0;      // analog accumulation steps
  std::int64_t adc_conversions = 0;
  std::int64_t shift_add_ops = 0;
  std::int64_t digital_subtractions = 0;
  std::int64_t cells_programmed = 0;
  std::int64_t rows_per_array = 0;      // largest partition
  std::vector<std::int64_t> max_active_rows_per_bit;

  OpCounts& operator+=(const OpCounts& o);
  OpCounts scaled(std::int64_t k) const;
};

OpCounts count_ops(const MappingConfig& cfg, int rows, int cols, int input_bits);

/// Per-operation energies. The defaults are order-of-magnitude placeholders, not
/// physical circuit values.
struct CostTable {
  double adc_conversion = 1.0;
  double integration = 0.05;
  double shift_add = 0.02;
  double digital_subtraction = 0.02;
  double array_activation = 0.1;          // fixed part, per array per input bit
  double activation_per_current = 0.001;  // times mean conductance times rows

  void validate() const;
};

/// Energy per operation, 1 MAC = 2 operations.
double energy_per_op(const OpCounts& counts, const CostTable& costs, double total_macs,
                     double mean_conductance = 0.0);

struct SnrConfig {
  int weight_bits = 8;
  int bits_per_cell = 2;   // offset slices of this width
  int rows = 16;
  double target_g = 0.5;   // every cell of every slice holds this conductance
  ErrorModel errors;
  int trials = 100000;
  std::uint64_t seed = 1;
};

struct SnrResult {
  double snr_sliced = 0.0;
  double snr_unsliced = 0.0;
  double ratio = 1.0;
  double predicted_ratio = 1.0;  // sum 2^(B_W i) / sqrt(sum 2^(2 B_W i))
  bool noiseless = false;
};

/// Monte-Carlo SNR of the aggregated offset-scheme dot product before the offset
/// subtraction, with equal slice-wise dot products and all inputs set to one.
SnrResult snr_experiment(const SnrConfig& cfg);

/// Mean bit-line current per input bit (units of one fully-on cell), averaged over
/// columns, arrays and input vectors of one mapped layer.
std::vector<double> bitline_current_stats(const ConductanceStack& stack, const IntMatrix& codes, int input_bits);

struct LayerCurrentStats {
  int layer = 0;
  std::vector<double> mean_current_per_bit;
};

std::vector<LayerCurrentStats> bitline_current_stats(const MappedNetwork& mapped, const ImageBatch& sample);

void write_current_stats_csv(std::ostream& out, const std::vector<LayerCurrentStats>& stats);
void write_op_counts_csv(std::ostream& out, const std::vector<std::pair<std::string, OpCounts>>& rows);
void write_conductance_stats_csv(std::ostream& out, const std::vector<std::pair<int, std::vector<double>>>& rows);
void write_output_stats_csv(std::ostream& out, const OutputStats& stats);

}  // namespace aimsim
