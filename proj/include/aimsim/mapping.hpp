#pragma once

#include <limits>
#include <string>
#include <vector>

#include "aimsim/matrix.hpp"

namespace aimsim {

enum class Scheme { offset, differential };
enum class Accumulation { analog, digital };
enum class Polarity { offset, plus, minus };

std::string to_string(Scheme s);
std::string to_string(Accumulation a);
std::string to_string(Polarity p);

inline constexpr double kInfiniteOnOff = std::numeric_limits<double>::infinity();

struct MappingConfig {
  Scheme scheme = Scheme::differential;
  int weight_bits = 8;
  int bits_per_cell = 7;  // B_W
  double on_off_ratio = kInfiniteOnOff;
  int max_rows = 1152;    // N_max
  Accumulation input_accumulation = Accumulation::analog;
  bool unit_column = false;  // offset scheme only

  /// Throws ConfigError when the combination is not realizable.
  void validate() const;
  /// Normalized G_min = 1 / on_off_ratio (0 for an infinite ratio).
  double g_min() const;
  bool sliced() const;
};

/// Significance and value range of each weight slice, lowest significance first.
struct SlicePlan {
  std::vector<int> shifts;  // slice s carries weight 2^shifts[s]
  std::vector<int> v_max;   // largest integer a cell in slice s may hold
  int count() const { return static_cast<int>(shifts.size()); }
};

SlicePlan make_slice_plan(const MappingConfig& cfg);

/// Largest |w| the configuration can represent.
int max_weight_magnitude(const MappingConfig& cfg);

/// One programmable array: the cells of a given slice, polarity and row partition.
struct CellBlock {
  int slice = 0;
  Polarity polarity = Polarity::offset;
  int partition = 0;
  int row_begin = 0;
  IntMatrix codes;        // non-negative integers in [0, v_max]; last column is the unit column if present
  RealMatrix target;      // normalized conductance, G_max = 1
};

struct ConductanceStack {
  Scheme scheme = Scheme::differential;
  SlicePlan plan;
  int rows = 0, cols = 0;           // logical weight matrix dims (unit column excluded)
  int offset_code = 0;              // 2^(weight_bits-1) for the offset scheme, else 0
  double g_min = 0.0;
  bool unit_column = false;
  std::vector<int> partition_begin; // first row of every partition, plus a final sentinel == rows
  std::vector<CellBlock> blocks;    // partition-major, then slice, then polarity (plus before minus)

  int partitions() const { return static_cast<int>(partition_begin.size()) - 1; }
  int polarities() const { return scheme == Scheme::differential ? 2 : 1; }
  int block_index(int partition, int slice, Polarity pol) const;
  const CellBlock& block(int partition, int slice, Polarity pol) const {
    return blocks[static_cast<std::size_t>(block_index(partition, slice, pol))];
  }
};

/// Splits `rows` into ceil(rows / max_rows) contiguous partitions whose sizes differ by at most one.
std::vector<int> partition_rows(int rows, int max_rows);

ConductanceStack decompose(const IntMatrix& weights, const MappingConfig& cfg);

/// Exact inverse of decompose (unit column ignored).
IntMatrix reconstruct(const ConductanceStack& stack);

/// G = g_min + (v / v_max)(1 - g_min).
RealMatrix integers_to_conductance(const IntMatrix& values, int v_max, double g_min);

/// Mean target conductance of every slice with polarities merged; unit column excluded.
std::vector<double> conductance_stats(const ConductanceStack& stack);

}  // namespace aimsim
