#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace aimsim {

/// ADC group: every (layer, weight slice, row partition) has its own converter range.
struct GroupKey {
  int layer = 0;
  int slice = 0;
  int partition = 0;
  auto operator<=>(const GroupKey&) const = default;
};

std::string to_string(const GroupKey& k);

struct AdcRange {
  double lo = 0.0;
  double hi = 1.0;
  double width() const { return hi - lo; }
  bool operator==(const AdcRange&) const = default;
};

enum class AdcPolicy { full_range, inner_percentile };

std::string to_string(AdcPolicy p);

struct AdcConfig {
  int bits = 0;  // 0 disables quantization
  AdcPolicy policy = AdcPolicy::full_range;
  double percentile = 99.98;  // P, used by inner_percentile
  bool power_of_two_slices = true;
  std::map<GroupKey, AdcRange> ranges;

  bool enabled() const { return bits > 0; }
  const AdcRange& range(const GroupKey& key) const;
  void validate() const;
};

struct QuantizedValue {
  std::int64_t code = 0;
  double value = 0.0;  // lo + code * LSB
};

/// Uniform mid-tread quantizer over [lo, hi] with 2^bits levels; out-of-range inputs clip.
QuantizedValue quantize(double v, const AdcRange& range, int bits);

/// Analog resolution needed for a unique level per possible output.
/// The differential sign bit is counted as one extra weight bit before the
/// single-bit-operand correction is applied.
double fpg_bits(int bits_per_cell, int input_bits, int rows, bool differential);

/// Range of a converter sized to the maximum possible output [v_min, v_max].
/// When 2^bits - 1 >= v_max - v_min the LSB is one output unit, so every
/// integer-valued output lands on its own level.
AdcRange full_range(double v_min, double v_max, int bits);

/// Pre-ADC outputs collected on a calibration set, per group.
class OutputStats {
 public:
  /// Declares a group and its maximum possible output interval.
  void register_group(const GroupKey& key, double v_min, double v_max);
  void add(const GroupKey& key, double v) { values_[key].push_back(v); }
  void add(const GroupKey& key, const std::vector<double>& vs);
  /// Appends another collector's samples (order-preserving, so ordered merges are deterministic).
  void merge(const OutputStats& other);

  std::size_t count(const GroupKey& key) const;
  const std::vector<double>& values(const GroupKey& key) const;
  const std::map<GroupKey, AdcRange>& groups() const { return bounds_; }
  bool empty() const { return values_.empty(); }

 private:
  std::map<GroupKey, AdcRange> bounds_;
  std::map<GroupKey, std::vector<double>> values_;
};

/// Smallest interval holding the inner P percent of `values` (outward nearest rank).
AdcRange inner_percentile_range(std::vector<double> values, double percentile);

/// Calibrates every registered group. Groups with a degenerate spread get a width
/// of 1e-6 of their full-scale range. With `power_of_two_slices`, slice ranges of the
/// same (layer, partition) become the widest slice range divided by a power of two.
std::map<GroupKey, AdcRange> calibrate_ranges(const OutputStats& stats, double percentile,
                                             bool power_of_two_slices);

}  // namespace aimsim
