#include "aimsim/adc.hpp"

#include <algorithm>
#include <cmath>

#include "aimsim/error.hpp"

namespace aimsim {

std::string to_string(const GroupKey& k) {
  return "layer " + std::to_string(k.layer) + " slice " + std::to_string(k.slice) + " partition " +
         std::to_string(k.partition);
}

std::string to_string(AdcPolicy p) { return p == AdcPolicy::full_range ? "full_range" : "inner_percentile"; }

const AdcRange& AdcConfig::range(const GroupKey& key) const {
  const auto it = ranges.find(key);
  if (it == ranges.end()) throw SimulationError("no ADC range for " + to_string(key));
  return it->second;
}

void AdcConfig::validate() const {
  if (bits < 0 || bits > 48) throw ConfigError("ADC bits must be in [0, 48]");
  if (!(percentile > 50.0 && percentile <= 100.0)) throw ConfigError("ADC percentile must be in (50, 100]");
  for (const auto& [key, r] : ranges) {
    if (enabled() && !(r.hi > r.lo)) throw ConfigError("empty ADC range for " + to_string(key));
  }
}

QuantizedValue quantize(double v, const AdcRange& range, int bits) {
  const double levels = std::ldexp(1.0, bits) - 1.0;
  const double lsb = range.width() / levels;
  double code = std::round((v - range.lo) / lsb);
  code = std::clamp(code, 0.0, levels);
  return {static_cast<std::int64_t>(code), range.lo + code * lsb};
}

double fpg_bits(int bits_per_cell, int input_bits, int rows, bool differential) {
  if (bits_per_cell < 1 || input_bits < 1 || rows < 1) {
    throw ConfigError("fpg_bits needs bits_per_cell, input_bits and rows >= 1");
  }
  const int weight_bits = bits_per_cell + (differential ? 1 : 0);
  double out = weight_bits + input_bits + std::log2(static_cast<double>(rows));
  if (weight_bits == 1 || input_bits == 1) out -= 1.0;
  return out;
}

AdcRange full_range(double v_min, double v_max, int bits) {
  const double levels = std::ldexp(1.0, bits) - 1.0;
  if (levels >= v_max - v_min) return {v_min, v_min + levels};
  return {v_min, v_max};
}

void OutputStats::register_group(const GroupKey& key, double v_min, double v_max) {
  bounds_[key] = {v_min, v_max};
}

void OutputStats::add(const GroupKey& key, const std::vector<double>& vs) {
  auto& dst = values_[key];
  dst.insert(dst.end(), vs.begin(), vs.end());
}

void OutputStats::merge(const OutputStats& other) {
  for (const auto& [key, b] : other.bounds_) bounds_[key] = b;
  for (const auto& [key, vs] : other.values_) add(key, vs);
}

std::size_t OutputStats::count(const GroupKey& key) const {
  const auto it = values_.find(key);
  return it == values_.end() ? 0 : it->second.size();
}

const std::vector<double>& OutputStats::values(const GroupKey& key) const {
  static const std::vector<double> empty;
  const auto it = values_.find(key);
  return it == values_.end() ? empty : it->second;
}

AdcRange inner_percentile_range(std::vector<double> values, double percentile) {
  if (values.empty()) throw SimulationError("cannot take percentiles of an empty sample");
  if (!(percentile > 0.0 && percentile <= 100.0)) throw ConfigError("percentile must be in (0, 100]");
  const double tail = (1.0 - percentile / 100.0) / 2.0;
  const double last = static_cast<double>(values.size() - 1);
  const auto lo_idx = static_cast<std::size_t>(std::floor(tail * last));
  const auto hi_idx = static_cast<std::size_t>(std::ceil((1.0 - tail) * last));
  std::nth_element(values.begin(), values.begin() + static_cast<long>(lo_idx), values.end());
  const double lo = values[lo_idx];
  std::nth_element(values.begin(), values.begin() + static_cast<long>(hi_idx), values.end());
  return {lo, values[hi_idx]};
}

std::map<GroupKey, AdcRange> calibrate_ranges(const OutputStats& stats, double percentile,
                                             bool power_of_two_slices) {
  if (stats.groups().empty()) throw SimulationError("no ADC groups registered for calibration");
  std::map<GroupKey, AdcRange> out;
  for (const auto& [key, bounds] : stats.groups()) {
    if (stats.count(key) == 0) throw SimulationError("no calibration statistics for " + to_string(key));
    AdcRange r = inner_percentile_range(stats.values(key), percentile);
    const double floor_width = 1e-6 * bounds.width();
    if (r.width() < floor_width) r.hi = r.lo + floor_width;
    if (!(r.hi > r.lo)) r.hi = r.lo + 1e-12;
    out[key] = r;
  }
  if (!power_of_two_slices) return out;

  std::map<std::pair<int, int>, double> widest;  // (layer, partition) -> width
  for (const auto& [key, r] : out) {
    auto& w = widest[{key.layer, key.partition}];
    w = std::max(w, r.width());
  }
  for (auto& [key, r] : out) {
    const double top = widest[{key.layer, key.partition}];
    double width = top;
    while (width / 2.0 >= r.width()) width /= 2.0;
    if (r.lo >= 0.0) {
      r.hi = r.lo + width;
    } else {
      const double center = 0.5 * (r.lo + r.hi);
      r = {center - width / 2.0, center + width / 2.0};
    }
  }
  return out;
}

}  // namespace aimsim
