#include "aimsim/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <ostream>

#include "aimsim/error.hpp"

namespace aimsim {

OpCounts& OpCounts::operator+=(const OpCounts& o) {
  slices = std::max(slices, o.slices);
  partitions = std::max(partitions, o.partitions);
  arrays += o.arrays;
  array_activations += o.array_activations;
  integrator_ops += o.integrator_ops;
  adc_conversions += o.adc_conversions;
  shift_add_ops += o.shift_add_ops;
  digital_subtractions += o.digital_subtractions;
  cells_programmed += o.cells_programmed;
  rows_per_array = std::max(rows_per_array, o.rows_per_array);
  if (max_active_rows_per_bit.size() < o.max_active_rows_per_bit.size()) {
    max_active_rows_per_bit.resize(o.max_active_rows_per_bit.size(), 0);
  }
  for (std::size_t b = 0; b < o.max_active_rows_per_bit.size(); ++b) {
    max_active_rows_per_bit[b] = std::max(max_active_rows_per_bit[b], o.max_active_rows_per_bit[b]);
  }
  return *this;
}

OpCounts OpCounts::scaled(std::int64_t k) const {
  OpCounts c = *this;
  c.array_activations *= k;
  c.integrator_ops *= k;
  c.adc_conversions *= k;
  c.shift_add_ops *= k;
  c.digital_subtractions *= k;
  return c;
}

OpCounts count_ops(const MappingConfig& cfg, int rows, int cols, int input_bits) {
  cfg.validate();
  if (rows < 1 || cols < 1 || input_bits < 1) throw ConfigError("count_ops needs rows, cols and input bits >= 1");
  const auto plan = make_slice_plan(cfg);
  const auto parts = partition_rows(rows, cfg.max_rows);
  const std::int64_t s = plan.count();
  const std::int64_t p = static_cast<std::int64_t>(parts.size()) - 1;
  const std::int64_t pol = cfg.scheme == Scheme::differential ? 2 : 1;
  const bool unit = cfg.scheme == Scheme::offset && cfg.unit_column;
  const std::int64_t cols_eff = cols + (unit ? 1 : 0);
  const bool digital = cfg.input_accumulation == Accumulation::digital;

  OpCounts c;
  c.slices = s;
  c.partitions = p;
  c.arrays = s * p * pol;
  c.array_activations = c.arrays * input_bits;
  c.integrator_ops = digital ? 0 : cols_eff * c.arrays * input_bits;
  c.adc_conversions = cols_eff * s * p * (digital ? input_bits : 1);
  c.shift_add_ops = c.adc_conversions;
  c.digital_subtractions = cfg.scheme == Scheme::offset ? static_cast<std::int64_t>(cols) * p : 0;
  c.cells_programmed = static_cast<std::int64_t>(rows) * cols_eff * s * pol;
  for (std::size_t k = 0; k + 1 < parts.size(); ++k) {
    c.rows_per_array = std::max<std::int64_t>(c.rows_per_array, parts[k + 1] - parts[k]);
  }
  c.max_active_rows_per_bit.assign(static_cast<std::size_t>(input_bits), c.rows_per_array);
  return c;
}

void CostTable::validate() const {
  for (double v : {adc_conversion, integration, shift_add, digital_subtraction, array_activation,
                   activation_per_current}) {
    if (!(v >= 0.0)) throw ConfigError("costs must be >= 0");
  }
}

double energy_per_op(const OpCounts& c, const CostTable& costs, double total_macs, double mean_conductance) {
  costs.validate();
  if (!(total_macs > 0.0)) throw ConfigError("energy per op needs a positive MAC count");
  const double per_activation =
      costs.array_activation + costs.activation_per_current * mean_conductance * static_cast<double>(c.rows_per_array);
  const double e = costs.adc_conversion * c.adc_conversions + costs.integration * c.integrator_ops +
                   costs.shift_add * c.shift_add_ops + costs.digital_subtraction * c.digital_subtractions +
                   per_activation * c.array_activations;
  return e / (2.0 * total_macs);
}

namespace {

struct Moments {
  double n = 0.0, mean = 0.0, m2 = 0.0;
  void add(double x) {
    n += 1.0;
    const double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
  }
  double snr() const {
    const double sd = std::sqrt(m2 / (n - 1.0));
    return sd > 0.0 ? mean / sd : std::numeric_limits<double>::infinity();
  }
};

}  // namespace

SnrResult snr_experiment(const SnrConfig& cfg) {
  cfg.errors.validate();
  if (cfg.bits_per_cell < 1 || cfg.weight_bits % cfg.bits_per_cell != 0) {
    throw ConfigError("SNR experiment needs weight_bits divisible by bits_per_cell");
  }
  if (cfg.rows < 1 || cfg.trials < 2) throw ConfigError("SNR experiment needs rows >= 1 and trials >= 2");
  if (!(cfg.target_g > 0.0 && cfg.target_g <= 1.0)) throw ConfigError("SNR target conductance must be in (0, 1]");

  const int slices = cfg.weight_bits / cfg.bits_per_cell;
  double num = 0.0, den = 0.0;
  for (int s = 0; s < slices; ++s) {
    const double w = std::ldexp(1.0, cfg.bits_per_cell * s);
    num += w;
    den += w * w;
  }
  SnrResult r;
  r.predicted_ratio = num / std::sqrt(den);

  const double sd = sigma(cfg.errors, cfg.target_g);
  if (sd == 0.0) {
    r.snr_sliced = r.snr_unsliced = std::numeric_limits<double>::infinity();
    r.ratio = 1.0;
    r.noiseless = true;
    return r;
  }

  const double v_slice = std::ldexp(1.0, cfg.bits_per_cell) - 1.0;
  const double v_full = std::ldexp(1.0, cfg.weight_bits) - 1.0;
  SeededStream sliced_stream(cfg.seed, 0, 0, 0), full_stream(cfg.seed, 0, 0, 1);
  Moments sliced, full;
  for (int t = 0; t < cfg.trials; ++t) {
    double y = 0.0;
    for (int s = 0; s < slices; ++s) {
      double col = 0.0;
      for (int i = 0; i < cfg.rows; ++i) col += std::max(0.0, cfg.target_g + sd * sliced_stream.normal());
      y += std::ldexp(1.0, cfg.bits_per_cell * s) * v_slice * col;
    }
    sliced.add(y);
    double col = 0.0;
    for (int i = 0; i < cfg.rows; ++i) col += std::max(0.0, cfg.target_g + sd * full_stream.normal());
    full.add(v_full * col);
  }
  r.snr_sliced = sliced.snr();
  r.snr_unsliced = full.snr();
  r.ratio = r.snr_sliced / r.snr_unsliced;
  return r;
}

std::vector<double> bitline_current_stats(const ConductanceStack& stack, const IntMatrix& codes, int input_bits) {
  if (codes.cols() != static_cast<std::size_t>(stack.rows)) {
    throw SimulationError("input width " + std::to_string(codes.cols()) + " does not match " +
                          std::to_string(stack.rows) + " array rows");
  }
  std::vector<double> total(static_cast<std::size_t>(input_bits), 0.0);
  if (codes.rows() == 0 || stack.blocks.empty()) return total;
  for (const auto& b : stack.blocks) {
    std::vector<double> rowsum(b.target.rows(), 0.0);
    for (std::size_t i = 0; i < rowsum.size(); ++i) {
      for (int j = 0; j < stack.cols; ++j) rowsum[i] += b.target(i, static_cast<std::size_t>(j));
    }
    for (std::size_t v = 0; v < codes.rows(); ++v) {
      for (std::size_t i = 0; i < rowsum.size(); ++i) {
        const int x = std::abs(codes(v, b.row_begin + i));
        for (int bit = 0; bit < input_bits; ++bit) {
          if ((x >> bit) & 1) total[static_cast<std::size_t>(bit)] += rowsum[i];
        }
      }
    }
  }
  const double norm = static_cast<double>(codes.rows()) * stack.cols * static_cast<double>(stack.blocks.size());
  for (auto& t : total) t /= norm;
  return total;
}

std::vector<LayerCurrentStats> bitline_current_stats(const MappedNetwork& mapped, const ImageBatch& sample) {
  RunOptions opts;
  opts.backend = Backend::digital_reference;
  std::vector<IntMatrix> codes;
  forward_mapped(mapped, ProgrammedNetwork{}, sample.images, opts, &codes);
  std::vector<LayerCurrentStats> out;
  for (std::size_t l = 0; l < mapped.stacks.size(); ++l) {
    if (!mapped.is_analog(l)) continue;
    out.push_back({static_cast<int>(l), bitline_current_stats(mapped.stacks[l], codes[l], mapped.activations[l].bits)});
  }
  return out;
}

void write_current_stats_csv(std::ostream& out, const std::vector<LayerCurrentStats>& stats) {
  out << "layer,input_bit,mean_bitline_current\n";
  for (const auto& s : stats) {
    for (std::size_t b = 0; b < s.mean_current_per_bit.size(); ++b) {
      out << s.layer << ',' << b << ',' << s.mean_current_per_bit[b] << '\n';
    }
  }
}

void write_op_counts_csv(std::ostream& out, const std::vector<std::pair<std::string, OpCounts>>& rows) {
  out << "name,slices,partitions,arrays,array_activations,integrator_ops,adc_conversions,shift_add_ops,"
         "digital_subtractions,cells_programmed,rows_per_array\n";
  for (const auto& [name, c] : rows) {
    out << name << ',' << c.slices << ',' << c.partitions << ',' << c.arrays << ',' << c.array_activations << ','
        << c.integrator_ops << ',' << c.adc_conversions << ',' << c.shift_add_ops << ',' << c.digital_subtractions
        << ',' << c.cells_programmed << ',' << c.rows_per_array << '\n';
  }
}

void write_conductance_stats_csv(std::ostream& out, const std::vector<std::pair<int, std::vector<double>>>& rows) {
  out << "layer,slice,mean_conductance\n";
  for (const auto& [layer, means] : rows) {
    for (std::size_t s = 0; s < means.size(); ++s) out << layer << ',' << s << ',' << means[s] << '\n';
  }
}

void write_output_stats_csv(std::ostream& out, const OutputStats& stats) {
  out << "layer,slice,partition,count,min,max,mean,std,full_scale_lo,full_scale_hi\n";
  for (const auto& [key, bounds] : stats.groups()) {
    const auto& v = stats.values(key);
    double lo = 0.0, hi = 0.0, mean = 0.0, var = 0.0;
    if (!v.empty()) {
      const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
      lo = *mn;
      hi = *mx;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      for (double x : v) var += (x - mean) * (x - mean);
      var /= static_cast<double>(v.size());
    }
    out << key.layer << ',' << key.slice << ',' << key.partition << ',' << v.size() << ',' << lo << ',' << hi << ','
        << mean << ',' << std::sqrt(var) << ',' << bounds.lo << ',' << bounds.hi << '\n';
  }
}

}  // namespace aimsim
