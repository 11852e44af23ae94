#include "aimsim/xbar.hpp"

#include <cmath>

#include "aimsim/error.hpp"

namespace aimsim {

namespace {

void check_bits(const ArrayInstance& a, std::span<const std::uint8_t> bits) {
  if (bits.size() != a.rows()) {
    throw SimulationError("input has " + std::to_string(bits.size()) + " rows, array has " +
                          std::to_string(a.rows()));
  }
}

// Norton conductance seen from node 0 looking away from ground, then one more
// segment to ground. All sources sit at the unit supply, so the Norton current
// equals the Norton conductance throughout the elimination.
inline double step(double y, double rp) { return y / (1.0 + y * rp); }

}  // namespace

ArrayInstance ArrayInstance::ideal(const IntMatrix& codes, int v_max, double g_min, double rp_hat, ArrayRole role,
                                   int slice) {
  ArrayInstance a;
  a.conductance = integers_to_conductance(codes, v_max, g_min);
  a.code_weights = RealMatrix(codes.rows(), codes.cols());
  for (std::size_t k = 0; k < codes.size(); ++k) a.code_weights.data()[k] = codes.data()[k];
  a.rp_hat = rp_hat;
  a.role = role;
  a.slice = slice;
  a.v_max = v_max;
  a.g_min = g_min;
  a.validate();
  return a;
}

ArrayInstance ArrayInstance::programmed(RealMatrix conductance, int v_max, double g_min, double rp_hat,
                                        ArrayRole role, int slice) {
  ArrayInstance a;
  a.v_max = v_max;
  a.g_min = g_min;
  a.rp_hat = rp_hat;
  a.role = role;
  a.slice = slice;
  a.code_weights = RealMatrix(conductance.rows(), conductance.cols());
  const double k = a.code_scale();
  for (std::size_t i = 0; i < conductance.size(); ++i) {
    a.code_weights.data()[i] = (conductance.data()[i] - g_min) * k;
  }
  a.conductance = std::move(conductance);
  a.validate();
  return a;
}

void ArrayInstance::validate() const {
  if (!(rp_hat >= 0.0) || !std::isfinite(rp_hat)) throw ConfigError("parasitic resistance must be finite and >= 0");
  if (v_max < 1) throw ConfigError("v_max must be >= 1");
  if (g_min < 0.0 || g_min >= 1.0) throw ConfigError("g_min must be in [0, 1)");
  if (code_weights.rows() != conductance.rows() || code_weights.cols() != conductance.cols()) {
    throw SimulationError("array code weights and conductances disagree in shape");
  }
}

InputBitPlanes InputBitPlanes::from_codes(std::span<const int> codes, int bits) {
  if (bits < 1 || bits > 30) throw ConfigError("input bits must be in [1, 30]");
  InputBitPlanes p;
  p.bits = bits;
  p.planes.assign(static_cast<std::size_t>(bits), std::vector<std::uint8_t>(codes.size()));
  const int limit = (1 << bits) - 1;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const int x = codes[i];
    if (x < 0 || x > limit) {
      throw SimulationError("input code " + std::to_string(x) + " outside [0, " + std::to_string(limit) + "]");
    }
    for (int b = 0; b < bits; ++b) p.planes[b][i] = static_cast<std::uint8_t>((x >> b) & 1);
  }
  return p;
}

std::vector<int> InputBitPlanes::reconstruct() const {
  std::vector<int> x(rows(), 0);
  for (int b = 0; b < bits; ++b) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += planes[b][i] << b;
  }
  return x;
}

int InputBitPlanes::active_rows(int bit) const {
  int n = 0;
  for (auto v : planes.at(static_cast<std::size_t>(bit))) n += v;
  return n;
}

std::vector<double> AnalogOutput::accumulated() const {
  std::vector<double> out(cols(), 0.0);
  for (std::size_t c = 0; c < values.size(); ++c) {
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += weights[c] * values[c][j];
  }
  return out;
}

std::vector<double> column_currents_ideal(const ArrayInstance& array, std::span<const std::uint8_t> bits) {
  check_bits(array, bits);
  std::vector<double> out(array.cols(), 0.0);
  for (std::size_t i = 0; i < array.rows(); ++i) {
    if (!bits[i]) continue;
    const auto g = array.conductance.row(i);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += g[j];
  }
  return out;
}

std::vector<double> column_currents_parasitic(const ArrayInstance& array, std::span<const std::uint8_t> bits) {
  check_bits(array, bits);
  if (!(array.rp_hat > 0.0)) throw SimulationError("parasitic solve needs rp_hat > 0");
  const double rp = array.rp_hat;
  std::vector<double> y(array.cols(), 0.0);
  for (std::size_t i = array.rows(); i-- > 0;) {
    const auto g = array.conductance.row(i);
    if (bits[i]) {
      for (std::size_t j = 0; j < y.size(); ++j) y[j] = g[j] + step(y[j], rp);
    } else {
      for (std::size_t j = 0; j < y.size(); ++j) y[j] = step(y[j], rp);
    }
  }
  for (auto& v : y) v = step(v, rp);
  return y;
}

double ladder_current(std::span<const double> g_active, double rp_hat) {
  if (!(rp_hat > 0.0)) {
    double s = 0.0;
    for (double g : g_active) s += g;
    return s;
  }
  double y = 0.0;
  for (std::size_t i = g_active.size(); i-- > 0;) y = g_active[i] + step(y, rp_hat);
  return step(y, rp_hat);
}

std::vector<double> ladder_node_voltages(std::span<const double> g_active, double rp_hat) {
  const std::size_t n = g_active.size();
  std::vector<double> y(n), v(n, 0.0);
  if (n == 0) return v;
  double acc = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    acc = g_active[i] + step(acc, rp_hat);
    y[i] = acc;
  }
  // node 0 carries the full column current through the first segment
  v[0] = step(y[0], rp_hat) * rp_hat;
  for (std::size_t i = 1; i < n; ++i) {
    const double ry = rp_hat * y[i];
    v[i] = (v[i - 1] + ry) / (1.0 + ry);
  }
  return v;
}

AnalogOutput array_analog_output(const ArrayInstance& array, const InputBitPlanes& input, Accumulation acc) {
  if (input.rows() != array.rows()) {
    throw SimulationError("input has " + std::to_string(input.rows()) + " rows, array has " +
                          std::to_string(array.rows()));
  }
  const std::size_t cols = array.cols();
  const double leak = array.leakage();
  std::vector<std::vector<double>> per_bit;
  for (int b = 0; b < input.bits; ++b) {
    const auto& bits = input.planes[b];
    std::vector<double> out(cols, 0.0);
    if (array.rp_hat > 0.0) {
      out = column_currents_parasitic(array, bits);
      for (auto& v : out) v *= array.code_scale();
    } else {
      for (std::size_t i = 0; i < array.rows(); ++i) {
        if (!bits[i]) continue;
        const auto q = array.code_weights.row(i);
        for (std::size_t j = 0; j < cols; ++j) out[j] += q[j] + leak;
      }
    }
    per_bit.push_back(std::move(out));
  }

  AnalogOutput res;
  const double per_cell = array.v_max + leak;
  const double rows = static_cast<double>(array.rows());
  if (acc == Accumulation::digital) {
    for (int b = 0; b < input.bits; ++b) res.weights.push_back(std::ldexp(1.0, b));
    res.values = std::move(per_bit);
    res.full_scale_hi = rows * per_cell;
  } else {
    std::vector<double> sum(cols, 0.0);
    for (int b = 0; b < input.bits; ++b) {
      const double w = std::ldexp(1.0, b);
      for (std::size_t j = 0; j < cols; ++j) sum[j] += w * per_bit[b][j];
    }
    res.weights = {1.0};
    res.values = {std::move(sum)};
    res.full_scale_hi = rows * per_cell * (std::ldexp(1.0, input.bits) - 1.0);
  }
  return res;
}

AnalogOutput combine_differential(const AnalogOutput& plus, const AnalogOutput& minus) {
  if (plus.conversions() != minus.conversions() || plus.cols() != minus.cols() || plus.weights != minus.weights) {
    throw SimulationError("differential pair outputs differ in shape");
  }
  AnalogOutput out = plus;
  for (std::size_t c = 0; c < out.values.size(); ++c) {
    for (std::size_t j = 0; j < out.cols(); ++j) out.values[c][j] -= minus.values[c][j];
  }
  const double span = std::max(plus.full_scale_hi - plus.full_scale_lo, minus.full_scale_hi - minus.full_scale_lo);
  out.full_scale_lo = -span;
  out.full_scale_hi = span;
  return out;
}

DigitalOutput digitize(const AnalogOutput& analog, int adc_bits, const AdcRange* range) {
  if (adc_bits > 0 && range == nullptr) throw SimulationError("ADC enabled without a range");
  DigitalOutput out;
  out.values.assign(analog.cols(), 0.0);
  for (std::size_t c = 0; c < analog.conversions(); ++c) {
    for (std::size_t j = 0; j < analog.cols(); ++j) {
      const double v = analog.values[c][j];
      out.values[j] += analog.weights[c] * (adc_bits > 0 ? quantize(v, *range, adc_bits).value : v);
    }
  }
  out.adc_conversions = static_cast<std::int64_t>(analog.conversions() * analog.cols());
  return out;
}

DigitalOutput run_array_mvm(const ArrayInstance& array, const InputBitPlanes& input, Accumulation acc, int adc_bits,
                            const AdcRange* range) {
  return digitize(array_analog_output(array, input, acc), adc_bits, range);
}

std::vector<double> combine_offset(std::span<const double> columns, double x_sum, const OffsetSubtraction& cfg,
                                   std::optional<double> unit_column_output) {
  if (cfg.unit_column && !unit_column_output) throw SimulationError("unit column requested but not present");
  const double u = cfg.unit_column ? *unit_column_output : (cfg.offset_code + cfg.leakage_per_input) * x_sum;
  std::vector<double> y(columns.begin(), columns.end());
  for (auto& v : y) v -= u;
  return y;
}

namespace {

void batch_reference(const ArrayInstance& array, const IntMatrix& inputs, std::size_t row_begin, int input_bits,
                     bool per_bit, AnalogBatch& out) {
  std::vector<int> codes(array.rows());
  for (std::size_t v = 0; v < out.vectors; ++v) {
    for (std::size_t i = 0; i < codes.size(); ++i) codes[i] = inputs(v, row_begin + i);
    const auto planes = InputBitPlanes::from_codes(codes, input_bits);
    const auto a = array_analog_output(array, planes, per_bit ? Accumulation::digital : Accumulation::analog);
    for (std::size_t c = 0; c < out.conversions; ++c) {
      for (std::size_t j = 0; j < out.cols; ++j) out.at(v, c, j) = a.values[c][j];
    }
  }
}

void batch_parallel(const ArrayInstance& array, const IntMatrix& inputs, std::size_t row_begin, int input_bits,
                    bool per_bit, AnalogBatch& out) {
  const std::size_t rows = array.rows(), cols = array.cols();
  const double leak = array.leakage();
  const double rp = array.rp_hat;
  const double scale = array.code_scale();
  const auto n = static_cast<std::ptrdiff_t>(out.vectors);
  const int limit = (1 << input_bits) - 1;
  for (std::size_t v = 0; v < out.vectors; ++v) {
    const int* x = inputs.row(v).data() + row_begin;
    for (std::size_t i = 0; i < rows; ++i) {
      if (x[i] < 0 || x[i] > limit) throw SimulationError("input code outside the input bit range");
    }
  }

#pragma omp parallel
  {
    std::vector<double> y(cols);
#pragma omp for schedule(static)
    for (std::ptrdiff_t vi = 0; vi < n; ++vi) {
      const auto v = static_cast<std::size_t>(vi);
      const int* x = inputs.row(v).data() + row_begin;
      if (rp > 0.0) {
        for (int b = 0; b < input_bits; ++b) {
          std::fill(y.begin(), y.end(), 0.0);
          for (std::size_t i = rows; i-- > 0;) {
            const double* g = array.conductance.row(i).data();
            if ((x[i] >> b) & 1) {
              for (std::size_t j = 0; j < cols; ++j) y[j] = g[j] + step(y[j], rp);
            } else {
              for (std::size_t j = 0; j < cols; ++j) y[j] = step(y[j], rp);
            }
          }
          double* dst = &out.at(v, per_bit ? static_cast<std::size_t>(b) : 0, 0);
          const double w = per_bit ? 1.0 : std::ldexp(1.0, b);
          for (std::size_t j = 0; j < cols; ++j) dst[j] += w * (step(y[j], rp) * scale);
        }
      } else if (per_bit) {
        for (int b = 0; b < input_bits; ++b) {
          double* dst = &out.at(v, static_cast<std::size_t>(b), 0);
          for (std::size_t i = 0; i < rows; ++i) {
            if (!((x[i] >> b) & 1)) continue;
            const double* q = array.code_weights.row(i).data();
            for (std::size_t j = 0; j < cols; ++j) dst[j] += q[j] + leak;
          }
        }
      } else {
        double* dst = &out.at(v, 0, 0);
        double xsum = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
          if (x[i] == 0) continue;
          const double xi = x[i];
          xsum += xi;
          const double* q = array.code_weights.row(i).data();
          for (std::size_t j = 0; j < cols; ++j) dst[j] += xi * q[j];
        }
        if (leak != 0.0) {
          for (std::size_t j = 0; j < cols; ++j) dst[j] += leak * xsum;
        }
      }
    }
  }
}

}  // namespace

AnalogBatch analog_batch(const ArrayInstance& array, const IntMatrix& inputs, std::size_t row_begin, int input_bits,
                         bool per_bit, Exec exec) {
  if (row_begin + array.rows() > inputs.cols()) throw SimulationError("array rows exceed the input width");
  if (input_bits < 1 || input_bits > 30) throw ConfigError("input bits must be in [1, 30]");
  AnalogBatch out;
  out.vectors = inputs.rows();
  out.conversions = per_bit ? static_cast<std::size_t>(input_bits) : 1;
  out.cols = array.cols();
  out.data.assign(out.vectors * out.conversions * out.cols, 0.0);
  if (exec == Exec::reference) {
    batch_reference(array, inputs, row_begin, input_bits, per_bit, out);
  } else {
    batch_parallel(array, inputs, row_begin, input_bits, per_bit, out);
  }
  return out;
}

}  // namespace aimsim
