#include "aimsim/mapping.hpp"

#include <cmath>
#include <cstdlib>

#include "aimsim/error.hpp"

namespace aimsim {

std::string to_string(Scheme s) { return s == Scheme::offset ? "offset" : "differential"; }
std::string to_string(Accumulation a) { return a == Accumulation::analog ? "analog" : "digital"; }
std::string to_string(Polarity p) {
  switch (p) {
    case Polarity::offset: return "offset";
    case Polarity::plus: return "plus";
    case Polarity::minus: return "minus";
  }
  return "?";
}

void MappingConfig::validate() const {
  if (weight_bits < 2 || weight_bits > 16) throw ConfigError("weight_bits must be in [2, 16]");
  if (bits_per_cell < 1) throw ConfigError("bits_per_cell must be >= 1");
  if (max_rows < 1) throw ConfigError("max_rows must be >= 1");
  if (!(on_off_ratio > 1.0)) throw ConfigError("on_off_ratio must be > 1 (or infinite)");
  if (scheme == Scheme::offset) {
    if (bits_per_cell > weight_bits || weight_bits % bits_per_cell != 0) {
      throw ConfigError("offset scheme: weight_bits (" + std::to_string(weight_bits) +
                        ") must be a multiple of bits_per_cell (" + std::to_string(bits_per_cell) + ")");
    }
  } else {
    if (bits_per_cell > weight_bits - 1) {
      throw ConfigError("differential scheme: bits_per_cell must be <= weight_bits - 1");
    }
    if (unit_column) throw ConfigError("unit_column applies to the offset scheme only");
  }
}

double MappingConfig::g_min() const { return std::isinf(on_off_ratio) ? 0.0 : 1.0 / on_off_ratio; }

bool MappingConfig::sliced() const {
  return scheme == Scheme::offset ? bits_per_cell < weight_bits : bits_per_cell < weight_bits - 1;
}

SlicePlan make_slice_plan(const MappingConfig& cfg) {
  cfg.validate();
  const int magnitude_bits = cfg.scheme == Scheme::offset ? cfg.weight_bits : cfg.weight_bits - 1;
  const int count = (magnitude_bits + cfg.bits_per_cell - 1) / cfg.bits_per_cell;
  SlicePlan plan;
  for (int s = 0; s < count; ++s) {
    plan.shifts.push_back(s * cfg.bits_per_cell);
    plan.v_max.push_back((1 << cfg.bits_per_cell) - 1);
  }
  return plan;
}

int max_weight_magnitude(const MappingConfig& cfg) {
  if (cfg.scheme == Scheme::offset) return (1 << (cfg.weight_bits - 1)) - 1;
  const SlicePlan plan = make_slice_plan(cfg);
  return (1 << (plan.count() * cfg.bits_per_cell)) - 1;
}

std::vector<int> partition_rows(int rows, int max_rows) {
  if (max_rows < 1) throw ConfigError("max_rows must be >= 1");
  const int parts = std::max(1, (rows + max_rows - 1) / max_rows);
  std::vector<int> begin(static_cast<std::size_t>(parts) + 1);
  const int base = rows / parts, extra = rows % parts;
  begin[0] = 0;
  for (int p = 0; p < parts; ++p) begin[p + 1] = begin[p] + base + (p < extra ? 1 : 0);
  return begin;
}

int ConductanceStack::block_index(int partition, int slice, Polarity pol) const {
  const int pols = polarities();
  return (partition * plan.count() + slice) * pols + (pol == Polarity::minus ? 1 : 0);
}

RealMatrix integers_to_conductance(const IntMatrix& values, int v_max, double g_min) {
  if (v_max < 1) throw ConfigError("v_max must be >= 1");
  if (g_min < 0.0 || g_min >= 1.0) throw ConfigError("g_min must be in [0, 1)");
  RealMatrix g(values.rows(), values.cols());
  for (std::size_t k = 0; k < values.size(); ++k) {
    const int v = values.data()[k];
    if (v < 0 || v > v_max) {
      throw ConfigError("integer " + std::to_string(v) + " outside [0, " + std::to_string(v_max) + "]");
    }
    g.data()[k] = g_min + (static_cast<double>(v) / v_max) * (1.0 - g_min);
  }
  return g;
}

ConductanceStack decompose(const IntMatrix& weights, const MappingConfig& cfg) {
  cfg.validate();
  ConductanceStack st;
  st.scheme = cfg.scheme;
  st.plan = make_slice_plan(cfg);
  st.rows = static_cast<int>(weights.rows());
  st.cols = static_cast<int>(weights.cols());
  st.g_min = cfg.g_min();
  st.unit_column = cfg.scheme == Scheme::offset && cfg.unit_column;
  st.offset_code = cfg.scheme == Scheme::offset ? 1 << (cfg.weight_bits - 1) : 0;
  st.partition_begin = partition_rows(st.rows, cfg.max_rows);

  const int limit = max_weight_magnitude(cfg);
  for (int w : weights.data()) {
    if (std::abs(w) > limit) {
      throw ConfigError("weight " + std::to_string(w) + " outside representable range [-" +
                        std::to_string(limit) + ", " + std::to_string(limit) + "]");
    }
  }

  const int slices = st.plan.count();
  const int mask = (1 << cfg.bits_per_cell) - 1;
  const int out_cols = st.cols + (st.unit_column ? 1 : 0);
  const std::vector<Polarity> pols = cfg.scheme == Scheme::offset
                                         ? std::vector<Polarity>{Polarity::offset}
                                         : std::vector<Polarity>{Polarity::plus, Polarity::minus};

  for (int p = 0; p < st.partitions(); ++p) {
    const int r0 = st.partition_begin[p], r1 = st.partition_begin[p + 1];
    for (int s = 0; s < slices; ++s) {
      const int shift = st.plan.shifts[s];
      for (Polarity pol : pols) {
        CellBlock b;
        b.slice = s;
        b.polarity = pol;
        b.partition = p;
        b.row_begin = r0;
        b.codes = IntMatrix(static_cast<std::size_t>(r1 - r0), static_cast<std::size_t>(out_cols));
        for (int i = r0; i < r1; ++i) {
          for (int j = 0; j < st.cols; ++j) {
            const int w = weights(i, j);
            int digit = 0;
            if (pol == Polarity::offset) {
              digit = ((w + st.offset_code) >> shift) & mask;
            } else if ((pol == Polarity::plus && w > 0) || (pol == Polarity::minus && w < 0)) {
              digit = (std::abs(w) >> shift) & mask;
            }
            b.codes(i - r0, j) = digit;
          }
          if (st.unit_column) b.codes(i - r0, st.cols) = (st.offset_code >> shift) & mask;
        }
        b.target = integers_to_conductance(b.codes, st.plan.v_max[s], st.g_min);
        st.blocks.push_back(std::move(b));
      }
    }
  }
  return st;
}

IntMatrix reconstruct(const ConductanceStack& st) {
  IntMatrix w(static_cast<std::size_t>(st.rows), static_cast<std::size_t>(st.cols));
  for (const auto& b : st.blocks) {
    const int sign = b.polarity == Polarity::minus ? -1 : 1;
    const int shift = st.plan.shifts[b.slice];
    for (std::size_t i = 0; i < b.codes.rows(); ++i) {
      for (int j = 0; j < st.cols; ++j) {
        w(b.row_begin + i, j) += sign * (b.codes(i, j) << shift);
      }
    }
  }
  if (st.scheme == Scheme::offset) {
    for (auto& v : w.data()) v -= st.offset_code;
  }
  return w;
}

std::vector<double> conductance_stats(const ConductanceStack& st) {
  std::vector<double> sum(static_cast<std::size_t>(st.plan.count()), 0.0);
  std::vector<double> count(sum.size(), 0.0);
  for (const auto& b : st.blocks) {
    for (std::size_t i = 0; i < b.target.rows(); ++i) {
      for (int j = 0; j < st.cols; ++j) sum[b.slice] += b.target(i, j);
    }
    count[b.slice] += static_cast<double>(b.target.rows()) * st.cols;
  }
  for (std::size_t s = 0; s < sum.size(); ++s) sum[s] = count[s] > 0 ? sum[s] / count[s] : 0.0;
  return sum;
}

}  // namespace aimsim
