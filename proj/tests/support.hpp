// Helpers and independent oracles shared by the unit tests and the acceptance run.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aimsim/pipeline.hpp"

namespace testing {

using namespace aimsim;

inline IntMatrix random_codes(std::mt19937_64& rng, std::size_t rows, std::size_t cols, int lo, int hi) {
  std::uniform_int_distribution<int> d(lo, hi);
  IntMatrix m(rows, cols);
  for (auto& v : m.data()) v = d(rng);
  return m;
}

/// Plain integer W^T x, one row of `x` per vector.
inline std::vector<std::vector<std::int64_t>> integer_mvm(const IntMatrix& w, const IntMatrix& x) {
  std::vector<std::vector<std::int64_t>> y(x.rows(), std::vector<std::int64_t>(w.cols(), 0));
  for (std::size_t v = 0; v < x.rows(); ++v)
    for (std::size_t i = 0; i < w.rows(); ++i)
      for (std::size_t j = 0; j < w.cols(); ++j) y[v][j] += static_cast<std::int64_t>(x(v, i)) * w(i, j);
  return y;
}

/// One dense layer holding `w` as its integer weights.
inline QuantizedNetwork dense_net(const IntMatrix& w, int weight_bits = 8) {
  QuantizedLayer l;
  l.spec.kind = LayerKind::dense;
  l.spec.in_channels = static_cast<int>(w.rows());
  l.spec.out_channels = static_cast<int>(w.cols());
  l.weights = w;
  l.weight_scale = 1.0;
  l.bias.assign(w.cols(), 0.0);
  QuantizedNetwork net;
  net.name = "dense";
  net.input_shape = {1, 1, static_cast<int>(w.rows())};
  net.weight_bits = weight_bits;
  net.layers.push_back(std::move(l));
  return net;
}

inline MappedNetwork map_dense(const IntMatrix& w, const PipelineConfig& cfg, int act_bits = 8) {
  ActivationSpec a;
  a.bits = act_bits;
  a.x_max = 1.0;
  return map_network(dense_net(w, cfg.mapping.weight_bits), {a}, cfg);
}

inline MappingConfig scheme(Scheme s, int bits_per_cell, Accumulation acc = Accumulation::analog,
                            bool unit_column = false, int max_rows = 1152) {
  MappingConfig m;
  m.scheme = s;
  m.bits_per_cell = bits_per_cell;
  m.input_accumulation = acc;
  m.unit_column = unit_column;
  m.max_rows = max_rows;
  return m;
}

/// Dense nodal analysis of one bit-line ladder. Unknowns are the node voltages;
/// node 0 connects to ground through one segment, cells connect the unit supply.
inline double nodal_current(const std::vector<double>& g, double rp) {
  const auto n = static_cast<Eigen::Index>(g.size());
  const double s = 1.0 / rp;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a(i, i) += g[static_cast<std::size_t>(i)] + s;  // cell and the segment towards ground
    b(i) = g[static_cast<std::size_t>(i)];
    if (i > 0) a(i, i - 1) -= s;
    if (i + 1 < n) {
      a(i, i) += s;
      a(i, i + 1) -= s;
    }
  }
  const Eigen::VectorXd v = a.partialPivLu().solve(b);
  return v(0) * s;
}

/// Direct (unrolled by hand) convolution over HWC integer codes, weights [ky][kx][ic][oc].
inline std::vector<std::int64_t> direct_conv(const LayerSpec& s, const CodeTensor& in, const IntMatrix& w, int& oh,
                                             int& ow) {
  oh = (in.h + 2 * s.padding - s.ky) / s.stride + 1;
  ow = (in.w + 2 * s.padding - s.kx) / s.stride + 1;
  std::vector<std::int64_t> out(static_cast<std::size_t>(oh) * ow * s.out_channels, 0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x)
      for (int oc = 0; oc < s.out_channels; ++oc) {
        std::int64_t acc = 0;
        for (int dy = 0; dy < s.ky; ++dy)
          for (int dx = 0; dx < s.kx; ++dx) {
            const int iy = y * s.stride + dy - s.padding, ix = x * s.stride + dx - s.padding;
            if (iy < 0 || ix < 0 || iy >= in.h || ix >= in.w) continue;
            for (int ic = 0; ic < s.in_channels; ++ic) {
              const auto row = static_cast<std::size_t>((dy * s.kx + dx) * s.in_channels + ic);
              acc += static_cast<std::int64_t>(in.at(iy, ix, ic)) * w(row, static_cast<std::size_t>(oc));
            }
          }
        out[(static_cast<std::size_t>(y) * ow + x) * s.out_channels + oc] = acc;
      }
  return out;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("aimsim_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline void write_floats(const std::filesystem::path& p, const std::vector<float>& v) {
  std::ofstream f(p, std::ios::binary);
  f.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
}

inline void write_text(const std::filesystem::path& p, const std::string& s) { std::ofstream(p) << s; }

/// Writes an unsigned-byte IDX file.
inline void write_idx(const std::filesystem::path& p, const std::vector<std::uint32_t>& dims,
                      const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(p, std::ios::binary);
  const unsigned char head[4] = {0, 0, 0x08, static_cast<unsigned char>(dims.size())};
  f.write(reinterpret_cast<const char*>(head), 4);
  for (auto d : dims) {
    const unsigned char b[4] = {static_cast<unsigned char>(d >> 24), static_cast<unsigned char>(d >> 16),
                                static_cast<unsigned char>(d >> 8), static_cast<unsigned char>(d)};
    f.write(reinterpret_cast<const char*>(b), 4);
  }
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline std::string data_dir() { return AIMSIM_DATA_DIR; }

}  // namespace testing
