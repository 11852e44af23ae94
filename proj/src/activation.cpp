#include <algorithm>
#include <cmath>

#include "aimsim/error.hpp"
#include "aimsim/pipeline.hpp"

namespace aimsim {

double ActivationSpec::step() const { return x_max / max_code(); }

void ActivationSpec::validate() const {
  if (bits < 2 || bits > 16) throw ConfigError("activation bits must be in [2, 16]");
  if (!(x_max > x_min)) throw ConfigError("activation range needs x_max > x_min");
  if (!(x_max > 0.0)) throw ConfigError("activation range must contain positive values");
}

int quantize_activation(float x, const ActivationSpec& spec) {
  const double mag = std::min(std::fabs(static_cast<double>(x)), spec.x_max);
  const int code = static_cast<int>(std::lround(mag / spec.step()));
  if (x < 0.0f) return spec.is_signed ? -code : 0;
  return code;
}

std::vector<int> quantize_activations(std::span<const float> x, const ActivationSpec& spec) {
  std::vector<int> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = quantize_activation(x[i], spec);
  return out;
}

double clip_quantize(double x, const ActivationSpec& spec) {
  return quantize_activation(static_cast<float>(x), spec) * spec.step();
}

namespace {

double l1_error(const std::vector<double>& mags, double x_max, int bits) {
  const double step = x_max / ((1 << bits) - 1);
  double err = 0.0;
  for (double m : mags) {
    const double q = std::round(std::min(m, x_max) / step) * step;
    err += std::fabs(m - q);
  }
  return err;
}

}  // namespace

ActivationSpec calibrate_activation_range(std::span<const float> values, int bits, int search_bits) {
  if (values.empty()) throw SimulationError("no activations to calibrate");
  if (search_bits < 1 || search_bits > 24) throw ConfigError("calibration search bits must be in [1, 24]");
  ActivationSpec spec;
  spec.bits = bits;
  spec.is_signed = std::any_of(values.begin(), values.end(), [](float v) { return v < 0.0f; });

  // Only magnitudes matter once the range is anchored at zero.
  std::vector<double> mags;
  mags.reserve(values.size());
  for (float v : values) mags.push_back(spec.is_signed ? std::fabs(v) : std::max(0.0f, v));
  std::sort(mags.begin(), mags.end());

  if (!(mags.back() > 0.0)) {
    spec.x_max = 1e-6;
    spec.x_min = spec.is_signed ? -spec.x_max : 0.0;
    spec.validate();
    return spec;
  }

  const double last = static_cast<double>(mags.size() - 1);
  double best = 0.0, best_err = 0.0;
  for (double p : {90.0, 99.0, 99.9, 99.99, 100.0}) {
    const double cand = mags[static_cast<std::size_t>(std::ceil(p / 100.0 * last))];
    if (!(cand > 0.0)) continue;
    const double e = l1_error(mags, cand, search_bits);
    if (best == 0.0 || e < best_err) {
      best = cand;
      best_err = e;
    }
  }

  double step = best * 0.25;
  for (int it = 0; it < 200 && step > best * 1e-4; ++it) {
    bool moved = false;
    for (double cand : {best - step, best + step}) {
      if (!(cand > 0.0)) continue;
      const double e = l1_error(mags, cand, search_bits);
      if (e < best_err) {
        best = cand;
        best_err = e;
        moved = true;
        break;
      }
    }
    if (!moved) step /= 2.0;
  }

  spec.x_max = best;
  spec.x_min = spec.is_signed ? -best : 0.0;
  spec.validate();
  return spec;
}

std::vector<ActivationSpec> calibrate_activation_ranges(const FloatNetwork& net, const ImageBatch& calibration,
                                                        int bits, int search_bits) {
  if (calibration.size() == 0) throw SimulationError("empty calibration set");
  std::vector<std::size_t> analog;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    if (net.layers[l].spec.is_analog()) analog.push_back(l);
  }
  std::vector<std::vector<float>> collected(analog.size());
  for (const auto& img : calibration.images) {
    std::vector<Tensor> inputs;
    forward_float(net, img, &inputs);
    for (std::size_t k = 0; k < analog.size(); ++k) {
      collected[k].insert(collected[k].end(), inputs[k].data.begin(), inputs[k].data.end());
    }
  }
  std::vector<ActivationSpec> specs(net.layers.size());
  for (auto& s : specs) s.bits = bits;
  for (std::size_t k = 0; k < analog.size(); ++k) {
    specs[analog[k]] = calibrate_activation_range(collected[k], bits, search_bits);
  }
  return specs;
}

namespace {

template <typename T, typename Src>
Matrix<T> unroll(const LayerSpec& spec, const Src& in) {
  if (spec.kind != LayerKind::conv2d) throw SimulationError("unroll_conv needs a conv layer");
  if (in.c != spec.in_channels) {
    throw SimulationError("conv input has " + std::to_string(in.c) + " channels, layer expects " +
                          std::to_string(spec.in_channels));
  }
  const auto [oh, ow, oc] = conv_output_shape(spec, in.h, in.w);
  (void)oc;
  Matrix<T> out(static_cast<std::size_t>(oh) * ow, static_cast<std::size_t>(spec.matrix_rows()), T{});
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      auto row = out.row(static_cast<std::size_t>(oy) * ow + ox);
      for (int ky = 0; ky < spec.ky; ++ky) {
        const int y = oy * spec.stride + ky - spec.padding;
        if (y < 0 || y >= in.h) continue;
        for (int kx = 0; kx < spec.kx; ++kx) {
          const int x = ox * spec.stride + kx - spec.padding;
          if (x < 0 || x >= in.w) continue;
          const std::size_t base = static_cast<std::size_t>(ky * spec.kx + kx) * in.c;
          for (int ic = 0; ic < in.c; ++ic) row[base + ic] = in.at(y, x, ic);
        }
      }
    }
  }
  return out;
}

}  // namespace

IntMatrix unroll_conv(const LayerSpec& spec, const CodeTensor& input) { return unroll<int>(spec, input); }

Matrix<float> unroll_conv(const LayerSpec& spec, const Tensor& input) { return unroll<float>(spec, input); }

}  // namespace aimsim
