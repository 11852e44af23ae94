#include "aimsim/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "aimsim/error.hpp"

namespace aimsim {

namespace {

constexpr std::uint64_t kCalibrationTrial = 0xffffffffu;
constexpr std::size_t kChunk = 256;

ArrayRole role_of(Polarity p) {
  switch (p) {
    case Polarity::plus: return ArrayRole::plus;
    case Polarity::minus: return ArrayRole::minus;
    case Polarity::offset: return ArrayRole::offset;
  }
  return ArrayRole::offset;
}

bool error_free(const ErrorModel& m) {
  switch (m.kind) {
    case ErrorKind::ideal: return true;
    case ErrorKind::state_independent:
    case ErrorKind::state_proportional: return m.alpha == 0.0;
    case ErrorKind::tabulated_sigma:
      if (m.table_g.empty()) return m.sigma_sat == 0.0;
      return std::all_of(m.table_sigma.begin(), m.table_sigma.end(), [](double s) { return s == 0.0; });
  }
  return false;
}

}  // namespace

MappedNetwork map_network(const QuantizedNetwork& net, std::vector<ActivationSpec> activations,
                          const PipelineConfig& cfg) {
  cfg.mapping.validate();
  cfg.errors.validate();
  cfg.adc.validate();
  if (!(cfg.rp_hat >= 0.0)) throw ConfigError("parasitic resistance must be >= 0");
  if (activations.size() != net.layers.size()) {
    throw ConfigError("need one activation spec per layer (" + std::to_string(net.layers.size()) + "), got " +
                      std::to_string(activations.size()));
  }
  if (net.weight_bits != cfg.mapping.weight_bits) {
    throw ConfigError("network quantized to " + std::to_string(net.weight_bits) + " bits, mapping expects " +
                      std::to_string(cfg.mapping.weight_bits));
  }
  MappedNetwork m;
  m.net = net;
  m.cfg = cfg;
  m.activations = std::move(activations);
  m.stacks.resize(net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    if (!layer.spec.is_analog()) continue;
    m.activations[l].validate();
    if (layer.weights.rows() != static_cast<std::size_t>(layer.spec.matrix_rows()) ||
        layer.weights.cols() != static_cast<std::size_t>(layer.spec.matrix_cols())) {
      throw ConfigError("layer " + std::to_string(l) + " weight matrix does not match its geometry");
    }
    m.stacks[l] = decompose(layer.weights, cfg.mapping);
  }
  return m;
}

ProgrammedNetwork program(const MappedNetwork& mapped, std::uint64_t seed, std::uint64_t trial, bool with_errors) {
  const bool ideal = !with_errors || error_free(mapped.cfg.errors);
  ProgrammedNetwork p;
  p.arrays.resize(mapped.stacks.size());
  for (std::size_t l = 0; l < mapped.stacks.size(); ++l) {
    const auto& st = mapped.stacks[l];
    for (std::size_t k = 0; k < st.blocks.size(); ++k) {
      const auto& b = st.blocks[k];
      const int v_max = st.plan.v_max[b.slice];
      if (ideal) {
        p.arrays[l].push_back(
            ArrayInstance::ideal(b.codes, v_max, st.g_min, mapped.cfg.rp_hat, role_of(b.polarity), b.slice));
      } else {
        SeededStream stream(seed, trial, l, k);
        p.arrays[l].push_back(ArrayInstance::programmed(sample_programmed(mapped.cfg.errors, b.target, stream), v_max,
                                                        st.g_min, mapped.cfg.rp_hat, role_of(b.polarity), b.slice));
      }
    }
  }
  return p;
}

void register_adc_groups(const MappedNetwork& mapped, std::size_t layer, OutputStats& stats) {
  const auto& st = mapped.stacks.at(layer);
  const auto& act = mapped.activations.at(layer);
  const bool digital = mapped.cfg.mapping.input_accumulation == Accumulation::digital;
  const double x_max = digital ? 1.0 : act.max_code();
  for (int p = 0; p < st.partitions(); ++p) {
    const double rows = st.partition_begin[p + 1] - st.partition_begin[p];
    for (int s = 0; s < st.plan.count(); ++s) {
      const double v_max = st.plan.v_max[s];
      const double leak = st.g_min * v_max / (1.0 - st.g_min);
      const GroupKey key{static_cast<int>(layer), s, p};
      if (st.scheme == Scheme::differential) {
        stats.register_group(key, -x_max * rows * v_max, x_max * rows * v_max);
      } else {
        stats.register_group(key, 0.0, x_max * rows * (v_max + leak));
      }
    }
  }
}

RealMatrix run_layer_mvm(const MappedNetwork& mapped, const ProgrammedNetwork& programmed, std::size_t layer,
                         const IntMatrix& codes, const RunOptions& opts) {
  const auto& st = mapped.stacks.at(layer);
  if (codes.cols() != static_cast<std::size_t>(st.rows)) {
    throw SimulationError("layer " + std::to_string(layer) + " expects " + std::to_string(st.rows) +
                          " inputs, got " + std::to_string(codes.cols()));
  }
  const std::size_t n = codes.rows();
  const auto cols = static_cast<std::size_t>(st.cols);
  RealMatrix y(n, cols, 0.0);

  if (opts.backend == Backend::digital_reference) {
    const auto& w = mapped.net.layers[layer].weights;
    for (std::size_t v = 0; v < n; ++v) {
      std::vector<std::int64_t> acc(cols, 0);
      for (std::size_t i = 0; i < codes.cols(); ++i) {
        const std::int64_t x = codes(v, i);
        if (x == 0) continue;
        for (std::size_t j = 0; j < cols; ++j) acc[j] += x * w(i, j);
      }
      for (std::size_t j = 0; j < cols; ++j) y(v, j) = static_cast<double>(acc[j]);
    }
    return y;
  }

  const auto& arrays = programmed.arrays.at(layer);
  if (arrays.size() != st.blocks.size()) throw SimulationError("layer " + std::to_string(layer) + " is not programmed");
  const auto& cfg = mapped.cfg;
  const int bits = mapped.activations.at(layer).bits;
  const bool adc_on = opts.use_adc && cfg.adc.enabled();
  const bool per_bit = cfg.mapping.input_accumulation == Accumulation::digital && (adc_on || opts.stats != nullptr);
  const bool offset = st.scheme == Scheme::offset;

  for (int p = 0; p < st.partitions(); ++p) {
    const int r0 = st.partition_begin[p], r1 = st.partition_begin[p + 1];
    RealMatrix part(n, st.cols + (st.unit_column ? 1 : 0), 0.0);
    double leak_per_input = 0.0;
    for (int s = 0; s < st.plan.count(); ++s) {
      const double shift = std::ldexp(1.0, st.plan.shifts[s]);
      const auto& first = arrays[st.block_index(p, s, offset ? Polarity::offset : Polarity::plus)];
      leak_per_input += shift * first.leakage();
      AnalogBatch a = analog_batch(first, codes, static_cast<std::size_t>(r0), bits, per_bit, opts.exec);
      if (!offset) {
        const AnalogBatch b = analog_batch(arrays[st.block_index(p, s, Polarity::minus)], codes,
                                           static_cast<std::size_t>(r0), bits, per_bit, opts.exec);
        for (std::size_t k = 0; k < a.data.size(); ++k) a.data[k] -= b.data[k];
      }
      const GroupKey key{static_cast<int>(layer), s, p};
      if (opts.stats) opts.stats->add(key, a.data);
      if (adc_on) {
        const AdcRange range = cfg.adc.range(key);
        const int adc_bits = cfg.adc.bits;
        const auto total = static_cast<std::ptrdiff_t>(a.data.size());
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t k = 0; k < total; ++k) a.data[k] = quantize(a.data[k], range, adc_bits).value;
      }
      for (std::size_t v = 0; v < n; ++v) {
        auto dst = part.row(v);
        for (std::size_t c = 0; c < a.conversions; ++c) {
          const double w = shift * (per_bit ? std::ldexp(1.0, static_cast<int>(c)) : 1.0);
          for (std::size_t j = 0; j < a.cols; ++j) dst[j] += w * a.at(v, c, j);
        }
      }
    }
    for (std::size_t v = 0; v < n; ++v) {
      std::span<const double> cols_v = part.row(v).subspan(0, cols);
      std::vector<double> out(cols_v.begin(), cols_v.end());
      if (offset) {
        double x_sum = 0.0;
        for (int i = r0; i < r1; ++i) x_sum += codes(v, i);
        const OffsetSubtraction sub{st.offset_code, leak_per_input, st.unit_column};
        out = combine_offset(cols_v, x_sum, sub,
                             st.unit_column ? std::optional<double>(part(v, cols)) : std::nullopt);
      }
      for (std::size_t j = 0; j < cols; ++j) y(v, j) += out[j];
    }
  }
  return y;
}

RealMatrix run_layer_signed(const MappedNetwork& mapped, const ProgrammedNetwork& programmed, std::size_t layer,
                            const IntMatrix& signed_codes, const RunOptions& opts) {
  IntMatrix pos(signed_codes.rows(), signed_codes.cols()), neg(signed_codes.rows(), signed_codes.cols());
  for (std::size_t k = 0; k < signed_codes.size(); ++k) {
    const int x = signed_codes.data()[k];
    (x >= 0 ? pos.data()[k] : neg.data()[k]) = std::abs(x);
  }
  RealMatrix y = run_layer_mvm(mapped, programmed, layer, pos, opts);
  const RealMatrix yn = run_layer_mvm(mapped, programmed, layer, neg, opts);
  for (std::size_t k = 0; k < y.size(); ++k) y.data()[k] -= yn.data()[k];
  return y;
}

std::vector<Tensor> forward_mapped(const MappedNetwork& mapped, const ProgrammedNetwork& programmed,
                                   std::span<const Tensor> images, const RunOptions& opts,
                                   std::vector<IntMatrix>* layer_codes) {
  const auto& layers = mapped.net.layers;
  const std::size_t n = images.size();
  std::vector<std::vector<Tensor>> outs(layers.size());
  std::vector<Tensor> cur(images.begin(), images.end());
  if (layer_codes) layer_codes->assign(layers.size(), IntMatrix());

  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    const auto& spec = layer.spec;
    switch (spec.kind) {
      case LayerKind::maxpool:
      case LayerKind::avgpool:
        for (auto& t : cur) t = apply_pool(spec, t);
        break;
      case LayerKind::add: {
        const auto& other = spec.residual_from < 0 ? std::vector<Tensor>(images.begin(), images.end())
                                                   : outs.at(static_cast<std::size_t>(spec.residual_from));
        for (std::size_t i = 0; i < n; ++i) cur[i] = apply_add(cur[i], other[i]);
        break;
      }
      case LayerKind::conv2d:
      case LayerKind::dense: {
        const auto& act = mapped.activations[l];
        const auto rows = static_cast<std::size_t>(spec.matrix_rows());
        int oh = 1, ow = 1;
        IntMatrix x;
        if (spec.kind == LayerKind::conv2d) {
          if (n > 0) {
            const auto shape = conv_output_shape(spec, cur[0].h, cur[0].w);
            oh = shape[0];
            ow = shape[1];
          }
          const auto per = static_cast<std::size_t>(oh) * ow;
          x = IntMatrix(n * per, rows);
          for (std::size_t i = 0; i < n; ++i) {
            CodeTensor ct{cur[i].h, cur[i].w, cur[i].c, quantize_activations(cur[i].data, act)};
            const IntMatrix u = unroll_conv(spec, ct);
            std::copy(u.data().begin(), u.data().end(), x.data().begin() + static_cast<std::ptrdiff_t>(i * per * rows));
          }
        } else {
          x = IntMatrix(n, rows);
          for (std::size_t i = 0; i < n; ++i) {
            if (cur[i].size() != rows) {
              throw SimulationError("dense layer " + std::to_string(l) + " expects " + std::to_string(rows) +
                                    " inputs, got " + std::to_string(cur[i].size()));
            }
            const auto q = quantize_activations(cur[i].data, act);
            std::copy(q.begin(), q.end(), x.row(i).begin());
          }
        }
        const RealMatrix y = act.is_signed ? run_layer_signed(mapped, programmed, l, x, opts)
                                           : run_layer_mvm(mapped, programmed, l, x, opts);
        const double scale = layer.weight_scale * act.step();
        const int cols = spec.matrix_cols();
        const auto per = static_cast<std::size_t>(oh) * ow;
        for (std::size_t i = 0; i < n; ++i) {
          Tensor t(oh, ow, cols);
          for (std::size_t pos = 0; pos < per; ++pos) {
            for (int j = 0; j < cols; ++j) {
              double z = scale * y(i * per + pos, static_cast<std::size_t>(j)) + layer.bias[static_cast<std::size_t>(j)];
              if (spec.activation == Activation::relu) z = std::max(0.0, z);
              t.data[pos * static_cast<std::size_t>(cols) + static_cast<std::size_t>(j)] = static_cast<float>(z);
            }
          }
          cur[i] = std::move(t);
        }
        if (layer_codes) (*layer_codes)[l] = std::move(x);
        break;
      }
    }
    outs[l] = cur;
  }
  return cur;
}

int argmax(const Tensor& logits) {
  return static_cast<int>(std::max_element(logits.data.begin(), logits.data.end()) - logits.data.begin());
}

std::vector<int> predict(const MappedNetwork& mapped, const ProgrammedNetwork& programmed, const ImageBatch& data,
                         const RunOptions& opts) {
  std::vector<int> out;
  out.reserve(data.size());
  const std::span<const Tensor> all(data.images);
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const auto len = std::min(kChunk, data.size() - start);
    for (const auto& t : forward_mapped(mapped, programmed, all.subspan(start, len), opts)) out.push_back(argmax(t));
  }
  return out;
}

OutputStats calibrate_adc(MappedNetwork& mapped, const ImageBatch& calibration, std::uint64_t seed) {
  OutputStats stats;
  auto& adc = mapped.cfg.adc;
  if (!adc.enabled()) return stats;
  for (std::size_t l = 0; l < mapped.stacks.size(); ++l) {
    if (mapped.is_analog(l)) register_adc_groups(mapped, l, stats);
  }
  adc.ranges.clear();
  if (adc.policy == AdcPolicy::full_range) {
    for (const auto& [key, b] : stats.groups()) adc.ranges[key] = full_range(b.lo, b.hi, adc.bits);
    return stats;
  }
  if (calibration.size() == 0) throw SimulationError("empty calibration set");
  const ProgrammedNetwork prog = program(mapped, seed, kCalibrationTrial, mapped.cfg.calibrate_with_errors);
  RunOptions opts;
  opts.use_adc = false;
  opts.stats = &stats;
  predict(mapped, prog, calibration, opts);
  adc.ranges = calibrate_ranges(stats, adc.percentile, adc.power_of_two_slices);
  return stats;
}

InferenceResult summarize(std::vector<double> accuracies) {
  InferenceResult r;
  r.accuracies = std::move(accuracies);
  const auto n = static_cast<double>(r.accuracies.size());
  if (r.accuracies.empty()) return r;
  r.mean = std::accumulate(r.accuracies.begin(), r.accuracies.end(), 0.0) / n;
  if (r.accuracies.size() > 1) {
    double ss = 0.0;
    for (double a : r.accuracies) ss += (a - r.mean) * (a - r.mean);
    r.two_sigma = 2.0 * std::sqrt(ss / (n - 1.0));
  }
  return r;
}

namespace {

double accuracy(const std::vector<int>& pred, const std::vector<int>& labels) {
  if (pred.empty()) throw SimulationError("empty evaluation set");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

}  // namespace

InferenceResult run_inference(const MappedNetwork& mapped, const ImageBatch& data, int trials, std::uint64_t seed,
                              Exec exec) {
  if (trials < 1) throw ConfigError("trials must be >= 1");
  std::vector<double> acc;
  RunOptions opts;
  opts.exec = exec;
  for (int t = 0; t < trials; ++t) {
    const ProgrammedNetwork prog = program(mapped, seed, static_cast<std::uint64_t>(t));
    acc.push_back(accuracy(predict(mapped, prog, data, opts), data.labels));
  }
  return summarize(std::move(acc));
}

double digital_reference_accuracy(const MappedNetwork& mapped, const ImageBatch& data) {
  RunOptions opts;
  opts.backend = Backend::digital_reference;
  return accuracy(predict(mapped, ProgrammedNetwork{}, data, opts), data.labels);
}

}  // namespace aimsim
