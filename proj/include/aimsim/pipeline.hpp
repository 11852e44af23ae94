#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "aimsim/adc.hpp"
#include "aimsim/devices.hpp"
#include "aimsim/mapping.hpp"
#include "aimsim/netio.hpp"
#include "aimsim/xbar.hpp"

namespace aimsim {

/// Quantization of one layer's input activations. Ranges are anchored at zero:
/// unsigned data uses [0, x_max], signed data uses [-x_max, x_max] and is applied
/// to the arrays as a positive and a negative pass.
struct ActivationSpec {
  int bits = 8;
  double x_min = 0.0;
  double x_max = 1.0;
  bool is_signed = false;

  double step() const;
  int max_code() const { return (1 << bits) - 1; }
  void validate() const;
};

/// Signed activation code: magnitude in [0, 2^bits - 1], sign carried separately.
int quantize_activation(float x, const ActivationSpec& spec);
std::vector<int> quantize_activations(std::span<const float> x, const ActivationSpec& spec);
/// Clip-and-quantize round trip used as the calibration objective.
double clip_quantize(double x, const ActivationSpec& spec);

/// Range minimizing sum |x - clip_quantize(x)| at `search_bits` resolution over a
/// percentile grid, refined by coordinate descent. Bits of the result are `bits`.
ActivationSpec calibrate_activation_range(std::span<const float> values, int bits, int search_bits = 12);

/// One spec per network layer (digital layers get a default spec that is never used).
std::vector<ActivationSpec> calibrate_activation_ranges(const FloatNetwork& net, const ImageBatch& calibration,
                                                        int bits, int search_bits = 12);

/// Integer activation tensor in HWC layout.
struct CodeTensor {
  int h = 0, w = 0, c = 0;
  std::vector<int> data;
  int at(int y, int x, int ch) const { return data[(static_cast<std::size_t>(y) * w + x) * c + ch]; }
};

/// One row per output position (row-major over output y, x); column index
/// (ky * Kx + kx) * N_ic + ic. Padding positions read zero.
IntMatrix unroll_conv(const LayerSpec& spec, const CodeTensor& input);
Matrix<float> unroll_conv(const LayerSpec& spec, const Tensor& input);

struct PipelineConfig {
  MappingConfig mapping;
  ErrorModel errors;
  AdcConfig adc;
  int activation_bits = 8;
  int calibration_search_bits = 12;  // M
  double rp_hat = 0.0;
  bool calibrate_with_errors = false;
};

struct MappedNetwork {
  QuantizedNetwork net;
  PipelineConfig cfg;
  std::vector<ActivationSpec> activations;  // per layer
  std::vector<ConductanceStack> stacks;     // per layer; empty stack for digital layers

  bool is_analog(std::size_t layer) const { return net.layers[layer].spec.is_analog(); }
};

MappedNetwork map_network(const QuantizedNetwork& net, std::vector<ActivationSpec> activations,
                          const PipelineConfig& cfg);

/// Programmed arrays of every analog layer, indexed like ConductanceStack::blocks.
struct ProgrammedNetwork {
  std::vector<std::vector<ArrayInstance>> arrays;
};

/// Samples programming errors with streams indexed by (seed, trial, layer, block).
ProgrammedNetwork program(const MappedNetwork& mapped, std::uint64_t seed, std::uint64_t trial,
                          bool with_errors = true);

enum class Backend { analog, digital_reference };

struct RunOptions {
  Backend backend = Backend::analog;
  Exec exec = Exec::parallel;
  bool use_adc = true;            // false bypasses the converters
  OutputStats* stats = nullptr;   // when set, pre-ADC outputs are recorded
};

/// Widest possible pre-ADC output interval of every converter group of `layer`.
void register_adc_groups(const MappedNetwork& mapped, std::size_t layer, OutputStats& stats);

/// Integer-domain pre-activation outputs (vectors x cols) for unsigned input codes.
RealMatrix run_layer_mvm(const MappedNetwork& mapped, const ProgrammedNetwork& programmed, std::size_t layer,
                         const IntMatrix& codes, const RunOptions& opts);

/// Signed codes are applied as a positive and a negative pass.
RealMatrix run_layer_signed(const MappedNetwork& mapped, const ProgrammedNetwork& programmed, std::size_t layer,
                            const IntMatrix& signed_codes, const RunOptions& opts);

/// Network outputs (logits) for a batch of images.
std::vector<Tensor> forward_mapped(const MappedNetwork& mapped, const ProgrammedNetwork& programmed,
                                   std::span<const Tensor> images, const RunOptions& opts,
                                   std::vector<IntMatrix>* layer_codes = nullptr);

int argmax(const Tensor& logits);

std::vector<int> predict(const MappedNetwork& mapped, const ProgrammedNetwork& programmed, const ImageBatch& data,
                         const RunOptions& opts);

/// Calibrates the converter ranges in `mapped.cfg.adc` (no-op when the ADC is disabled).
OutputStats calibrate_adc(MappedNetwork& mapped, const ImageBatch& calibration, std::uint64_t seed);

struct InferenceResult {
  std::vector<double> accuracies;  // per trial
  double mean = 0.0;
  double two_sigma = 0.0;          // two sample standard deviations
};

InferenceResult summarize(std::vector<double> accuracies);

InferenceResult run_inference(const MappedNetwork& mapped, const ImageBatch& data, int trials, std::uint64_t seed,
                              Exec exec = Exec::parallel);

/// Accuracy of a pure-integer digital execution of the quantized network.
double digital_reference_accuracy(const MappedNetwork& mapped, const ImageBatch& data);

}  // namespace aimsim
