#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "aimsim/matrix.hpp"

namespace aimsim {

enum class LayerKind { conv2d, dense, maxpool, avgpool, add };
enum class Activation { none, relu };

std::string to_string(LayerKind kind);
std::string to_string(Activation act);

/// Activation tensor, H x W x C, row-major with channels fastest.
struct Tensor {
  int h = 0, w = 0, c = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int h_, int w_, int c_, float fill = 0.0f)
      : h(h_), w(w_), c(c_), data(static_cast<std::size_t>(h_) * w_ * c_, fill) {}

  float& at(int y, int x, int ch) { return data[(static_cast<std::size_t>(y) * w + x) * c + ch]; }
  float at(int y, int x, int ch) const { return data[(static_cast<std::size_t>(y) * w + x) * c + ch]; }
  std::size_t size() const { return data.size(); }
  std::array<int, 3> shape() const { return {h, w, c}; }
};

/// Geometry and flags of one layer. Pool and add layers are evaluated digitally.
struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  int kx = 1, ky = 1;        // conv filter / pool window
  int in_channels = 0;       // conv N_ic, dense N_in
  int out_channels = 0;      // conv N_oc, dense N_out
  int stride = 1;
  int padding = 0;
  Activation activation = Activation::none;
  bool has_bias = false;
  bool followed_by_batchnorm = false;
  int residual_from = -1;    // add: earlier layer index whose output is added (-1 = network input)

  bool is_analog() const { return kind == LayerKind::conv2d || kind == LayerKind::dense; }
  /// Rows of the unrolled weight matrix (Kx*Ky*N_ic for conv).
  int matrix_rows() const;
  int matrix_cols() const { return out_channels; }
};

struct BatchNormParams {
  std::vector<float> gamma, beta, mean, var;
  float eps = 1e-5f;
};

struct FloatLayer {
  LayerSpec spec;
  /// Unrolled weights, matrix_rows() x matrix_cols(); row index (ky*Kx + kx)*N_ic + ic for conv.
  Matrix<float> weights;
  std::vector<float> bias;  // empty when !has_bias
  std::optional<BatchNormParams> batchnorm;
};

struct FloatNetwork {
  std::string name;
  std::array<int, 3> input_shape{};  // H, W, C
  std::vector<FloatLayer> layers;

  /// Output shape of every layer in order; throws LoadError on an inconsistent chain.
  std::vector<std::array<int, 3>> layer_output_shapes() const;
};

struct QuantizedLayer {
  LayerSpec spec;
  IntMatrix weights;          // signed codes in [-(2^(b-1)-1), 2^(b-1)-1]
  double weight_scale = 0.0;  // max|W_FP| / (2^(b-1)-1)
  std::vector<double> bias;   // digital bias, length out_channels (zeros if none)
};

struct QuantizedNetwork {
  std::string name;
  std::array<int, 3> input_shape{};
  int weight_bits = 8;
  std::vector<QuantizedLayer> layers;
};

struct ImageBatch {
  std::vector<Tensor> images;  // pixels scaled to [0, 1]
  std::vector<int> labels;

  std::size_t size() const { return images.size(); }
};

FloatNetwork load_model(const std::filesystem::path& manifest_path);

/// Folds batch-norm into the preceding conv/dense weights and bias.
FloatNetwork fold_batchnorm(const FloatNetwork& net);

/// Per-layer max-abs quantization, rounding half away from zero.
QuantizedNetwork quantize_network(const FloatNetwork& net, int weight_bits);

ImageBatch load_idx_dataset(const std::filesystem::path& images_path,
                            const std::filesystem::path& labels_path);

/// Keeps the first `count` samples (no-op if count >= size).
ImageBatch take_first(const ImageBatch& batch, std::size_t count);

/// Floating-point reference forward pass. When `layer_inputs` is given, the input
/// tensor of every analog layer is appended to it in layer order.
Tensor forward_float(const FloatNetwork& net, const Tensor& input,
                     std::vector<Tensor>* layer_inputs = nullptr);

/// Digital helpers shared by the float and the mapped pipelines.
Tensor apply_pool(const LayerSpec& spec, const Tensor& in);
Tensor apply_add(const Tensor& a, const Tensor& b);
std::array<int, 3> conv_output_shape(const LayerSpec& spec, int h, int w);

}  // namespace aimsim
