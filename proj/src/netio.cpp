#include "aimsim/netio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "aimsim/error.hpp"

namespace aimsim {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::dense: return "dense";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::avgpool: return "avgpool";
    case LayerKind::add: return "add";
  }
  return "?";
}

std::string to_string(Activation act) { return act == Activation::relu ? "relu" : "none"; }

int LayerSpec::matrix_rows() const {
  return kind == LayerKind::conv2d ? kx * ky * in_channels : in_channels;
}

std::array<int, 3> conv_output_shape(const LayerSpec& spec, int h, int w) {
  const int oh = (h + 2 * spec.padding - spec.ky) / spec.stride + 1;
  const int ow = (w + 2 * spec.padding - spec.kx) / spec.stride + 1;
  return {oh, ow, spec.kind == LayerKind::conv2d ? spec.out_channels : 0};
}

std::vector<std::array<int, 3>> FloatNetwork::layer_output_shapes() const {
  std::vector<std::array<int, 3>> shapes;
  std::array<int, 3> cur = input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& s = layers[i].spec;
    const auto where = "layer " + std::to_string(i) + " (" + to_string(s.kind) + "): ";
    switch (s.kind) {
      case LayerKind::conv2d: {
        if (cur[2] != s.in_channels) {
          throw LoadError(where + "expects " + std::to_string(s.in_channels) +
                          " input channels, previous layer produces " + std::to_string(cur[2]));
        }
        auto out = conv_output_shape(s, cur[0], cur[1]);
        if (out[0] < 1 || out[1] < 1) throw LoadError(where + "output has no spatial extent");
        cur = out;
        break;
      }
      case LayerKind::dense: {
        const int flat = cur[0] * cur[1] * cur[2];
        if (flat != s.in_channels) {
          throw LoadError(where + "expects " + std::to_string(s.in_channels) +
                          " inputs, previous layer produces " + std::to_string(flat));
        }
        cur = {1, 1, s.out_channels};
        break;
      }
      case LayerKind::maxpool:
      case LayerKind::avgpool: {
        const int oh = (cur[0] - s.ky) / s.stride + 1;
        const int ow = (cur[1] - s.kx) / s.stride + 1;
        if (oh < 1 || ow < 1) throw LoadError(where + "pool window larger than input");
        cur = {oh, ow, cur[2]};
        break;
      }
      case LayerKind::add: {
        if (s.residual_from < -1 || s.residual_from >= static_cast<int>(i)) {
          throw LoadError(where + "residual source must be an earlier layer");
        }
        const auto other = s.residual_from < 0 ? input_shape : shapes[s.residual_from];
        if (other != cur) throw LoadError(where + "residual operand shapes differ");
        break;
      }
    }
    shapes.push_back(cur);
  }
  return shapes;
}

namespace {

std::vector<float> read_blob(const fs::path& dir, const std::string& name, std::size_t count) {
  const fs::path path = dir / name;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("missing blob '" + name + "' (" + path.string() + ")");
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != count * sizeof(float)) {
    throw LoadError("blob '" + name + "' holds " + std::to_string(bytes / sizeof(float)) +
                    " floats, shape requires " + std::to_string(count));
  }
  in.seekg(0);
  std::vector<float> out(count);
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(bytes));
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& v : out) {
      auto u = std::bit_cast<std::uint32_t>(v);
      u = (u >> 24) | ((u >> 8) & 0xff00u) | ((u << 8) & 0xff0000u) | (u << 24);
      v = std::bit_cast<float>(u);
    }
  }
  return out;
}

LayerKind parse_kind(const std::string& s) {
  if (s == "conv2d") return LayerKind::conv2d;
  if (s == "dense") return LayerKind::dense;
  if (s == "maxpool") return LayerKind::maxpool;
  if (s == "avgpool") return LayerKind::avgpool;
  if (s == "add") return LayerKind::add;
  throw LoadError("unsupported layer kind '" + s + "'");
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "none" || s.empty()) return Activation::none;
  throw LoadError("unsupported activation '" + s + "'");
}

}  // namespace

FloatNetwork load_model(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw LoadError("cannot open manifest " + manifest_path.string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw LoadError("manifest " + manifest_path.string() + ": " + e.what());
  }
  const fs::path dir = manifest_path.parent_path();

  FloatNetwork net;
  try {
    net.name = m.value("name", manifest_path.stem().string());
    const auto shape = m.at("input_shape").get<std::vector<int>>();
    if (shape.size() != 3) throw LoadError("input_shape must be [H, W, C]");
    net.input_shape = {shape[0], shape[1], shape[2]};

    for (const auto& jl : m.at("layers")) {
      FloatLayer layer;
      LayerSpec& s = layer.spec;
      s.kind = parse_kind(jl.at("kind").get<std::string>());
      s.stride = jl.value("stride", 1);
      s.padding = jl.value("padding", 0);
      s.activation = parse_activation(jl.value("activation", std::string("none")));
      if (s.stride < 1 || s.padding < 0) throw LoadError("stride must be >= 1 and padding >= 0");

      if (s.kind == LayerKind::conv2d || s.kind == LayerKind::dense) {
        const auto ws = jl.at("shape").get<std::vector<int>>();
        if (s.kind == LayerKind::conv2d) {
          if (ws.size() != 4) throw LoadError("conv2d shape must be [Ky, Kx, N_ic, N_oc]");
          s.ky = ws[0];
          s.kx = ws[1];
          s.in_channels = ws[2];
          s.out_channels = ws[3];
        } else {
          if (ws.size() != 2) throw LoadError("dense shape must be [N_in, N_out]");
          s.in_channels = ws[0];
          s.out_channels = ws[1];
        }
        for (int d : ws) {
          if (d < 1) throw LoadError("weight dimensions must be positive");
        }
        const auto rows = static_cast<std::size_t>(s.matrix_rows());
        const auto cols = static_cast<std::size_t>(s.matrix_cols());
        layer.weights = Matrix<float>(rows, cols,
                                      read_blob(dir, jl.at("weight_blob").get<std::string>(), rows * cols));
        if (jl.contains("bias_blob") && !jl["bias_blob"].is_null()) {
          s.has_bias = true;
          layer.bias = read_blob(dir, jl["bias_blob"].get<std::string>(), cols);
        }
        if (jl.contains("bn_blob") && !jl["bn_blob"].is_null()) {
          s.followed_by_batchnorm = true;
          auto p = read_blob(dir, jl["bn_blob"].get<std::string>(), 4 * cols);
          BatchNormParams bn;
          const auto part = [&](std::size_t k) {
            return std::vector<float>(p.begin() + static_cast<long>(k * cols),
                                      p.begin() + static_cast<long>((k + 1) * cols));
          };
          bn.gamma = part(0);
          bn.beta = part(1);
          bn.mean = part(2);
          bn.var = part(3);
          bn.eps = jl.value("bn_eps", 1e-5f);
          layer.batchnorm = std::move(bn);
        }
      } else if (s.kind == LayerKind::add) {
        s.residual_from = jl.at("from").get<int>();
      } else {
        const auto win = jl.at("window").get<std::vector<int>>();
        if (win.size() != 2 || win[0] < 1 || win[1] < 1) throw LoadError("pool window must be [Ky, Kx]");
        s.ky = win[0];
        s.kx = win[1];
        s.stride = jl.value("stride", win[0]);
        if (jl.contains("bn_blob")) throw LoadError("batch-norm is only supported after conv2d/dense");
      }
      net.layers.push_back(std::move(layer));
    }
  } catch (const json::exception& e) {
    throw LoadError("manifest " + manifest_path.string() + ": " + e.what());
  }
  net.layer_output_shapes();
  return net;
}

FloatNetwork fold_batchnorm(const FloatNetwork& net) {
  FloatNetwork out = net;
  for (auto& layer : out.layers) {
    if (!layer.batchnorm) continue;
    if (!layer.spec.is_analog()) {
      throw ConfigError("batch-norm cannot be folded into a " + to_string(layer.spec.kind) + " layer");
    }
    const auto& bn = *layer.batchnorm;
    const std::size_t cols = layer.weights.cols();
    if (layer.bias.empty()) layer.bias.assign(cols, 0.0f);
    for (std::size_t j = 0; j < cols; ++j) {
      const double scale = bn.gamma[j] / std::sqrt(static_cast<double>(bn.var[j]) + bn.eps);
      for (std::size_t i = 0; i < layer.weights.rows(); ++i) {
        layer.weights(i, j) = static_cast<float>(layer.weights(i, j) * scale);
      }
      layer.bias[j] = static_cast<float>((layer.bias[j] - bn.mean[j]) * scale + bn.beta[j]);
    }
    layer.spec.has_bias = true;
    layer.spec.followed_by_batchnorm = false;
    layer.batchnorm.reset();
  }
  return out;
}

QuantizedNetwork quantize_network(const FloatNetwork& net, int weight_bits) {
  if (weight_bits < 2 || weight_bits > 16) throw ConfigError("weight_bits must be in [2, 16]");
  QuantizedNetwork q;
  q.name = net.name;
  q.input_shape = net.input_shape;
  q.weight_bits = weight_bits;
  const int max_code = (1 << (weight_bits - 1)) - 1;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const auto& layer = net.layers[li];
    if (layer.batchnorm) throw ConfigError("quantize_network requires batch-norm to be folded first");
    QuantizedLayer ql;
    ql.spec = layer.spec;
    if (layer.spec.is_analog()) {
      double max_abs = 0.0;
      for (float v : layer.weights.data()) max_abs = std::max(max_abs, std::abs(static_cast<double>(v)));
      if (max_abs == 0.0) {
        throw ConfigError("layer " + std::to_string(li) + " has an all-zero weight matrix");
      }
      ql.weight_scale = max_abs / max_code;
      ql.weights = IntMatrix(layer.weights.rows(), layer.weights.cols());
      for (std::size_t k = 0; k < layer.weights.size(); ++k) {
        // std::round rounds halves away from zero
        const double code = std::round(layer.weights.data()[k] / max_abs * max_code);
        ql.weights.data()[k] = static_cast<int>(code);
      }
      ql.bias.assign(layer.spec.out_channels, 0.0);
      for (std::size_t j = 0; j < layer.bias.size(); ++j) ql.bias[j] = layer.bias[j];
    }
    q.layers.push_back(std::move(ql));
  }
  return q;
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw LoadError(what + ": truncated header");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

/// Returns the dimension list of an unsigned-byte IDX file and leaves the stream at the payload.
std::vector<std::uint32_t> read_idx_header(std::istream& in, const std::string& what) {
  const std::uint32_t magic = read_be32(in, what);
  if ((magic >> 16) != 0 || ((magic >> 8) & 0xff) != 0x08) {
    throw LoadError(what + ": bad magic number (expected unsigned-byte IDX)");
  }
  const std::uint32_t ndim = magic & 0xff;
  if (ndim == 0) throw LoadError(what + ": zero dimensions");
  std::vector<std::uint32_t> dims(ndim);
  for (auto& d : dims) d = read_be32(in, what);
  return dims;
}

}  // namespace

ImageBatch load_idx_dataset(const fs::path& images_path, const fs::path& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw LoadError("cannot open " + images_path.string());
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw LoadError("cannot open " + labels_path.string());

  const auto idims = read_idx_header(img, images_path.string());
  const auto ldims = read_idx_header(lab, labels_path.string());
  if (idims.size() < 2 || idims.size() > 4) throw LoadError(images_path.string() + ": expected N x H [x W [x C]]");
  if (ldims.size() != 1) throw LoadError(labels_path.string() + ": expected a 1-D label file");
  if (idims[0] != ldims[0]) {
    throw LoadError("image count " + std::to_string(idims[0]) + " does not match label count " +
                    std::to_string(ldims[0]));
  }
  const int h = static_cast<int>(idims[1]);
  const int w = idims.size() > 2 ? static_cast<int>(idims[2]) : 1;
  const int c = idims.size() > 3 ? static_cast<int>(idims[3]) : 1;
  const std::size_t per_image = static_cast<std::size_t>(h) * w * c;

  ImageBatch batch;
  batch.images.reserve(idims[0]);
  std::vector<unsigned char> buf(per_image);
  for (std::uint32_t n = 0; n < idims[0]; ++n) {
    if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(per_image))) {
      throw LoadError(images_path.string() + ": truncated image data");
    }
    Tensor t(h, w, c);
    for (std::size_t k = 0; k < per_image; ++k) t.data[k] = static_cast<float>(buf[k]) / 255.0f;
    batch.images.push_back(std::move(t));
  }
  std::vector<unsigned char> labels(idims[0]);
  if (!lab.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(labels.size()))) {
    throw LoadError(labels_path.string() + ": truncated label data");
  }
  batch.labels.assign(labels.begin(), labels.end());
  return batch;
}

ImageBatch take_first(const ImageBatch& batch, std::size_t count) {
  if (count >= batch.size()) return batch;
  ImageBatch out;
  out.images.assign(batch.images.begin(), batch.images.begin() + static_cast<long>(count));
  out.labels.assign(batch.labels.begin(), batch.labels.begin() + static_cast<long>(count));
  return out;
}

Tensor apply_pool(const LayerSpec& s, const Tensor& in) {
  const int oh = (in.h - s.ky) / s.stride + 1;
  const int ow = (in.w - s.kx) / s.stride + 1;
  Tensor out(oh, ow, in.c);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      for (int ch = 0; ch < in.c; ++ch) {
        double acc = s.kind == LayerKind::maxpool ? -std::numeric_limits<double>::infinity() : 0.0;
        for (int dy = 0; dy < s.ky; ++dy) {
          for (int dx = 0; dx < s.kx; ++dx) {
            const double v = in.at(y * s.stride + dy, x * s.stride + dx, ch);
            acc = s.kind == LayerKind::maxpool ? std::max(acc, v) : acc + v;
          }
        }
        if (s.kind == LayerKind::avgpool) acc /= s.kx * s.ky;
        out.at(y, x, ch) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

Tensor apply_add(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  for (std::size_t k = 0; k < out.size(); ++k) out.data[k] += b.data[k];
  return out;
}

namespace {

void apply_activation(Activation act, Tensor& t) {
  if (act == Activation::relu) {
    for (auto& v : t.data) v = std::max(v, 0.0f);
  }
}

Tensor float_analog_layer(const FloatLayer& layer, const Tensor& in) {
  const LayerSpec& s = layer.spec;
  const std::size_t cols = layer.weights.cols();
  std::vector<double> acc(cols);
  const auto finish = [&](Tensor& out, int y, int x) {
    for (std::size_t j = 0; j < cols; ++j) {
      double v = acc[j] + (layer.bias.empty() ? 0.0 : layer.bias[j]);
      if (layer.batchnorm) {
        const auto& bn = *layer.batchnorm;
        v = (v - bn.mean[j]) / std::sqrt(static_cast<double>(bn.var[j]) + bn.eps) * bn.gamma[j] + bn.beta[j];
      }
      out.at(y, x, static_cast<int>(j)) = static_cast<float>(v);
    }
  };

  if (s.kind == LayerKind::dense) {
    Tensor out(1, 1, s.out_channels);
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t i = 0; i < in.size(); ++i) {
      const double xi = in.data[i];
      if (xi == 0.0) continue;
      const auto wrow = layer.weights.row(i);
      for (std::size_t j = 0; j < cols; ++j) acc[j] += xi * wrow[j];
    }
    finish(out, 0, 0);
    apply_activation(s.activation, out);
    return out;
  }

  const auto shape = conv_output_shape(s, in.h, in.w);
  Tensor out(shape[0], shape[1], s.out_channels);
  for (int oy = 0; oy < shape[0]; ++oy) {
    for (int ox = 0; ox < shape[1]; ++ox) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int ky = 0; ky < s.ky; ++ky) {
        const int iy = oy * s.stride - s.padding + ky;
        if (iy < 0 || iy >= in.h) continue;
        for (int kx = 0; kx < s.kx; ++kx) {
          const int ix = ox * s.stride - s.padding + kx;
          if (ix < 0 || ix >= in.w) continue;
          for (int ic = 0; ic < s.in_channels; ++ic) {
            const double xi = in.at(iy, ix, ic);
            const auto wrow = layer.weights.row(static_cast<std::size_t>((ky * s.kx + kx) * s.in_channels + ic));
            for (std::size_t j = 0; j < cols; ++j) acc[j] += xi * wrow[j];
          }
        }
      }
      finish(out, oy, ox);
    }
  }
  apply_activation(s.activation, out);
  return out;
}

}  // namespace

Tensor forward_float(const FloatNetwork& net, const Tensor& input, std::vector<Tensor>* layer_inputs) {
  std::vector<Tensor> outputs;
  outputs.reserve(net.layers.size());
  const Tensor* cur = &input;
  for (const auto& layer : net.layers) {
    Tensor next;
    switch (layer.spec.kind) {
      case LayerKind::conv2d:
      case LayerKind::dense:
        if (layer_inputs) layer_inputs->push_back(*cur);
        next = float_analog_layer(layer, *cur);
        break;
      case LayerKind::maxpool:
      case LayerKind::avgpool:
        next = apply_pool(layer.spec, *cur);
        break;
      case LayerKind::add: {
        const Tensor& other = layer.spec.residual_from < 0 ? input : outputs[layer.spec.residual_from];
        next = apply_add(*cur, other);
        apply_activation(layer.spec.activation, next);
        break;
      }
    }
    outputs.push_back(std::move(next));
    cur = &outputs.back();
  }
  return outputs.empty() ? input : outputs.back();
}

}  // namespace aimsim
