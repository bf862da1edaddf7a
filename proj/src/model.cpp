// src/model.cpp
//
// SPDX-License-Identifier: Apache-2.0

#include "w2lp/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "w2lp/error.hpp"
#include "w2lp/kernels.hpp"

namespace w2lp::model {

double EffectiveKeep(double local_keep, double keep_factor) {
  if (!(local_keep > 0.0 && local_keep <= 1.0) ||
      !(keep_factor > 0.0 && keep_factor <= 1.0)) {
    Fail(ErrorKind::kInvalidArgument, "keep probabilities must be in (0, 1]");
  }
  return std::max(0.05, local_keep * keep_factor);
}

int ModelConfig::TotalLayers() const {
  int total = 1 + 3;
  for (const auto& b : blocks) total += b.repeats;
  return total;
}

int ModelConfig::CumulativeStride() const {
  int stride = preproc.stride;
  for (const auto& b : blocks) stride *= b.stride;
  for (const auto& p : postproc) stride *= p.stride;
  return stride;
}

namespace {

void CheckLayer(const std::string& where, int channels, int kernel, int stride,
                double keep, bool check_channels = true) {
  auto bad = [&](const std::string& msg) {
    Fail(ErrorKind::kConfig, "model " + where + ": " + msg);
  };
  if (check_channels && channels < 1) bad("channels must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) bad("kernel width must be odd");
  if (stride < 1) bad("stride must be >= 1");
  if (!(keep > 0.0 && keep <= 1.0)) bad("dropout keep must be in (0, 1]");
}

}  // namespace

void ModelConfig::Validate() const {
  CheckLayer("preproc", preproc.channels, preproc.kernel, preproc.stride,
             preproc.dropout_keep);
  if (blocks.empty()) Fail(ErrorKind::kConfig, "model needs at least one block");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    if (b.repeats < 1) {
      Fail(ErrorKind::kConfig,
           "model block " + std::to_string(i) + ": repeats must be >= 1");
    }
    CheckLayer("block " + std::to_string(i), b.channels, b.kernel, b.stride,
               b.dropout_keep);
  }
  for (int i = 0; i < 3; ++i) {
    CheckLayer("postproc " + std::to_string(i), postproc[i].channels,
               postproc[i].kernel, postproc[i].stride, postproc[i].dropout_keep,
               i < 2);
  }
  if (mel_bins < 1 || num_classes < 2) {
    Fail(ErrorKind::kConfig, "model needs mel_bins >= 1 and num_classes >= 2");
  }
  if (declared_layers != 0 && declared_layers != TotalLayers()) {
    Fail(ErrorKind::kConfig,
         "model '" + name + "' declares " + std::to_string(declared_layers) +
             " layers but its blocks add up to " +
             std::to_string(TotalLayers()));
  }
  if (!(bn_eps >= 0.0) || !(bn_momentum >= 0.0 && bn_momentum <= 1.0)) {
    Fail(ErrorKind::kConfig, "bad batchnorm momentum/eps");
  }
}

namespace {

std::string LayerText(int channels, int kernel, int stride, double keep) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.17g", channels, kernel, stride, keep);
  return buf;
}

std::vector<double> ParseNumbers(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      Fail(ErrorKind::kConfig, "bad number in " + key + ": '" + item + "'");
    }
  }
  return out;
}

}  // namespace

std::string ModelConfig::ToText() const {
  std::ostringstream out;
  char buf[64];
  out << "model.name = " << name << '\n';
  out << "model.preproc = "
      << LayerText(preproc.channels, preproc.kernel, preproc.stride,
                   preproc.dropout_keep)
      << '\n';
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    out << "model.block." << i << " = " << b.repeats << ','
        << LayerText(b.channels, b.kernel, b.stride, b.dropout_keep) << '\n';
  }
  for (int i = 0; i < 3; ++i) {
    const auto& p = postproc[i];
    out << "model.postproc." << i << " = "
        << LayerText(p.channels, p.kernel, p.stride, p.dropout_keep) << '\n';
  }
  out << "model.mel_bins = " << mel_bins << '\n';
  out << "model.num_classes = " << num_classes << '\n';
  std::snprintf(buf, sizeof(buf), "%.17g", bn_momentum);
  out << "model.bn_momentum = " << buf << '\n';
  std::snprintf(buf, sizeof(buf), "%.17g", bn_eps);
  out << "model.bn_eps = " << buf << '\n';
  return out.str();
}

ModelConfig ModelConfig::FromText(std::string_view text) {
  ModelConfig cfg;
  std::map<std::size_t, ConvBlockSpec> blocks;
  std::istringstream in{std::string(text)};
  std::string line;
  auto layer = [](const std::string& key, const std::vector<double>& v,
                  std::size_t offset) {
    if (v.size() != offset + 4) {
      Fail(ErrorKind::kConfig, key + ": expected " + std::to_string(offset + 4) +
                                   " comma-separated values");
    }
    return ConvLayerSpec{static_cast<int>(v[offset]),
                         static_cast<int>(v[offset + 1]),
                         static_cast<int>(v[offset + 2]), v[offset + 3]};
  };
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.rfind("model.", 0) != 0) continue;
    if (key == "model.name") {
      cfg.name = value;
    } else if (key == "model.preproc") {
      cfg.preproc = layer(key, ParseNumbers(key, value), 0);
    } else if (key.rfind("model.block.", 0) == 0) {
      const auto v = ParseNumbers(key, value);
      const auto l = layer(key, v, 1);
      const std::size_t idx = std::stoul(key.substr(12));
      blocks[idx] = ConvBlockSpec{static_cast<int>(v[0]), l.channels, l.kernel,
                                  l.stride, l.dropout_keep};
    } else if (key.rfind("model.postproc.", 0) == 0) {
      const std::size_t idx = std::stoul(key.substr(15));
      if (idx > 2) Fail(ErrorKind::kConfig, "postproc index out of range: " + key);
      cfg.postproc[idx] = layer(key, ParseNumbers(key, value), 0);
    } else if (key == "model.mel_bins") {
      cfg.mel_bins = static_cast<int>(ParseNumbers(key, value).at(0));
    } else if (key == "model.num_classes") {
      cfg.num_classes = static_cast<int>(ParseNumbers(key, value).at(0));
    } else if (key == "model.bn_momentum") {
      cfg.bn_momentum = ParseNumbers(key, value).at(0);
    } else if (key == "model.bn_eps") {
      cfg.bn_eps = ParseNumbers(key, value).at(0);
    } else {
      Fail(ErrorKind::kConfig, "unknown model key '" + key + "'");
    }
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (!blocks.count(i)) {
      Fail(ErrorKind::kConfig, "model block " + std::to_string(i) + " missing");
    }
    cfg.blocks.push_back(blocks[i]);
  }
  cfg.Validate();
  return cfg;
}

std::vector<std::string> PresetNames() {
  return {"w2lp-19", "w2lp-24", "w2lp-34", "w2lp-44", "w2lp-54", "w2lp-tiny"};
}

ModelConfig Preset(std::string_view name, int mel_bins, int num_classes) {
  ModelConfig cfg;
  cfg.name = std::string(name);
  cfg.mel_bins = mel_bins;
  cfg.num_classes = num_classes;

  if (name == "w2lp-tiny") {
    cfg.preproc = {32, 7, 2, 0.9};
    cfg.blocks = {{2, 32, 5, 1, 0.9}, {2, 32, 5, 1, 0.9}};
    cfg.postproc = {ConvLayerSpec{64, 5, 1, 0.9}, ConvLayerSpec{64, 1, 1, 0.9},
                    ConvLayerSpec{num_classes, 1, 1, 1.0}};
    cfg.declared_layers = 8;
    cfg.Validate();
    return cfg;
  }

  int num_blocks = 0, repeats = 0;
  if (name == "w2lp-19") {
    num_blocks = 5, repeats = 3;
  } else if (name == "w2lp-24") {
    num_blocks = 5, repeats = 4;
  } else if (name == "w2lp-34") {
    num_blocks = 10, repeats = 3;
  } else if (name == "w2lp-44") {
    num_blocks = 10, repeats = 4;
  } else if (name == "w2lp-54") {
    num_blocks = 10, repeats = 5;
  } else {
    Fail(ErrorKind::kConfig, "unknown model preset '" + std::string(name) + "'");
  }
  static constexpr int kKernels[5] = {11, 13, 17, 21, 25};
  cfg.preproc = {256, 11, 2, 0.8};
  for (int b = 0; b < num_blocks; ++b) {
    // Kernel widths widen over five stages; ten-block models spend two
    // blocks per stage.
    const int stage = b * 5 / num_blocks;
    cfg.blocks.push_back({repeats, 256, kKernels[stage], 1, 0.8 - 0.025 * stage});
  }
  cfg.postproc = {ConvLayerSpec{512, 29, 1, 0.7}, ConvLayerSpec{1024, 1, 1, 0.7},
                  ConvLayerSpec{num_classes, 1, 1, 1.0}};
  cfg.declared_layers = 1 + num_blocks * repeats + 3;
  cfg.Validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Network

template <typename T>
std::vector<Tensor<T>*> Network<T>::Parameters() {
  std::vector<Tensor<T>*> out;
  for (auto& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
    if (l.has_bn) {
      out.push_back(&l.gamma);
      out.push_back(&l.beta);
    }
  }
  for (auto& r : residuals) out.push_back(&r.weight);
  return out;
}

template <typename T>
std::vector<const Tensor<T>*> Network<T>::Parameters() const {
  auto params = const_cast<Network<T>*>(this)->Parameters();
  return {params.begin(), params.end()};
}

template <typename T>
std::vector<std::string> Network<T>::ParameterNames() const {
  std::vector<std::string> out;
  for (const auto& l : layers) {
    out.push_back(l.name + ".weight");
    out.push_back(l.name + ".bias");
    if (l.has_bn) {
      out.push_back(l.name + ".gamma");
      out.push_back(l.name + ".beta");
    }
  }
  for (const auto& r : residuals) out.push_back(r.name + ".weight");
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> Network<T>::State() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  const auto names = ParameterNames();
  const auto params = Parameters();
  for (std::size_t i = 0; i < params.size(); ++i) out.emplace_back(names[i], params[i]);
  for (auto& l : layers) {
    if (!l.has_bn) continue;
    out.emplace_back(l.name + ".running_mean", &l.running_mean);
    out.emplace_back(l.name + ".running_var", &l.running_var);
  }
  return out;
}

template <typename T>
std::vector<std::pair<std::string, const Tensor<T>*>> Network<T>::State() const {
  auto state = const_cast<Network<T>*>(this)->State();
  return {state.begin(), state.end()};
}

template <typename T>
template <typename U>
Network<U> Network<T>::Cast() const {
  Network<U> out;
  out.config = config;
  for (const auto& l : layers) {
    ConvLayer<U> c;
    c.name = l.name;
    c.kernel = l.kernel;
    c.stride = l.stride;
    c.dropout_keep = l.dropout_keep;
    c.has_bn = l.has_bn;
    c.weight = l.weight.template Cast<U>();
    c.bias = l.bias.template Cast<U>();
    c.gamma = l.gamma.template Cast<U>();
    c.beta = l.beta.template Cast<U>();
    c.running_mean = l.running_mean.template Cast<U>();
    c.running_var = l.running_var.template Cast<U>();
    out.layers.push_back(std::move(c));
  }
  for (const auto& r : residuals) {
    out.residuals.push_back(
        {r.name, r.first_layer, r.last_layer, r.weight.template Cast<U>()});
  }
  return out;
}

namespace {

template <typename T>
Tensor<T> GlorotUniform(std::size_t c_out, std::size_t kernel, std::size_t c_in,
                        std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(kernel * (c_in + c_out)));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor<T> w({c_out, kernel, c_in});
  for (auto& v : w.vec()) v = static_cast<T>(dist(rng));
  return w;
}

template <typename T>
ConvLayer<T> MakeLayer(std::string name, std::size_t c_in, std::size_t c_out,
                       int kernel, int stride, double keep, bool has_bn,
                       std::mt19937_64& rng) {
  ConvLayer<T> l;
  l.name = std::move(name);
  l.kernel = kernel;
  l.stride = stride;
  l.dropout_keep = keep;
  l.has_bn = has_bn;
  l.weight = GlorotUniform<T>(c_out, static_cast<std::size_t>(kernel), c_in, rng);
  l.bias = Tensor<T>({c_out}, T(0));
  if (has_bn) {
    l.gamma = Tensor<T>({c_out}, T(1));
    l.beta = Tensor<T>({c_out}, T(0));
    l.running_mean = Tensor<T>({c_out}, T(0));
    l.running_var = Tensor<T>({c_out}, T(1));
  }
  return l;
}

}  // namespace

template <typename T>
Network<T> BuildModel(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.Validate();
  std::mt19937_64 rng(seed);
  Network<T> net;
  net.config = cfg;
  std::size_t c = static_cast<std::size_t>(cfg.mel_bins);
  const auto& pre = cfg.preproc;
  net.layers.push_back(MakeLayer<T>("preproc", c, pre.channels, pre.kernel,
                                    pre.stride, pre.dropout_keep, true, rng));
  c = pre.channels;
  for (std::size_t b = 0; b < cfg.blocks.size(); ++b) {
    const auto& blk = cfg.blocks[b];
    const std::size_t block_in = c;
    const std::size_t first = net.layers.size();
    for (int r = 0; r < blk.repeats; ++r) {
      net.layers.push_back(MakeLayer<T>(
          "block" + std::to_string(b) + ".layer" + std::to_string(r), c,
          blk.channels, blk.kernel, r == 0 ? blk.stride : 1, blk.dropout_keep,
          true, rng));
      c = blk.channels;
    }
    ResidualProjection<T> proj;
    proj.name = "block" + std::to_string(b) + ".residual";
    proj.first_layer = first;
    proj.last_layer = net.layers.size() - 1;
    proj.weight = GlorotUniform<T>(c, 1, block_in, rng);
    net.residuals.push_back(std::move(proj));
  }
  for (int p = 0; p < 3; ++p) {
    const auto& spec = cfg.postproc[p];
    const bool last = p == 2;
    const std::size_t c_out = last ? static_cast<std::size_t>(cfg.num_classes)
                                   : static_cast<std::size_t>(spec.channels);
    net.layers.push_back(MakeLayer<T>("postproc" + std::to_string(p), c, c_out,
                                      spec.kernel, spec.stride,
                                      last ? 1.0 : spec.dropout_keep, !last, rng));
    c = c_out;
  }
  if (static_cast<int>(net.layers.size()) != cfg.TotalLayers()) {
    Fail(ErrorKind::kConfig, "built layer count disagrees with config");
  }
  return net;
}

std::vector<std::size_t> OutputLengths(const ModelConfig& cfg,
                                       const std::vector<std::size_t>& lengths) {
  std::vector<int> strides{cfg.preproc.stride};
  for (const auto& b : cfg.blocks) {
    strides.push_back(b.stride);
    for (int r = 1; r < b.repeats; ++r) strides.push_back(1);
  }
  for (const auto& p : cfg.postproc) strides.push_back(p.stride);
  std::vector<std::size_t> out = lengths;
  for (int s : strides) {
    for (auto& l : out) l = (l + s - 1) / s;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

template <typename T>
void MaskFrames(Tensor<T>& x, const std::vector<std::size_t>& lengths) {
  const std::size_t frames = x.dim(1), ch = x.dim(2);
  for (std::size_t b = 0; b < x.dim(0); ++b) {
    if (lengths[b] >= frames) continue;
    std::fill(x.data() + (b * frames + lengths[b]) * ch,
              x.data() + (b + 1) * frames * ch, T(0));
  }
}

std::vector<std::size_t> StrideLengths(const std::vector<std::size_t>& lengths,
                                       int stride) {
  std::vector<std::size_t> out = lengths;
  for (auto& l : out) l = (l + stride - 1) / stride;
  return out;
}

template <typename T>
kernels::ConvShape ConvShapeFor(const Tensor<T>& x, std::size_t c_out,
                                int kernel, int stride) {
  kernels::ConvShape s;
  s.batch = x.dim(0);
  s.time_in = x.dim(1);
  s.c_in = x.dim(2);
  s.c_out = c_out;
  s.kernel = static_cast<std::size_t>(kernel);
  s.stride = static_cast<std::size_t>(stride);
  return s;
}

template <typename T>
void LogSoftmaxRows(const Tensor<T>& z, Tensor<T>& out) {
  const std::size_t c = z.dim(2);
  const std::size_t rows = z.size() / c;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* zr = z.data() + r * c;
    T* o = out.data() + r * c;
    const T m = *std::max_element(zr, zr + c);
    double sum = 0.0;
    for (std::size_t k = 0; k < c; ++k) sum += std::exp(static_cast<double>(zr[k] - m));
    const T lse = m + static_cast<T>(std::log(sum));
    for (std::size_t k = 0; k < c; ++k) o[k] = zr[k] - lse;
  }
}

// Index of a layer's first trainable tensor within Parameters().
template <typename T>
std::vector<std::size_t> ParamOffsets(const Network<T>& net) {
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& l : net.layers) {
    offsets.push_back(off);
    off += l.has_bn ? 4 : 2;
  }
  offsets.push_back(off);  // residual weights start here
  return offsets;
}

template <typename T>
ForwardResult<T> RunForward(const Network<T>& net, Network<T>* stats,
                            const Tensor<T>& features,
                            const std::vector<std::size_t>& lengths,
                            const ForwardOptions& opt) {
  const bool train = opt.mode == Mode::kTrain;
  const auto& cfg = net.config;
  if (features.rank() != 3 || features.dim(2) != static_cast<std::size_t>(cfg.mel_bins)) {
    Fail(ErrorKind::kInvalidArgument,
         "features must be [batch][time][" + std::to_string(cfg.mel_bins) +
             "], got " + ShapeString(features.shape()));
  }
  if (lengths.size() != features.dim(0)) {
    Fail(ErrorKind::kInvalidArgument, "one length per batch item required");
  }
  for (auto l : lengths) {
    if (l == 0 || l > features.dim(1)) {
      Fail(ErrorKind::kInvalidArgument, "utterance length out of range");
    }
  }

  std::vector<int> first_of(net.layers.size(), -1), last_of(net.layers.size(), -1);
  for (std::size_t r = 0; r < net.residuals.size(); ++r) {
    first_of[net.residuals[r].first_layer] = static_cast<int>(r);
    last_of[net.residuals[r].last_layer] = static_cast<int>(r);
  }

  ForwardResult<T> result;
  auto& cache = result.cache;
  Tensor<T> x = features;
  MaskFrames(x, lengths);
  std::vector<std::size_t> len = lengths;
  Tensor<T> block_input;
  std::vector<std::size_t> block_len;
  const T eps = static_cast<T>(cfg.bn_eps);

  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const auto& layer = net.layers[li];
    if (first_of[li] >= 0) {
      block_input = x;
      block_len = len;
    }
    const auto shape = ConvShapeFor(x, layer.c_out(), layer.kernel, layer.stride);
    if (shape.c_in != layer.c_in()) {
      Fail(ErrorKind::kInvalidArgument, "layer " + layer.name + ": channel mismatch");
    }
    Tensor<T> z({shape.batch, shape.time_out(), shape.c_out});
    kernels::parallel::Conv1dForward(shape, x.data(), layer.weight.data(),
                                     layer.bias.data(), z.data());
    const auto out_len = StrideLengths(len, layer.stride);

    LayerCache<T> lc;
    if (train) {
      lc.input = x;
      lc.in_lengths = len;
      lc.out_lengths = out_len;
    }

    if (!layer.has_bn) {
      // Final projection onto the charset.
      result.logprobs = Tensor<T>(z.shape());
      LogSoftmaxRows(z, result.logprobs);
      result.out_lengths = out_len;
      if (train) cache.layers.push_back(std::move(lc));
      break;
    }

    const kernels::BatchNormShape bs{z.dim(0), z.dim(1), z.dim(2)};
    Tensor<T> y(z.shape());
    if (train) {
      std::size_t count = 0;
      for (auto l : out_len) count += l;
      if (count < 2) {
        Fail(ErrorKind::kInvalidArgument,
             "batchnorm in train mode needs >= 2 frames per channel");
      }
      lc.xhat = Tensor<T>(z.shape());
      auto saved = kernels::parallel::BatchNormTrainForward(
          bs, out_len, z.data(), layer.gamma.data(), layer.beta.data(), eps,
          lc.xhat.data(), y.data());
      if (stats) {
        auto& sl = stats->layers[li];
        const T m = static_cast<T>(cfg.bn_momentum);
        for (std::size_t c = 0; c < bs.channels; ++c) {
          const T var = T(1) / (saved.inv_std[c] * saved.inv_std[c]) - eps;
          sl.running_mean[c] = (T(1) - m) * sl.running_mean[c] + m * saved.mean[c];
          sl.running_var[c] =
              (T(1) - m) * sl.running_var[c] + m * std::max(var, T(0));
        }
      }
      lc.inv_std = std::move(saved.inv_std);
    } else {
      for (std::size_t b = 0; b < bs.batch; ++b) {
        for (std::size_t t = 0; t < bs.time; ++t) {
          const std::size_t row = (b * bs.time + t) * bs.channels;
          if (t >= out_len[b]) {
            std::fill(y.data() + row, y.data() + row + bs.channels, T(0));
            continue;
          }
          for (std::size_t c = 0; c < bs.channels; ++c) {
            const T inv = T(1) / std::sqrt(layer.running_var[c] + eps);
            y[row + c] = layer.gamma[c] * (z[row + c] - layer.running_mean[c]) * inv +
                         layer.beta[c];
          }
        }
      }
    }

    if (last_of[li] >= 0) {
      const auto& proj = net.residuals[last_of[li]];
      int block_stride = 1;
      for (std::size_t k = proj.first_layer; k <= proj.last_layer; ++k) {
        block_stride *= net.layers[k].stride;
      }
      const auto ps = ConvShapeFor(block_input, proj.weight.dim(0), 1, block_stride);
      Tensor<T> r({ps.batch, ps.time_out(), ps.c_out});
      kernels::parallel::Conv1dForward(ps, block_input.data(), proj.weight.data(),
                                       static_cast<const T*>(nullptr), r.data());
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += r[i];
    }

    Tensor<T> a(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i) a[i] = y[i] > T(0) ? y[i] : T(0);
    const double keep = EffectiveKeep(layer.dropout_keep, opt.keep_factor);
    if (train && keep < 1.0) {
      if (!opt.rng) Fail(ErrorKind::kInvalidArgument, "dropout needs a generator");
      lc.drop = Tensor<T>(a.shape());
      std::bernoulli_distribution coin(keep);
      const T scale = static_cast<T>(1.0 / keep);
      for (std::size_t i = 0; i < a.size(); ++i) {
        lc.drop[i] = coin(*opt.rng) ? scale : T(0);
        a[i] *= lc.drop[i];
      }
    }
    MaskFrames(a, out_len);
    if (train) {
      lc.pre_act = std::move(y);
      cache.layers.push_back(std::move(lc));
    }
    x = std::move(a);
    len = out_len;
  }

  for (const auto& v : result.logprobs.vec()) {
    if (!std::isfinite(v)) {
      Fail(ErrorKind::kDivergence, "non-finite activation in forward pass");
    }
  }
  if (train) {
    cache.logprobs = result.logprobs;
    cache.valid = true;
  }
  return result;
}

}  // namespace

template <typename T>
ForwardResult<T> ModelForward(Network<T>& net, const Tensor<T>& features,
                              const std::vector<std::size_t>& lengths,
                              const ForwardOptions& options) {
  return RunForward(net, options.mode == Mode::kTrain ? &net : nullptr,
                    features, lengths, options);
}

template <typename T>
ForwardResult<T> ModelInfer(const Network<T>& net, const Tensor<T>& features,
                            const std::vector<std::size_t>& lengths) {
  return RunForward<T>(net, nullptr, features, lengths, ForwardOptions{});
}

template <typename T>
std::vector<Tensor<T>> ModelBackward(const Network<T>& net,
                                     const ForwardCache<T>& cache,
                                     const Tensor<T>& grad_logprobs) {
  if (!cache.valid || cache.layers.size() != net.layers.size()) {
    Fail(ErrorKind::kInvalidArgument,
         "backward pass requires a preceding train-mode forward pass");
  }
  if (grad_logprobs.shape() != cache.logprobs.shape()) {
    Fail(ErrorKind::kInvalidArgument,
         "gradient shape " + ShapeString(grad_logprobs.shape()) +
             " does not match logprobs " + ShapeString(cache.logprobs.shape()));
  }

  std::vector<Tensor<T>> grads;
  for (const auto* p : net.Parameters()) grads.emplace_back(p->shape(), T(0));
  const auto offsets = ParamOffsets(net);

  std::vector<int> first_of(net.layers.size(), -1), last_of(net.layers.size(), -1);
  for (std::size_t r = 0; r < net.residuals.size(); ++r) {
    first_of[net.residuals[r].first_layer] = static_cast<int>(r);
    last_of[net.residuals[r].last_layer] = static_cast<int>(r);
  }
  std::vector<Tensor<T>> block_grad(net.residuals.size());

  // Log-softmax: dz = g - softmax * sum_c g.
  const std::size_t classes = grad_logprobs.dim(2);
  Tensor<T> d(grad_logprobs.shape());
  for (std::size_t r = 0; r < d.size() / classes; ++r) {
    const T* g = grad_logprobs.data() + r * classes;
    const T* lp = cache.logprobs.data() + r * classes;
    T sum = 0;
    for (std::size_t c = 0; c < classes; ++c) sum += g[c];
    for (std::size_t c = 0; c < classes; ++c) {
      d[r * classes + c] = g[c] - std::exp(lp[c]) * sum;
    }
  }

  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const auto& layer = net.layers[li];
    const auto& lc = cache.layers[li];
    const std::size_t off = offsets[li];

    if (layer.has_bn) {
      if (!lc.drop.empty()) {
        for (std::size_t i = 0; i < d.size(); ++i) d[i] *= lc.drop[i];
      }
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (!(lc.pre_act[i] > T(0))) d[i] = T(0);
      }
      MaskFrames(d, lc.out_lengths);

      if (last_of[li] >= 0) {
        const int r = last_of[li];
        const auto& proj = net.residuals[r];
        const auto& bin = cache.layers[proj.first_layer];
        int block_stride = 1;
        for (std::size_t k = proj.first_layer; k <= proj.last_layer; ++k) {
          block_stride *= net.layers[k].stride;
        }
        const auto ps = ConvShapeFor(bin.input, proj.weight.dim(0), 1, block_stride);
        std::vector<T> unused_bias(ps.c_out);
        kernels::parallel::Conv1dBackwardWeight(ps, bin.input.data(), d.data(),
                                                grads[offsets.back() + r].data(),
                                                unused_bias.data());
        block_grad[r] = Tensor<T>(bin.input.shape(), T(0));
        kernels::parallel::Conv1dBackwardInput(ps, d.data(), proj.weight.data(),
                                               block_grad[r].data());
      }

      const kernels::BatchNormShape bs{d.dim(0), d.dim(1), d.dim(2)};
      Tensor<T> dz(d.shape());
      kernels::BatchNormSaved<T> saved{{}, lc.inv_std};
      kernels::parallel::BatchNormBackward(bs, lc.out_lengths, d.data(),
                                           lc.xhat.data(), layer.gamma.data(),
                                           saved, dz.data(), grads[off + 2].data(),
                                           grads[off + 3].data());
      d = std::move(dz);
    }

    const auto shape = ConvShapeFor(lc.input, layer.c_out(), layer.kernel, layer.stride);
    kernels::parallel::Conv1dBackwardWeight(shape, lc.input.data(), d.data(),
                                            grads[off].data(), grads[off + 1].data());
    if (li == 0) break;
    Tensor<T> dx(lc.input.shape(), T(0));
    kernels::parallel::Conv1dBackwardInput(shape, d.data(), layer.weight.data(),
                                           dx.data());
    MaskFrames(dx, lc.in_lengths);
    if (first_of[li] >= 0) {
      const auto& bg = block_grad[first_of[li]];
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += bg[i];
    }
    d = std::move(dx);
  }
  return grads;
}

template struct Network<float>;
template struct Network<double>;
template Network<double> Network<float>::Cast<double>() const;
template Network<float> Network<double>::Cast<float>() const;
template Network<float> Network<float>::Cast<float>() const;
template Network<double> Network<double>::Cast<double>() const;

#define W2LP_INSTANTIATE(T)                                                    \
  template Network<T> BuildModel<T>(const ModelConfig&, std::uint64_t);        \
  template ForwardResult<T> ModelForward<T>(Network<T>&, const Tensor<T>&,     \
                                            const std::vector<std::size_t>&,   \
                                            const ForwardOptions&);            \
  template ForwardResult<T> ModelInfer<T>(const Network<T>&, const Tensor<T>&, \
                                          const std::vector<std::size_t>&);    \
  template std::vector<Tensor<T>> ModelBackward<T>(                            \
      const Network<T>&, const ForwardCache<T>&, const Tensor<T>&);

W2LP_INSTANTIATE(float)
W2LP_INSTANTIATE(double)
#undef W2LP_INSTANTIATE

}  // namespace w2lp::model
