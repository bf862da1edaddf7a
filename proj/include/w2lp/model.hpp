// include/w2lp/model.hpp
//
// SPDX-License-Identifier: Apache-2.0
//
// Fully convolutional CTC acoustic model: one pre-processing layer, B blocks
// of R repeated layers with a residual projection per block, and three
// post-processing layers, the last being the linear projection onto the
// charset. Each hidden layer is conv -> batchnorm -> ReLU -> dropout.

#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "w2lp/tensor.hpp"

namespace w2lp::model {

struct ConvLayerSpec {
  int channels = 32;
  int kernel = 11;
  int stride = 1;
  double dropout_keep = 1.0;
};

struct ConvBlockSpec {
  int repeats = 3;
  int channels = 256;
  int kernel = 11;
  int stride = 1;
  double dropout_keep = 1.0;
};

struct ModelConfig {
  std::string name = "custom";
  ConvLayerSpec preproc;
  std::vector<ConvBlockSpec> blocks;
  // The channel count of the last entry is ignored: it is the charset size.
  std::array<ConvLayerSpec, 3> postproc;
  int mel_bins = 64;
  int num_classes = 29;
  // 0 skips the check, otherwise must equal TotalLayers().
  int declared_layers = 0;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  int TotalLayers() const;
  int CumulativeStride() const;
  void Validate() const;

  // Flat "model.key = value" lines, parsed back by FromText.
  std::string ToText() const;
  static ModelConfig FromText(std::string_view text);
};

// "w2lp-19", "w2lp-24", "w2lp-34", "w2lp-44", "w2lp-54" and the desk-scale
// "w2lp-tiny" (2 blocks of 2 layers, 32 channels).
ModelConfig Preset(std::string_view name, int mel_bins = 64,
                   int num_classes = 29);
std::vector<std::string> PresetNames();

template <typename T>
struct ConvLayer {
  std::string name;
  int kernel = 1;
  int stride = 1;
  double dropout_keep = 1.0;
  bool has_bn = true;
  Tensor<T> weight;  // [c_out][kernel][c_in]
  Tensor<T> bias;    // [c_out]
  Tensor<T> gamma, beta, running_mean, running_var;

  std::size_t c_in() const { return weight.dim(2); }
  std::size_t c_out() const { return weight.dim(0); }
};

// 1-wide projection from a block's input, added before the block's last ReLU.
template <typename T>
struct ResidualProjection {
  std::string name;
  std::size_t first_layer = 0;
  std::size_t last_layer = 0;
  Tensor<T> weight;  // [c_out][1][c_in]
};

template <typename T>
struct Network {
  ModelConfig config;
  std::vector<ConvLayer<T>> layers;
  std::vector<ResidualProjection<T>> residuals;

  std::size_t num_layers() const { return layers.size(); }

  // Trainable tensors in a fixed order; gradients use the same order.
  std::vector<Tensor<T>*> Parameters();
  std::vector<const Tensor<T>*> Parameters() const;
  std::vector<std::string> ParameterNames() const;

  // Trainable tensors followed by the batchnorm running statistics.
  std::vector<std::pair<std::string, Tensor<T>*>> State();
  std::vector<std::pair<std::string, const Tensor<T>*>> State() const;

  template <typename U>
  Network<U> Cast() const;
};

template <typename T>
Network<T> BuildModel(const ModelConfig& cfg, std::uint64_t seed);

// Local keep probability scaled by the global keep factor, floored at 0.05.
double EffectiveKeep(double local_keep, double keep_factor);

enum class Mode { kTrain, kInfer };

template <typename T>
struct LayerCache {
  Tensor<T> input;     // masked layer input
  Tensor<T> xhat;      // normalized conv output (train mode)
  std::vector<T> inv_std;
  Tensor<T> pre_act;   // input to the ReLU
  Tensor<T> drop;      // per-element dropout scale, empty when keep == 1
  std::vector<std::size_t> in_lengths;
  std::vector<std::size_t> out_lengths;
};

template <typename T>
struct ForwardCache {
  bool valid = false;
  std::vector<LayerCache<T>> layers;
  Tensor<T> logprobs;
};

template <typename T>
struct ForwardResult {
  Tensor<T> logprobs;  // [batch][t_out][num_classes]
  std::vector<std::size_t> out_lengths;
  ForwardCache<T> cache;  // filled in train mode only
};

struct ForwardOptions {
  Mode mode = Mode::kInfer;
  // Multiplies every layer's dropout keep probability.
  double keep_factor = 1.0;
  // Dropout draws; required in train mode when any effective keep < 1.
  std::mt19937_64* rng = nullptr;
};

std::vector<std::size_t> OutputLengths(const ModelConfig& cfg,
                                       const std::vector<std::size_t>& lengths);

// Train mode updates the batchnorm running statistics of `net`.
template <typename T>
ForwardResult<T> ModelForward(Network<T>& net, const Tensor<T>& features,
                              const std::vector<std::size_t>& lengths,
                              const ForwardOptions& options);

// Inference with running statistics; does not touch `net`.
template <typename T>
ForwardResult<T> ModelInfer(const Network<T>& net, const Tensor<T>& features,
                            const std::vector<std::size_t>& lengths);

// `grad_logprobs` matches the forward logprobs; frames beyond an output length
// must carry zero gradient. Returns one tensor per Parameters() entry.
template <typename T>
std::vector<Tensor<T>> ModelBackward(const Network<T>& net,
                                     const ForwardCache<T>& cache,
                                     const Tensor<T>& grad_logprobs);

}  // namespace w2lp::model
