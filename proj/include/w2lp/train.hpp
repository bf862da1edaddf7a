// include/w2lp/train.hpp
//
// SPDX-License-Identifier: Apache-2.0
//
// Training loop: mixed-pool sampling, CTC loss, layer-wise adaptive rate
// clipping (LARC) and SGD with momentum, plus the checkpoint file format.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "w2lp/audio.hpp"
#include "w2lp/augment.hpp"
#include "w2lp/dataset.hpp"
#include "w2lp/model.hpp"
#include "w2lp/tensor.hpp"

namespace w2lp::train {

// kFast trains in float; kCheck trains in double for bitwise reproducible,
// gradient-checkable runs.
enum class NumericMode { kFast, kCheck };
std::string_view NumericModeName(NumericMode mode);
NumericMode ParseNumericMode(std::string_view text);

struct TrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  double larc_eta = 0.02;
  double keep_factor = 1.0;
  data::MixRatio ratio{0.5};
  std::size_t batch_size = 8;
  std::size_t steps = 2000;
  std::uint64_t seed = 1;
  augment::AugmentConfig augment;
  NumericMode mode = NumericMode::kFast;
  // Linear warmup over this fraction of the run.
  double warmup_fraction = 0.05;
  std::size_t log_interval = 100;
  std::size_t checkpoint_interval = 500;

  void Validate() const;
};

inline constexpr double kLarcEpsilon = 1e-8;

// min(1, eta (w + eps) / (lr (g + eps))).
double LarcScale(double w_norm, double g_norm, double lr, double eta);

// v <- momentum v + g; p <- p - lr v. Throws kDivergence on a non-finite
// gradient before touching p or v.
template <typename T>
void SgdMomentumStep(std::span<T> params, std::span<const T> grads,
                     std::span<T> velocity, double lr, double momentum);

double LearningRateAt(const TrainConfig& cfg, std::size_t step);

// Per-tensor record of one applied update.
struct UpdateRecord {
  std::size_t step = 0;
  std::string tensor;
  double lr = 0.0;
  double w_norm = 0.0;
  double g_norm = 0.0;          // raw gradient
  double scale = 1.0;           // LARC factor
  double clipped_g_norm = 0.0;  // scale * g_norm
  double velocity_norm = 0.0;   // after the momentum update
  double delta_norm = 0.0;      // ||p_new - p_old||
};
using UpdateObserver = std::function<void(const UpdateRecord&)>;

struct MetricsRow {
  std::size_t step = 0;
  double train_loss = 0.0;
  double dev_wer = 0.0;
  double dev_cer = 0.0;
  std::size_t skipped = 0;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};
std::string FormatMetricsRow(const MetricsRow& row);

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  std::uint32_t version = kVersion;
  std::uint64_t step = 0;
  // Run configuration text; its "model.*" lines describe the network and its
  // "train.mode" line selects the stored value width (check mode: 64-bit).
  std::string config_text;
  std::vector<NamedTensor> tensors;  // parameters, running stats, then ".v"
  std::vector<std::uint64_t> rng_state;

  const NamedTensor* Find(std::string_view name) const;
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void SaveCheckpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint LoadCheckpoint(const std::filesystem::path& path);
std::string SerializeCheckpoint(const Checkpoint& ckpt);
Checkpoint DeserializeCheckpoint(std::string_view bytes);

NumericMode CheckpointMode(const Checkpoint& ckpt);
model::ModelConfig CheckpointModel(const Checkpoint& ckpt);

// Network weights and running statistics restored from a checkpoint.
template <typename T>
model::Network<T> NetworkFromCheckpoint(const Checkpoint& ckpt);

struct DevScore {
  double wer = 0.0;
  double cer = 0.0;
  std::vector<std::string> hypotheses;
};

// Greedy decoding of pre-featurized utterances in inference mode.
template <typename T>
DevScore EvaluateGreedy(const model::Network<T>& net,
                        const std::vector<audio::FeatureMatrix>& features,
                        const std::vector<std::string>& references,
                        std::size_t batch_size = 8);

struct RunOptions {
  // Checkpoint and metrics files go here; empty keeps everything in memory.
  std::filesystem::path out_dir;
  // Run configuration recorded in checkpoints; model lines are appended.
  std::string config_text;
  UpdateObserver on_update;
  std::function<void(const MetricsRow&)> on_metrics;
  // Continue from this state instead of a fresh initialization.
  std::optional<Checkpoint> resume;
  // Stop early after this many total steps (0 runs to cfg.steps).
  std::size_t stop_at = 0;
};

struct RunResult {
  Checkpoint checkpoint;
  std::vector<MetricsRow> metrics;
};

RunResult TrainRun(const data::Manifest& natural,
                   const data::Manifest& synthetic, const data::Manifest& dev,
                   const model::ModelConfig& model_cfg,
                   const TrainConfig& train_cfg,
                   const audio::FeatureConfig& feature_cfg,
                   const RunOptions& options = {});

}  // namespace w2lp::train
