// src/train.cpp
//
// SPDX-License-Identifier: Apache-2.0

#include "w2lp/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "w2lp/charset.hpp"
#include "w2lp/ctc.hpp"
#include "w2lp/error.hpp"
#include "w2lp/metrics.hpp"

namespace w2lp::train {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

std::string_view NumericModeName(NumericMode mode) {
  return mode == NumericMode::kCheck ? "check" : "fast";
}

NumericMode ParseNumericMode(std::string_view text) {
  if (text == "fast") return NumericMode::kFast;
  if (text == "check") return NumericMode::kCheck;
  Fail(ErrorKind::kConfig, "numeric mode must be fast or check, got '" +
                               std::string(text) + "'");
}

void TrainConfig::Validate() const {
  auto bad = [](const std::string& msg) { Fail(ErrorKind::kConfig, msg); };
  if (!(learning_rate > 0.0)) bad("learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) bad("momentum must be in [0, 1)");
  if (!(larc_eta > 0.0)) bad("larc_eta must be > 0");
  if (!(keep_factor > 0.0 && keep_factor <= 1.0)) bad("keep_factor must be in (0, 1]");
  if (!(ratio.p_natural >= 0.0 && ratio.p_natural <= 1.0)) bad("ratio must be in [0, 1]");
  if (batch_size == 0) bad("batch_size must be >= 1");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
    bad("warmup_fraction must be in [0, 1)");
  }
  if (log_interval == 0) bad("log_interval must be >= 1");
  if (checkpoint_interval == 0 || checkpoint_interval % log_interval != 0) {
    bad("checkpoint_interval must be a positive multiple of log_interval");
  }
  augment.Validate();
}

double LarcScale(double w_norm, double g_norm, double lr, double eta) {
  if (!(lr > 0.0) || !(eta > 0.0)) {
    Fail(ErrorKind::kInvalidArgument, "larc needs lr > 0 and eta > 0");
  }
  const double ratio = eta * (w_norm + kLarcEpsilon) / (lr * (g_norm + kLarcEpsilon));
  return std::min(1.0, ratio);
}

template <typename T>
void SgdMomentumStep(std::span<T> params, std::span<const T> grads,
                     std::span<T> velocity, double lr, double momentum) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    Fail(ErrorKind::kInvalidArgument, "sgd step shape mismatch");
  }
  for (T g : grads) {
    if (!std::isfinite(g)) Fail(ErrorKind::kDivergence, "non-finite gradient");
  }
  const T mu = static_cast<T>(momentum);
  const T eta = static_cast<T>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = mu * velocity[i] + grads[i];
    params[i] -= eta * velocity[i];
  }
}

template void SgdMomentumStep<float>(std::span<float>, std::span<const float>,
                                     std::span<float>, double, double);
template void SgdMomentumStep<double>(std::span<double>, std::span<const double>,
                                      std::span<double>, double, double);

double LearningRateAt(const TrainConfig& cfg, std::size_t step) {
  const auto warm = static_cast<std::size_t>(
      std::floor(cfg.warmup_fraction * static_cast<double>(cfg.steps)));
  if (warm == 0 || step >= warm) return cfg.learning_rate;
  return cfg.learning_rate * static_cast<double>(step + 1) /
         static_cast<double>(warm);
}

std::string FormatMetricsRow(const MetricsRow& row) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%zu\t%.17g\t%.6f\t%.6f\t%zu", row.step,
                row.train_loss, row.dev_wer, row.dev_cer, row.skipped);
  return buf;
}

// ---------------------------------------------------------------------------
// Checkpoint file

const NamedTensor* Checkpoint::Find(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

namespace {

constexpr char kMagic[8] = {'W', '2', 'L', 'P', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  template <typename V>
  void Put(V v) {
    char b[sizeof(V)];
    std::memcpy(b, &v, sizeof(V));
    out_.append(b, sizeof(V));
  }
  void Bytes(std::string_view s) { out_.append(s); }
  std::string Take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  template <typename V>
  V Get(const char* what) {
    V v;
    std::memcpy(&v, Take(sizeof(V), what).data(), sizeof(V));
    return v;
  }
  std::string_view Take(std::size_t n, const char* what) {
    if (in_.size() - pos_ < n) {
      Fail(ErrorKind::kCheckpoint,
           std::string("checkpoint truncated while reading ") + what);
    }
    const auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

// Value of `key` in "key = value" text, last occurrence wins.
std::optional<std::string> ConfigValue(std::string_view text, std::string_view key) {
  std::optional<std::string> found;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    if (trim(line.substr(0, eq)) == key) found = trim(line.substr(eq + 1));
  }
  return found;
}

}  // namespace

NumericMode CheckpointMode(const Checkpoint& ckpt) {
  const auto mode = ConfigValue(ckpt.config_text, "train.mode");
  return mode ? ParseNumericMode(*mode) : NumericMode::kFast;
}

model::ModelConfig CheckpointModel(const Checkpoint& ckpt) {
  if (!ConfigValue(ckpt.config_text, "model.preproc")) {
    Fail(ErrorKind::kCheckpoint, "checkpoint config has no model description");
  }
  return model::ModelConfig::FromText(ckpt.config_text);
}

std::string SerializeCheckpoint(const Checkpoint& ckpt) {
  const bool wide = CheckpointMode(ckpt) == NumericMode::kCheck;
  Writer w;
  w.Bytes(std::string_view(kMagic, sizeof(kMagic)));
  w.Put<std::uint32_t>(ckpt.version);
  w.Put<std::uint64_t>(ckpt.step);
  w.Put<std::uint64_t>(ckpt.config_text.size());
  w.Bytes(ckpt.config_text);
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    if (t.name.size() > 0xffff || t.shape.size() > 0xff) {
      Fail(ErrorKind::kCheckpoint, "tensor name or rank too large: " + t.name);
    }
    if (NumElements(t.shape) != t.values.size()) {
      Fail(ErrorKind::kCheckpoint, "tensor " + t.name + " size does not match shape");
    }
    w.Put<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
    w.Bytes(t.name);
    w.Put<std::uint8_t>(static_cast<std::uint8_t>(t.shape.size()));
    for (std::size_t d : t.shape) w.Put<std::uint64_t>(d);
    for (double v : t.values) {
      if (wide) {
        w.Put<double>(v);
      } else {
        w.Put<float>(static_cast<float>(v));
      }
    }
  }
  w.Put<std::uint64_t>(ckpt.rng_state.size());
  for (std::uint64_t word : ckpt.rng_state) w.Put<std::uint64_t>(word);
  return w.Take();
}

Checkpoint DeserializeCheckpoint(std::string_view bytes) {
  if (bytes.size() < sizeof(kMagic) ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    Fail(ErrorKind::kFormat, "not a checkpoint: bad magic bytes");
  }
  Reader r(bytes.substr(sizeof(kMagic)));
  Checkpoint c;
  c.version = r.Get<std::uint32_t>("version");
  if (c.version != Checkpoint::kVersion) {
    Fail(ErrorKind::kCheckpoint, "unsupported checkpoint version " +
                                     std::to_string(c.version));
  }
  c.step = r.Get<std::uint64_t>("step");
  const auto config_len = r.Get<std::uint64_t>("config length");
  c.config_text = std::string(r.Take(config_len, "config"));
  const bool wide = CheckpointMode(c) == NumericMode::kCheck;
  const auto count = r.Get<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = r.Get<std::uint16_t>("tensor name length");
    t.name = std::string(r.Take(name_len, "tensor name"));
    const auto rank = r.Get<std::uint8_t>("tensor rank");
    for (std::uint8_t d = 0; d < rank; ++d) t.shape.push_back(r.Get<std::uint64_t>("dims"));
    const std::size_t n = NumElements(t.shape);
    const std::size_t width = wide ? sizeof(double) : sizeof(float);
    if (n > r.remaining() / width) {
      Fail(ErrorKind::kCheckpoint, "checkpoint truncated in tensor " + t.name);
    }
    t.values.resize(n);
    for (auto& v : t.values) {
      v = wide ? r.Get<double>("values") : static_cast<double>(r.Get<float>("values"));
    }
    c.tensors.push_back(std::move(t));
  }
  const auto words = r.Get<std::uint64_t>("rng word count");
  if (words > r.remaining() / sizeof(std::uint64_t)) {
    Fail(ErrorKind::kCheckpoint, "checkpoint truncated in rng state");
  }
  c.rng_state.resize(words);
  for (auto& word : c.rng_state) word = r.Get<std::uint64_t>("rng state");
  if (r.remaining() != 0) {
    Fail(ErrorKind::kCheckpoint, std::to_string(r.remaining()) +
                                     " trailing bytes after checkpoint");
  }
  return c;
}

void SaveCheckpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = SerializeCheckpoint(ckpt);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) Fail(ErrorKind::kIo, "cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) Fail(ErrorKind::kIo, "short write on " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kIo, "cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return DeserializeCheckpoint(ss.str());
}

namespace {

template <typename T>
NamedTensor ToNamed(std::string name, const Tensor<T>& t) {
  return {std::move(name), t.shape(), std::vector<double>(t.vec().begin(), t.vec().end())};
}

template <typename T>
void FromNamed(const NamedTensor& src, Tensor<T>& dst) {
  if (src.shape != dst.shape()) {
    Fail(ErrorKind::kCheckpoint, "tensor " + src.name + " has shape " +
                                     ShapeString(src.shape) + ", model expects " +
                                     ShapeString(dst.shape()));
  }
  std::transform(src.values.begin(), src.values.end(), dst.vec().begin(),
                 [](double v) { return static_cast<T>(v); });
}

const NamedTensor& Require(const Checkpoint& ckpt, const std::string& name) {
  const NamedTensor* t = ckpt.Find(name);
  if (!t) Fail(ErrorKind::kCheckpoint, "checkpoint is missing tensor " + name);
  return *t;
}

}  // namespace

template <typename T>
model::Network<T> NetworkFromCheckpoint(const Checkpoint& ckpt) {
  auto net = model::BuildModel<T>(CheckpointModel(ckpt), 0);
  for (auto& [name, tensor] : net.State()) FromNamed(Require(ckpt, name), *tensor);
  return net;
}

template model::Network<float> NetworkFromCheckpoint<float>(const Checkpoint&);
template model::Network<double> NetworkFromCheckpoint<double>(const Checkpoint&);

// ---------------------------------------------------------------------------
// Evaluation

template <typename T>
DevScore EvaluateGreedy(const model::Network<T>& net,
                        const std::vector<audio::FeatureMatrix>& features,
                        const std::vector<std::string>& references,
                        std::size_t batch_size) {
  if (features.size() != references.size() || features.empty()) {
    Fail(ErrorKind::kInvalidArgument, "evaluation needs matching, non-empty sets");
  }
  DevScore score;
  // Padding is masked inside the network, so its value is irrelevant here.
  const double log_floor = audio::FeatureConfig{}.log_floor;
  for (std::size_t start = 0; start < features.size(); start += batch_size) {
    const std::size_t end = std::min(features.size(), start + batch_size);
    std::vector<const audio::FeatureMatrix*> ptrs;
    std::vector<std::vector<LabelId>> labels;
    for (std::size_t i = start; i < end; ++i) {
      ptrs.push_back(&features[i]);
      labels.emplace_back();
    }
    const data::Batch batch = data::PadBatch(ptrs, labels, log_floor);
    const auto out = model::ModelInfer(net, batch.features.template Cast<T>(),
                                       batch.lengths);
    const std::size_t t_out = out.logprobs.dim(1), c = out.logprobs.dim(2);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      ctc::LogProbView<T> view{
          out.logprobs.span().subspan(b * t_out * c, out.out_lengths[b] * c),
          out.out_lengths[b], c};
      score.hypotheses.push_back(ctc::GreedyDecode(view));
    }
  }
  score.wer = metrics::Wer(references, score.hypotheses);
  score.cer = metrics::Cer(references, score.hypotheses);
  return score;
}

template DevScore EvaluateGreedy<float>(const model::Network<float>&,
                                        const std::vector<audio::FeatureMatrix>&,
                                        const std::vector<std::string>&, std::size_t);
template DevScore EvaluateGreedy<double>(const model::Network<double>&,
                                         const std::vector<audio::FeatureMatrix>&,
                                         const std::vector<std::string>&, std::size_t);

// ---------------------------------------------------------------------------
// Training loop

namespace {

std::string RunConfigText(const RunOptions& options, const model::ModelConfig& model_cfg,
                          const TrainConfig& cfg) {
  std::string text = options.config_text;
  if (!text.empty() && text.back() != '\n') text.push_back('\n');
  if (!ConfigValue(text, "model.preproc")) text += model_cfg.ToText();
  const auto mode = ConfigValue(text, "train.mode");
  if (!mode) {
    text += "train.mode = " + std::string(NumericModeName(cfg.mode)) + "\n";
  } else if (ParseNumericMode(*mode) != cfg.mode) {
    Fail(ErrorKind::kConfig, "config text numeric mode disagrees with the run");
  }
  return text;
}

template <typename T>
RunResult TrainImpl(const data::Manifest& natural, const data::Manifest& synthetic,
                    const data::Manifest& dev, const model::ModelConfig& model_cfg,
                    const TrainConfig& cfg, const audio::FeatureConfig& fcfg,
                    const RunOptions& options) {
  const std::string config_text = RunConfigText(options, model_cfg, cfg);
  const std::size_t total = options.stop_at ? std::min(options.stop_at, cfg.steps)
                                            : cfg.steps;

  model::Network<T> net;
  std::vector<Tensor<T>> velocity;
  data::MixSampler sampler(natural, synthetic, cfg.ratio, cfg.seed);
  std::size_t step = 0;
  if (options.resume) {
    const Checkpoint& ck = *options.resume;
    if (CheckpointMode(ck) != cfg.mode) {
      Fail(ErrorKind::kCheckpoint, "checkpoint numeric mode differs from the run");
    }
    net = NetworkFromCheckpoint<T>(ck);
    for (const auto& name : net.ParameterNames()) {
      const NamedTensor& v = Require(ck, name + ".v");
      Tensor<T> t(v.shape);
      FromNamed(v, t);
      velocity.push_back(std::move(t));
    }
    sampler.RestoreState(ck.rng_state);
    step = ck.step;
  } else {
    net = model::BuildModel<T>(model_cfg, cfg.seed);
    for (const auto* p : net.Parameters()) velocity.emplace_back(p->shape());
  }

  auto snapshot = [&]() {
    Checkpoint ck;
    ck.step = step;
    ck.config_text = config_text;
    for (const auto& [name, t] : std::as_const(net).State()) ck.tensors.push_back(ToNamed(name, *t));
    const auto names = net.ParameterNames();
    for (std::size_t i = 0; i < names.size(); ++i) {
      ck.tensors.push_back(ToNamed(names[i] + ".v", velocity[i]));
    }
    ck.rng_state = sampler.SaveState();
    return ck;
  };

  std::ofstream metrics_file;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    metrics_file.open(options.out_dir / "metrics.tsv",
                      options.resume ? std::ios::app : std::ios::trunc);
    if (!metrics_file) Fail(ErrorKind::kIo, "cannot write metrics log");
  }

  // Without augmentation every utterance featurizes the same way each time.
  std::map<std::pair<int, std::size_t>, audio::FeatureMatrix> cache;
  auto cached_features = [&](const data::Draw& d) -> const audio::FeatureMatrix& {
    const auto key = std::make_pair(static_cast<int>(d.pool), d.index);
    auto it = cache.find(key);
    if (it == cache.end()) {
      const auto wave = data::LoadWaveform(sampler.Resolve(d));
      it = cache.emplace(key, data::FeaturizeUtterance(wave, fcfg)).first;
    }
    return it->second;
  };

  std::vector<audio::FeatureMatrix> dev_features;
  std::vector<std::string> dev_refs;
  for (const auto& u : dev.entries) {
    dev_features.push_back(data::FeaturizeUtterance(data::LoadWaveform(u), fcfg));
    dev_refs.push_back(u.transcript);
  }

  RunResult result;
  double loss_sum = 0.0;
  std::size_t loss_count = 0, skipped = 0;
  const auto params_names = net.ParameterNames();

  while (step < total) {
    const std::size_t B = cfg.batch_size;
    std::vector<data::Draw> draws;
    std::vector<std::vector<LabelId>> labels;
    for (std::size_t i = 0; i < B; ++i) {
      draws.push_back(sampler.NextDraw());
      labels.push_back(Charset::Encode(sampler.Resolve(draws.back()).transcript));
    }
    data::Batch batch;
    if (cfg.augment.any_enabled()) {
      std::vector<data::Utterance> utts;
      std::vector<std::uint64_t> seeds;
      for (std::size_t i = 0; i < B; ++i) {
        utts.push_back(sampler.Resolve(draws[i]));
        seeds.push_back(cfg.seed ^ static_cast<std::uint64_t>(step * B + i));
      }
      batch = data::MakeBatch(utts, fcfg, cfg.augment, seeds);
    } else {
      std::vector<const audio::FeatureMatrix*> ptrs;
      for (const auto& d : draws) ptrs.push_back(&cached_features(d));
      batch = data::PadBatch(ptrs, labels, fcfg.log_floor);
    }

    std::mt19937_64 drop_rng(cfg.seed ^ (0x9E3779B97F4A7C15ULL * (step + 1)));
    model::ForwardOptions fo{model::Mode::kTrain, cfg.keep_factor, &drop_rng};
    auto fwd = model::ModelForward(net, batch.features.template Cast<T>(),
                                   batch.lengths, fo);
    const auto loss = ctc::CtcBatchLoss(fwd.logprobs, fwd.out_lengths, batch.labels);
    skipped += loss.skipped;

    if (loss.feasible > 0) {
      if (!std::isfinite(loss.mean_loss)) {
        Fail(ErrorKind::kDivergence,
             "non-finite loss at step " + std::to_string(step));
      }
      loss_sum += loss.mean_loss;
      ++loss_count;
      auto grads = model::ModelBackward(net, fwd.cache, loss.grad.template Cast<T>());
      const double lr = LearningRateAt(cfg, step);
      auto params = net.Parameters();
      for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<T>& p = *params[i];
        Tensor<T>& g = grads[i];
        UpdateRecord rec;
        rec.step = step;
        rec.lr = lr;
        rec.w_norm = L2Norm(std::as_const(p).span());
        rec.g_norm = L2Norm(std::as_const(g).span());
        if (!std::isfinite(rec.g_norm)) {
          Fail(ErrorKind::kDivergence, "non-finite gradient for " + params_names[i] +
                                           " at step " + std::to_string(step));
        }
        rec.scale = LarcScale(rec.w_norm, rec.g_norm, lr, cfg.larc_eta);
        if (rec.scale < 1.0) {
          const T s = static_cast<T>(rec.scale);
          for (auto& v : g.vec()) v *= s;
        }
        std::vector<T> before;
        if (options.on_update) before = p.vec();
        SgdMomentumStep<T>(p.span(), std::as_const(g).span(), velocity[i].span(),
                           lr, cfg.momentum);
        if (options.on_update) {
          rec.tensor = params_names[i];
          rec.clipped_g_norm = L2Norm(std::as_const(g).span());
          rec.velocity_norm = L2Norm(std::as_const(velocity[i]).span());
          double d2 = 0.0;
          for (std::size_t k = 0; k < before.size(); ++k) {
            const double d = static_cast<double>(p[k]) - static_cast<double>(before[k]);
            d2 += d * d;
          }
          rec.delta_norm = std::sqrt(d2);
          options.on_update(rec);
        }
      }
    }
    ++step;

    if (step % cfg.log_interval == 0 || step == cfg.steps) {
      MetricsRow row;
      row.step = step;
      row.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count)
                                  : std::numeric_limits<double>::quiet_NaN();
      row.skipped = skipped;
      if (!dev_features.empty()) {
        const auto score = EvaluateGreedy(std::as_const(net), dev_features, dev_refs);
        row.dev_wer = score.wer;
        row.dev_cer = score.cer;
      } else {
        row.dev_wer = row.dev_cer = std::numeric_limits<double>::quiet_NaN();
      }
      result.metrics.push_back(row);
      if (metrics_file.is_open()) metrics_file << FormatMetricsRow(row) << '\n' << std::flush;
      if (options.on_metrics) options.on_metrics(row);
      loss_sum = 0.0;
      loss_count = 0;
      skipped = 0;
    }
    if (!options.out_dir.empty() &&
        (step % cfg.checkpoint_interval == 0 || step == total)) {
      SaveCheckpoint(snapshot(), options.out_dir / "checkpoint.bin");
    }
  }

  result.checkpoint = snapshot();
  if (!options.out_dir.empty() && total == 0) {
    SaveCheckpoint(result.checkpoint, options.out_dir / "checkpoint.bin");
  }
  return result;
}

}  // namespace

RunResult TrainRun(const data::Manifest& natural, const data::Manifest& synthetic,
                   const data::Manifest& dev, const model::ModelConfig& model_cfg,
                   const TrainConfig& train_cfg, const audio::FeatureConfig& feature_cfg,
                   const RunOptions& options) {
  train_cfg.Validate();
  feature_cfg.Validate();
  model_cfg.Validate();
  if (model_cfg.mel_bins != feature_cfg.mel_bins) {
    Fail(ErrorKind::kConfig, "model mel_bins " + std::to_string(model_cfg.mel_bins) +
                                 " differs from feature mel_bins " +
                                 std::to_string(feature_cfg.mel_bins));
  }
  if (train_cfg.mode == NumericMode::kCheck) {
    return TrainImpl<double>(natural, synthetic, dev, model_cfg, train_cfg,
                             feature_cfg, options);
  }
  return TrainImpl<float>(natural, synthetic, dev, model_cfg, train_cfg,
                          feature_cfg, options);
}

}  // namespace w2lp::train
