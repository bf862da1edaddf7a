// tests/unit/test_train.cpp
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "test_util.hpp"
#include "w2lp/synth.hpp"
#include "w2lp/train.hpp"

namespace w2lp::train {
namespace {

using w2lp::testing::ReadFile;
using w2lp::testing::TempDir;
using w2lp::testing::WriteFile;

model::ModelConfig SmallModel() {
  model::ModelConfig cfg;
  cfg.mel_bins = 64;
  cfg.preproc = {8, 5, 2, 0.9};
  cfg.blocks = {{2, 8, 3, 1, 0.9}};
  cfg.postproc = {model::ConvLayerSpec{12, 3, 1, 0.9}, model::ConvLayerSpec{12, 1, 1, 0.9},
                  model::ConvLayerSpec{29, 1, 1, 1.0}};
  return cfg;
}

TrainConfig SmallTrain(NumericMode mode) {
  TrainConfig cfg;
  cfg.batch_size = 3;
  cfg.steps = 12;
  cfg.log_interval = 4;
  cfg.checkpoint_interval = 8;
  cfg.mode = mode;
  cfg.seed = 7;
  return cfg;
}

// A few synthesized utterances shared by the tests in this file.
class TrainTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir();
    synth::SynthRequest req;
    req.transcripts = {"the cat", "a dog", "red sun", "big fox", "cold tea"};
    req.voices = {synth::DefaultVoices()[0]};
    req.tempos = {{1.0}, {1.1}};
    req.out_dir = dir_->path() / "syn";
    pool_ = new data::Manifest(synth::BuildSyntheticManifest(req).manifest);
    req.transcripts = {"the dog", "red fox"};
    req.tempos = {{1.0}};
    req.out_dir = dir_->path() / "dev";
    req.prefix = "dev";
    dev_ = new data::Manifest(synth::BuildSyntheticManifest(req).manifest);
  }
  static void TearDownTestSuite() {
    delete pool_;
    delete dev_;
    delete dir_;
  }

  RunResult Run(const TrainConfig& cfg, const RunOptions& opt = {}) {
    return TrainRun({}, *pool_, *dev_, SmallModel(), cfg, audio::FeatureConfig{}, opt);
  }

  static TempDir* dir_;
  static data::Manifest* pool_;
  static data::Manifest* dev_;
};

TempDir* TrainTest::dir_ = nullptr;
data::Manifest* TrainTest::pool_ = nullptr;
data::Manifest* TrainTest::dev_ = nullptr;

TrainConfig SyntheticOnly(TrainConfig cfg) {
  cfg.ratio = {0.0};
  return cfg;
}

TEST(Larc, Examples) {
  EXPECT_NEAR(LarcScale(1.0, 1.0, 0.01, 0.002), 0.2, 1e-9);
  EXPECT_DOUBLE_EQ(LarcScale(1.0, 0.0, 0.01, 0.002), 1.0);
  EXPECT_DOUBLE_EQ(LarcScale(3.0, 1.0, 0.01, 0.005), 1.0);
  EXPECT_W2LP_ERROR(LarcScale(1, 1, 0, 1), ErrorKind::kInvalidArgument);
}

// Once clipping is active, multiplying the gradient leaves the applied update
// unchanged up to the epsilon terms.
TEST(Larc, ClippedUpdateInvariantToGradientScale) {
  const double w = 3.0, g = 50.0, lr = 0.1, eta = 0.02;
  const double base = LarcScale(w, g, lr, eta) * g;
  for (double c : {2.0, 10.0, 1e4}) {
    EXPECT_NEAR(LarcScale(w, c * g, lr, eta) * c * g, base, 1e-6);
  }
  EXPECT_LE(lr * LarcScale(w, g, lr, eta) * g, eta * (w + kLarcEpsilon) * (1 + kLarcEpsilon));
}

TEST(Sgd, MomentumHandIteration) {
  std::vector<double> p{0.0}, v{0.0};
  const std::vector<double> g{1.0};
  SgdMomentumStep<double>(p, g, v, 1.0, 0.9);
  SgdMomentumStep<double>(p, g, v, 1.0, 0.9);
  EXPECT_DOUBLE_EQ(p[0], -2.9);
  EXPECT_DOUBLE_EQ(v[0], 1.9);
}

TEST(Sgd, ZeroMomentumIsPlainSgd) {
  std::vector<float> p{1.0f, 2.0f}, v{0.0f, 0.0f};
  const std::vector<float> g{0.5f, -1.0f};
  SgdMomentumStep<float>(p, g, v, 0.1, 0.0);
  EXPECT_FLOAT_EQ(p[0], 0.95f);
  EXPECT_FLOAT_EQ(p[1], 2.1f);
}

TEST(Sgd, ZeroGradientLeavesParams) {
  std::vector<double> p{1.0, -2.0}, v{0.0, 0.0};
  const std::vector<double> g{0.0, 0.0};
  SgdMomentumStep<double>(p, g, v, 0.5, 0.9);
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0}));
}

TEST(Sgd, NonFiniteGradientAbortsBeforeUpdate) {
  std::vector<double> p{1.0, 2.0}, v{0.5, 0.5};
  const std::vector<double> g{0.1, std::nan("")};
  EXPECT_W2LP_ERROR(SgdMomentumStep<double>(p, g, v, 0.5, 0.9), ErrorKind::kDivergence);
  EXPECT_EQ(p, (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(v, (std::vector<double>{0.5, 0.5}));
}

TEST(Schedule, LinearWarmupThenConstant) {
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.steps = 100;
  cfg.warmup_fraction = 0.05;
  EXPECT_NEAR(LearningRateAt(cfg, 0), 0.1 / 5, 1e-15);
  EXPECT_NEAR(LearningRateAt(cfg, 4), 0.1, 1e-15);
  EXPECT_DOUBLE_EQ(LearningRateAt(cfg, 50), 0.1);
  cfg.warmup_fraction = 0.0;
  EXPECT_DOUBLE_EQ(LearningRateAt(cfg, 0), 0.1);
}

TEST(Config, Validation) {
  TrainConfig cfg;
  cfg.Validate();
  cfg.momentum = 1.0;
  EXPECT_W2LP_ERROR(cfg.Validate(), ErrorKind::kConfig);
  cfg = {};
  cfg.keep_factor = 0.0;
  EXPECT_W2LP_ERROR(cfg.Validate(), ErrorKind::kConfig);
  cfg = {};
  cfg.checkpoint_interval = 150;
  EXPECT_W2LP_ERROR(cfg.Validate(), ErrorKind::kConfig);
  EXPECT_EQ(ParseNumericMode("check"), NumericMode::kCheck);
  EXPECT_EQ(NumericModeName(NumericMode::kFast), "fast");
  EXPECT_W2LP_ERROR(ParseNumericMode("quick"), ErrorKind::kConfig);
}

TEST(Metrics, RowFormat) {
  EXPECT_EQ(FormatMetricsRow({100, 0.5, 12.5, 3.25, 2}), "100\t0.5\t12.500000\t3.250000\t2");
}

Checkpoint SampleCheckpoint() {
  Checkpoint ck;
  ck.step = 42;
  ck.config_text = "train.mode = fast\n";
  ck.tensors.push_back({"layer.weight", {2, 1, 3}, {0.5, -1.25, 3.0, 0.0, 0.125, -7.5}});
  ck.tensors.push_back({"layer.bias", {2}, {0.25, -0.5}});
  ck.rng_state = {1, 2, 3, 0xFFFFFFFFFFFFFFFFULL};
  return ck;
}

TEST(Checkpoint, ByteLayout) {
  const auto bytes = SerializeCheckpoint(SampleCheckpoint());
  ASSERT_GE(bytes.size(), 8u + 4 + 8 + 8);
  EXPECT_EQ(bytes.substr(0, 8), "W2LPCKPT");
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + 8, 4);
  EXPECT_EQ(version, 1u);
  std::uint64_t step, cfg_len;
  std::memcpy(&step, bytes.data() + 12, 8);
  std::memcpy(&cfg_len, bytes.data() + 20, 8);
  EXPECT_EQ(step, 42u);
  EXPECT_EQ(cfg_len, 18u);
  EXPECT_EQ(bytes.substr(28, 18), "train.mode = fast\n");
  // Tensor count, then the first tensor's name and shape.
  std::uint32_t count;
  std::memcpy(&count, bytes.data() + 46, 4);
  EXPECT_EQ(count, 2u);
  std::uint16_t name_len;
  std::memcpy(&name_len, bytes.data() + 50, 2);
  EXPECT_EQ(name_len, 12u);
  EXPECT_EQ(bytes.substr(52, 12), "layer.weight");
  EXPECT_EQ(static_cast<unsigned char>(bytes[64]), 3u);
  std::uint64_t d0;
  std::memcpy(&d0, bytes.data() + 65, 8);
  EXPECT_EQ(d0, 2u);
  float first;
  std::memcpy(&first, bytes.data() + 65 + 24, 4);
  EXPECT_EQ(first, 0.5f);
  // 2 tensors of f32 values, then count-prefixed RNG words.
  const std::size_t expected = 46 + 4 + (2 + 12 + 1 + 24 + 6 * 4) + (2 + 10 + 1 + 8 + 2 * 4) +
                               8 + 4 * 8;
  EXPECT_EQ(bytes.size(), expected);
}

TEST(Checkpoint, RoundTripBitIdentical) {
  const auto ck = SampleCheckpoint();
  const auto back = DeserializeCheckpoint(SerializeCheckpoint(ck));
  EXPECT_EQ(back, ck);
  EXPECT_EQ(SerializeCheckpoint(back), SerializeCheckpoint(ck));
  TempDir dir;
  SaveCheckpoint(ck, dir / "c.bin");
  EXPECT_EQ(LoadCheckpoint(dir / "c.bin"), ck);
  ASSERT_NE(back.Find("layer.bias"), nullptr);
  EXPECT_EQ(back.Find("nope"), nullptr);
}

TEST(Checkpoint, CheckModeStoresDoubles) {
  auto ck = SampleCheckpoint();
  ck.config_text = "train.mode = check\n";
  ck.tensors[0].values[0] = 0.1;  // not representable in f32
  const auto back = DeserializeCheckpoint(SerializeCheckpoint(ck));
  EXPECT_EQ(back.tensors[0].values[0], 0.1);
  EXPECT_EQ(CheckpointMode(back), NumericMode::kCheck);
}

TEST(Checkpoint, CorruptionDetected) {
  const auto bytes = SerializeCheckpoint(SampleCheckpoint());
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_W2LP_ERROR(DeserializeCheckpoint(bad_magic), ErrorKind::kFormat);
  auto bad_version = bytes;
  bad_version[8] = 2;
  EXPECT_W2LP_ERROR(DeserializeCheckpoint(bad_version), ErrorKind::kCheckpoint);
  EXPECT_W2LP_ERROR(DeserializeCheckpoint(bytes.substr(0, bytes.size() - 3)),
                    ErrorKind::kCheckpoint);
  EXPECT_W2LP_ERROR(DeserializeCheckpoint(bytes.substr(0, 30)), ErrorKind::kCheckpoint);
  EXPECT_W2LP_ERROR(DeserializeCheckpoint(bytes + "x"), ErrorKind::kCheckpoint);
  TempDir dir;
  WriteFile(dir / "short.bin", bytes.substr(0, 60));
  EXPECT_W2LP_ERROR(LoadCheckpoint(dir / "short.bin"), ErrorKind::kCheckpoint);
  EXPECT_W2LP_ERROR(LoadCheckpoint(dir / "missing.bin"), ErrorKind::kIo);
}

TEST_F(TrainTest, ZeroStepsEqualsInitialization) {
  auto cfg = SyntheticOnly(SmallTrain(NumericMode::kCheck));
  cfg.steps = 0;
  const auto r = Run(cfg);
  EXPECT_TRUE(r.metrics.empty());
  EXPECT_EQ(r.checkpoint.step, 0u);
  const auto init = model::BuildModel<double>(SmallModel(), cfg.seed);
  const auto restored = NetworkFromCheckpoint<double>(r.checkpoint);
  const auto a = init.State();
  const auto b = restored.State();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    EXPECT_EQ(*a[i].second, *b[i].second);
  }
  for (const auto& t : r.checkpoint.tensors) {
    if (t.name.ends_with(".v")) {
      for (double v : t.values) EXPECT_EQ(v, 0.0);
    }
  }
}

TEST_F(TrainTest, MetricsCadenceAndFiles) {
  TempDir out;
  auto cfg = SyntheticOnly(SmallTrain(NumericMode::kFast));
  cfg.steps = 10;
  RunOptions opt;
  opt.out_dir = out.path();
  std::vector<MetricsRow> seen;
  opt.on_metrics = [&](const MetricsRow& r) { seen.push_back(r); };
  const auto r = Run(cfg, opt);
  ASSERT_EQ(r.metrics.size(), 3u);
  EXPECT_EQ(r.metrics[0].step, 4u);
  EXPECT_EQ(r.metrics[1].step, 8u);
  EXPECT_EQ(r.metrics[2].step, 10u);
  EXPECT_EQ(seen, r.metrics);
  for (const auto& m : r.metrics) {
    EXPECT_TRUE(std::isfinite(m.train_loss));
    EXPECT_GE(m.dev_wer, 0.0);
  }
  std::string expected;
  for (const auto& m : r.metrics) expected += FormatMetricsRow(m) + "\n";
  EXPECT_EQ(ReadFile(out / "metrics.tsv"), expected);
  const auto ck = LoadCheckpoint(out / "checkpoint.bin");
  EXPECT_EQ(ck.step, 10u);
  EXPECT_EQ(ck, r.checkpoint);
  EXPECT_EQ(CheckpointModel(ck).ToText(), SmallModel().ToText());
}

TEST_F(TrainTest, CheckModeDeterministic) {
  const auto cfg = SyntheticOnly(SmallTrain(NumericMode::kCheck));
  const auto a = Run(cfg);
  const auto b = Run(cfg);
  EXPECT_EQ(a.metrics, b.metrics);
  EXPECT_EQ(a.checkpoint, b.checkpoint);
  auto other = cfg;
  other.seed = 8;
  EXPECT_NE(Run(other).checkpoint, a.checkpoint);
}

TEST_F(TrainTest, ResumeMatchesUninterruptedRun) {
  const auto cfg = SyntheticOnly(SmallTrain(NumericMode::kCheck));
  const auto full = Run(cfg);
  RunOptions first;
  first.stop_at = 8;
  const auto half = Run(cfg, first);
  EXPECT_EQ(half.checkpoint.step, 8u);
  RunOptions second;
  second.resume = DeserializeCheckpoint(SerializeCheckpoint(half.checkpoint));
  const auto rest = Run(cfg, second);
  EXPECT_EQ(rest.checkpoint.step, 12u);
  ASSERT_EQ(rest.metrics.size(), 1u);
  EXPECT_NEAR(rest.metrics[0].train_loss, full.metrics.back().train_loss, 1e-6);
  ASSERT_EQ(rest.checkpoint.tensors.size(), full.checkpoint.tensors.size());
  for (std::size_t i = 0; i < full.checkpoint.tensors.size(); ++i) {
    const auto& x = full.checkpoint.tensors[i].values;
    const auto& y = rest.checkpoint.tensors[i].values;
    for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(x[k], y[k], 1e-6);
  }
}

TEST_F(TrainTest, ResumeRejectsModeMismatch) {
  const auto cfg = SyntheticOnly(SmallTrain(NumericMode::kCheck));
  RunOptions first;
  first.stop_at = 4;
  RunOptions second;
  second.resume = Run(cfg, first).checkpoint;
  auto fast = cfg;
  fast.mode = NumericMode::kFast;
  EXPECT_W2LP_ERROR(Run(fast, second), ErrorKind::kCheckpoint);
}

TEST_F(TrainTest, UpdatesRespectLarcBound) {
  auto cfg = SyntheticOnly(SmallTrain(NumericMode::kCheck));
  cfg.learning_rate = 0.5;  // large enough that clipping engages
  cfg.larc_eta = 0.01;
  RunOptions opt;
  std::size_t records = 0, clipped = 0;
  opt.on_update = [&](const UpdateRecord& r) {
    ++records;
    clipped += r.scale < 1.0;
    EXPECT_LE(r.lr * r.clipped_g_norm,
              cfg.larc_eta * (r.w_norm + kLarcEpsilon) * (1 + kLarcEpsilon) +
                  (r.scale < 1.0 ? 0.0 : r.lr * r.g_norm))
        << r.tensor;
    EXPECT_LE(r.delta_norm, r.lr * r.velocity_norm * (1 + 1e-9) + 1e-15) << r.tensor;
    EXPECT_LE(r.scale, 1.0);
    EXPECT_GT(r.scale, 0.0);
  };
  Run(cfg, opt);
  EXPECT_EQ(records, 12u * model::BuildModel<double>(SmallModel(), 1).Parameters().size());
  EXPECT_GT(clipped, 0u);
}

TEST_F(TrainTest, NetworkShapeMismatchRejected) {
  auto cfg = SyntheticOnly(SmallTrain(NumericMode::kFast));
  cfg.steps = 0;
  auto ck = Run(cfg).checkpoint;
  ck.tensors[0].shape[0] += 1;
  ck.tensors[0].values.resize(ck.tensors[0].values.size() * 2);
  EXPECT_W2LP_ERROR(NetworkFromCheckpoint<float>(ck), ErrorKind::kCheckpoint);
}

TEST_F(TrainTest, MelBinMismatch) {
  auto model_cfg = SmallModel();
  model_cfg.mel_bins = 40;
  EXPECT_W2LP_ERROR(TrainRun({}, *pool_, {}, model_cfg, SmallTrain(NumericMode::kFast), {}),
                    ErrorKind::kConfig);
}

TEST_F(TrainTest, EvaluateGreedyReportsPercentages) {
  const auto net = model::BuildModel<float>(SmallModel(), 1);
  std::vector<audio::FeatureMatrix> feats;
  std::vector<std::string> refs;
  for (const auto& u : dev_->entries) {
    feats.push_back(data::FeaturizeUtterance(data::LoadWaveform(u), {}));
    refs.push_back(u.transcript);
  }
  const auto s = EvaluateGreedy(net, feats, refs, 1);
  const auto t = EvaluateGreedy(net, feats, refs, 8);
  EXPECT_EQ(s.hypotheses, t.hypotheses);
  EXPECT_EQ(s.wer, t.wer);
  EXPECT_GE(s.wer, 0.0);
  EXPECT_EQ(s.hypotheses.size(), refs.size());
}

}  // namespace
}  // namespace w2lp::train
