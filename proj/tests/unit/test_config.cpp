// tests/unit/test_config.cpp
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "w2lp/config.hpp"

namespace w2lp::config {
namespace {

TEST(RunConfig, Defaults) {
  const RunConfig c;
  EXPECT_EQ(c.model_preset, "w2lp-tiny");
  EXPECT_EQ(c.beam_width, 0u);
  EXPECT_EQ(c.threads, 1);
  EXPECT_EQ(c.ResolveModel().TotalLayers(), 8);
}

TEST(RunConfig, ParsesKeysCommentsAndWhitespace) {
  const auto c = RunConfig::Parse(
      "# run\n"
      "train.learning_rate = 0.01\n"
      "  train.batch_size=4  \n"
      "\n"
      "train.mode = check\n"
      "data.ratio = 33/66\n"
      "augment.noise = true\n"
      "decode.width = 16\n"
      "decode.lm = /tmp/x.arpa\n"
      "run.threads = 3\n");
  EXPECT_DOUBLE_EQ(c.train.learning_rate, 0.01);
  EXPECT_EQ(c.train.batch_size, 4u);
  EXPECT_EQ(c.train.mode, train::NumericMode::kCheck);
  EXPECT_NEAR(c.train.ratio.p_natural, 1.0 / 3.0, 1e-12);
  EXPECT_TRUE(c.train.augment.noise_enabled);
  EXPECT_EQ(c.beam_width, 16u);
  EXPECT_EQ(c.lm_path, "/tmp/x.arpa");
  EXPECT_EQ(c.threads, 3);
}

TEST(RunConfig, LaterLinesOverride) {
  const auto c = RunConfig::Parse("train.steps = 10\ntrain.steps = 20\n");
  EXPECT_EQ(c.train.steps, 20u);
}

TEST(RunConfig, UnknownKeyNamed) {
  try {
    RunConfig::Parse("train.steps = 1\ntrain.sptes = 2\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
    EXPECT_NE(std::string(e.what()).find("train.sptes"), std::string::npos) << e.what();
  }
}

TEST(RunConfig, BadValuesNamed) {
  for (const char* text : {"train.steps = ten", "train.learning_rate = 0.1x",
                           "augment.noise = maybe", "train.mode = slow", "data.ratio = 2/"}) {
    EXPECT_W2LP_ERROR(RunConfig::Parse(text), ErrorKind::kConfig);
  }
  try {
    RunConfig::Parse("train.steps = -3");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("train.steps"), std::string::npos);
  }
  EXPECT_W2LP_ERROR(RunConfig::Parse("no equals sign"), ErrorKind::kConfig);
  EXPECT_W2LP_ERROR(RunConfig::Parse(" = 3"), ErrorKind::kConfig);
}

TEST(RunConfig, ToTextRoundTrip) {
  RunConfig c;
  c.Set("train.learning_rate", "0.1234567890123");
  c.Set("train.seed", "99");
  c.Set("net.channels", "48");
  c.Set("augment.stretch", "yes");
  c.Set("decode.alpha", "0.7");
  const std::string text = c.ToText();
  const auto back = RunConfig::Parse(text);
  EXPECT_EQ(back.ToText(), text);
  EXPECT_EQ(back.train.learning_rate, c.train.learning_rate);
  EXPECT_EQ(back.train.seed, 99u);
  EXPECT_EQ(back.ResolveModel().ToText(), c.ResolveModel().ToText());
  for (const auto& key : RunConfig::Keys()) {
    EXPECT_NE(text.find(key + " = "), std::string::npos) << key;
  }
}

TEST(RunConfig, PresetReshaping) {
  RunConfig c;
  c.Set("net.preset", "w2lp-19");
  EXPECT_EQ(c.ResolveModel().name, "w2lp-19");
  c.Set("net.blocks", "2");
  c.Set("net.repeats", "1");
  c.Set("net.channels", "16");
  const auto m = c.ResolveModel();
  ASSERT_EQ(m.blocks.size(), 2u);
  for (const auto& b : m.blocks) {
    EXPECT_EQ(b.repeats, 1);
    EXPECT_EQ(b.channels, 16);
  }
  EXPECT_EQ(m.preproc.channels, 16);
  EXPECT_EQ(m.TotalLayers(), 1 + 2 + 3);
  c.Set("net.preset", "w2lp-999");
  EXPECT_W2LP_ERROR(c.ResolveModel(), ErrorKind::kConfig);
}

TEST(RunConfig, ExplicitModelLinesReplacePreset) {
  model::ModelConfig m;
  m.mel_bins = 64;
  m.preproc = {8, 5, 2, 1.0};
  m.blocks = {{1, 8, 3, 1, 1.0}};
  m.postproc = {model::ConvLayerSpec{8, 3, 1, 1.0}, model::ConvLayerSpec{8, 1, 1, 1.0},
                model::ConvLayerSpec{29, 1, 1, 1.0}};
  const auto c = RunConfig::Parse("net.preset = w2lp-54\n" + m.ToText());
  EXPECT_EQ(c.ResolveModel().ToText(), m.ToText());
}

TEST(RunConfig, LoadMissingFile) {
  EXPECT_W2LP_ERROR(RunConfig::Load("/nonexistent/run.cfg"), ErrorKind::kIo);
}

}  // namespace
}  // namespace w2lp::config
