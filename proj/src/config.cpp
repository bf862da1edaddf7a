// src/config.cpp
//
// SPDX-License-Identifier: Apache-2.0

#include "w2lp/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "w2lp/error.hpp"

namespace w2lp::config {

namespace {

std::string Trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return std::string(s.substr(a, b - a + 1));
}

[[noreturn]] void BadValue(std::string_view key, std::string_view value,
                           std::string_view expected) {
  Fail(ErrorKind::kConfig, "key '" + std::string(key) + "': expected " +
                               std::string(expected) + ", got '" +
                               std::string(value) + "'");
}

double ToDouble(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) BadValue(key, v, "a number");
  return out;
}

template <typename I>
I ToInt(std::string_view key, std::string_view v) {
  I out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) BadValue(key, v, "an integer");
  return out;
}

bool ToBool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  BadValue(key, v, "true or false");
}

std::string Num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Field {
  std::function<void(RunConfig&, std::string_view key, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define W2LP_DOUBLE(KEY, MEMBER)                                                  \
  {KEY,                                                                          \
   {[](RunConfig& c, std::string_view k, std::string_view v) {                   \
      c.MEMBER = ToDouble(k, v);                                                 \
    },                                                                           \
    [](const RunConfig& c) { return Num(c.MEMBER); }}}
#define W2LP_INT(KEY, MEMBER, TYPE)                                               \
  {KEY,                                                                          \
   {[](RunConfig& c, std::string_view k, std::string_view v) {                   \
      c.MEMBER = ToInt<TYPE>(k, v);                                              \
    },                                                                           \
    [](const RunConfig& c) { return std::to_string(c.MEMBER); }}}
#define W2LP_BOOL(KEY, MEMBER)                                                    \
  {KEY,                                                                          \
   {[](RunConfig& c, std::string_view k, std::string_view v) {                   \
      c.MEMBER = ToBool(k, v);                                                   \
    },                                                                           \
    [](const RunConfig& c) { return std::string(c.MEMBER ? "true" : "false"); }}}
#define W2LP_STRING(KEY, MEMBER)                                                  \
  {KEY,                                                                          \
   {[](RunConfig& c, std::string_view, std::string_view v) {                     \
      c.MEMBER = std::string(v);                                                 \
    },                                                                           \
    [](const RunConfig& c) { return c.MEMBER; }}}

// Ordered so ToText groups related keys.
const std::vector<std::pair<std::string, Field>>& Fields() {
  static const std::vector<std::pair<std::string, Field>> fields = {
      W2LP_STRING("data.natural", natural_manifest),
      W2LP_STRING("data.synthetic", synthetic_manifest),
      W2LP_STRING("data.dev", dev_manifest),
      {"data.ratio",
       {[](RunConfig& c, std::string_view k, std::string_view v) {
          try {
            c.train.ratio = data::MixRatio::Parse(v);
          } catch (const Error&) {
            BadValue(k, v, "natural, synthetic, a/b or a probability");
          }
        },
        [](const RunConfig& c) { return Num(c.train.ratio.p_natural); }}},

      W2LP_INT("feature.sample_rate", features.sample_rate_hz, int),
      W2LP_INT("feature.window", features.window_samples, int),
      W2LP_INT("feature.hop", features.hop_samples, int),
      W2LP_INT("feature.fft", features.fft_size, int),
      W2LP_INT("feature.mel_bins", features.mel_bins, int),
      W2LP_DOUBLE("feature.fmin", features.fmin_hz),
      W2LP_DOUBLE("feature.fmax", features.fmax_hz),
      W2LP_DOUBLE("feature.log_floor", features.log_floor),

      W2LP_STRING("net.preset", model_preset),
      W2LP_INT("net.blocks", model_blocks, int),
      W2LP_INT("net.repeats", model_repeats, int),
      W2LP_INT("net.channels", model_channels, int),

      W2LP_DOUBLE("train.learning_rate", train.learning_rate),
      W2LP_DOUBLE("train.momentum", train.momentum),
      W2LP_DOUBLE("train.larc_eta", train.larc_eta),
      W2LP_DOUBLE("train.keep_factor", train.keep_factor),
      W2LP_INT("train.batch_size", train.batch_size, std::size_t),
      W2LP_INT("train.steps", train.steps, std::size_t),
      W2LP_INT("train.seed", train.seed, std::uint64_t),
      {"train.mode",
       {[](RunConfig& c, std::string_view, std::string_view v) {
          c.train.mode = train::ParseNumericMode(v);
        },
        [](const RunConfig& c) {
          return std::string(train::NumericModeName(c.train.mode));
        }}},
      W2LP_DOUBLE("train.warmup_fraction", train.warmup_fraction),
      W2LP_INT("train.log_interval", train.log_interval, std::size_t),
      W2LP_INT("train.checkpoint_interval", train.checkpoint_interval, std::size_t),
      W2LP_STRING("train.out_dir", out_dir),

      W2LP_BOOL("augment.noise", train.augment.noise_enabled),
      W2LP_DOUBLE("augment.noise_db_lo", train.augment.noise_db_lo),
      W2LP_DOUBLE("augment.noise_db_hi", train.augment.noise_db_hi),
      W2LP_BOOL("augment.stretch", train.augment.stretch_enabled),
      W2LP_DOUBLE("augment.stretch_factor", train.augment.stretch_factor),

      W2LP_STRING("decode.lm", lm_path),
      W2LP_INT("decode.width", beam_width, std::size_t),
      W2LP_DOUBLE("decode.alpha", alpha),
      W2LP_DOUBLE("decode.beta", beta),

      W2LP_INT("run.threads", threads, int),
  };
  return fields;
}

#undef W2LP_DOUBLE
#undef W2LP_INT
#undef W2LP_BOOL
#undef W2LP_STRING

// Lines ModelConfig::ToText writes; these describe the network directly.
bool IsExplicitModelKey(std::string_view key) {
  return key == "model.name" || key == "model.preproc" ||
         key.starts_with("model.block.") || key.starts_with("model.postproc.") ||
         key == "model.mel_bins" || key == "model.num_classes" ||
         key == "model.bn_momentum" || key == "model.bn_eps";
}

}  // namespace

void RunConfig::Set(std::string_view key, std::string_view value) {
  if (IsExplicitModelKey(key)) {
    model_explicit += std::string(key) + " = " + std::string(value) + "\n";
    return;
  }
  for (const auto& [name, field] : Fields()) {
    if (name == key) {
      field.set(*this, key, value);
      return;
    }
  }
  Fail(ErrorKind::kConfig, "unknown config key '" + std::string(key) + "'");
}

model::ModelConfig RunConfig::ResolveModel() const {
  if (!model_explicit.empty()) {
    auto cfg = model::ModelConfig::FromText(model_explicit);
    cfg.Validate();
    return cfg;
  }
  auto cfg = model::Preset(model_preset, features.mel_bins, Charset::kSize);
  if (model_blocks > 0 || model_repeats > 0 || model_channels > 0) {
    cfg.name = "custom";
    cfg.declared_layers = 0;
    if (model_blocks > 0) {
      const auto base = cfg.blocks;
      cfg.blocks.clear();
      for (int i = 0; i < model_blocks; ++i) {
        cfg.blocks.push_back(base[std::min<std::size_t>(i, base.size() - 1)]);
      }
    }
    for (auto& b : cfg.blocks) {
      if (model_repeats > 0) b.repeats = model_repeats;
      if (model_channels > 0) b.channels = model_channels;
    }
    if (model_channels > 0) cfg.preproc.channels = model_channels;
  }
  cfg.Validate();
  return cfg;
}

std::string RunConfig::ToText() const {
  std::string out;
  for (const auto& [name, field] : Fields()) {
    out += name + " = " + field.get(*this) + "\n";
  }
  out += ResolveModel().ToText();
  return out;
}

RunConfig RunConfig::Parse(std::string_view text) {
  RunConfig cfg;
  std::size_t line_no = 0;
  for (std::size_t pos = 0; pos <= text.size();) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string line = Trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      Fail(ErrorKind::kConfig, "config line " + std::to_string(line_no) +
                                   ": expected 'key = value'");
    }
    const std::string key = Trim(std::string_view(line).substr(0, eq));
    const std::string value = Trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) {
      Fail(ErrorKind::kConfig, "config line " + std::to_string(line_no) + ": empty key");
    }
    cfg.Set(key, value);
  }
  return cfg;
}

RunConfig RunConfig::Load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kIo, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return Parse(ss.str());
}

std::vector<std::string> RunConfig::Keys() {
  std::vector<std::string> keys;
  for (const auto& [name, field] : Fields()) keys.push_back(name);
  return keys;
}

}  // namespace w2lp::config
