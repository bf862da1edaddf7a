// src/dataset.cpp
//
// SPDX-License-Identifier: Apache-2.0

#include "w2lp/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "w2lp/error.hpp"

namespace w2lp::data {

namespace {

std::vector<std::string_view> SplitTabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

double ParseDouble(std::string_view text, bool* ok) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  *ok = ec == std::errc() && ptr == text.data() + text.size();
  return v;
}

}  // namespace

std::string_view OriginName(Origin origin) {
  return origin == Origin::kNatural ? "natural" : "synthetic";
}

Manifest ParseManifest(std::string_view text,
                       const std::filesystem::path& base_dir) {
  Manifest manifest;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    const std::string where = "manifest line " + std::to_string(line_no) + ": ";
    const auto fields = SplitTabs(line);
    if (fields.size() != 4) {
      Fail(ErrorKind::kParse, where + "expected 4 tab-separated fields, got " +
                                  std::to_string(fields.size()));
    }
    Utterance utt;
    std::filesystem::path audio{std::string(fields[0])};
    if (fields[0].empty()) Fail(ErrorKind::kParse, where + "empty audio path");
    if (audio.is_relative() && !base_dir.empty()) audio = base_dir / audio;
    utt.audio_path = audio.lexically_normal().string();

    utt.transcript = std::string(fields[1]);
    if (utt.transcript.empty()) Fail(ErrorKind::kParse, where + "empty transcript");
    try {
      Charset::Validate(utt.transcript);
    } catch (const Error& e) {
      Fail(ErrorKind::kCharset, where + e.what());
    }

    if (fields[2] == "natural") {
      utt.origin = Origin::kNatural;
    } else if (fields[2] == "synthetic") {
      utt.origin = Origin::kSynthetic;
    } else {
      Fail(ErrorKind::kParse,
           where + "unknown origin '" + std::string(fields[2]) + "'");
    }

    bool ok = false;
    utt.duration_s = ParseDouble(fields[3], &ok);
    if (!ok || !(utt.duration_s > 0.0)) {
      Fail(ErrorKind::kParse,
           where + "bad duration '" + std::string(fields[3]) + "'");
    }
    if (!seen.insert(utt.audio_path).second) {
      Fail(ErrorKind::kParse,
           where + "duplicate audio path " + utt.audio_path);
    }
    manifest.entries.push_back(std::move(utt));
  }
  return manifest;
}

Manifest LoadManifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kIo, "cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseManifest(ss.str(), path.parent_path());
}

std::string FormatManifestLine(const Utterance& utt) {
  char dur[32];
  std::snprintf(dur, sizeof(dur), "%.6f", utt.duration_s);
  return utt.audio_path + "\t" + utt.transcript + "\t" +
         std::string(OriginName(utt.origin)) + "\t" + dur;
}

void SaveManifest(const Manifest& manifest, const std::filesystem::path& path) {
  const auto dir = std::filesystem::absolute(path).parent_path();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorKind::kIo, "cannot write manifest " + path.string());
  for (Utterance utt : manifest.entries) {
    std::filesystem::path audio(utt.audio_path);
    if (audio.is_relative()) audio = std::filesystem::absolute(audio);
    utt.audio_path = audio.lexically_proximate(dir).string();
    out << FormatManifestLine(utt) << '\n';
  }
  if (!out) Fail(ErrorKind::kIo, "short write to manifest " + path.string());
}

MixRatio MixRatio::Parse(std::string_view text) {
  auto bad = [&]() -> MixRatio {
    Fail(ErrorKind::kConfig, "bad mix ratio '" + std::string(text) + "'");
  };
  if (text == "natural") return {1.0};
  if (text == "synthetic") return {0.0};
  bool ok = false;
  const std::size_t slash = text.find('/');
  if (slash != std::string_view::npos) {
    const double a = ParseDouble(text.substr(0, slash), &ok);
    if (!ok) return bad();
    const double b = ParseDouble(text.substr(slash + 1), &ok);
    if (!ok || a < 0.0 || b < 0.0 || a + b <= 0.0) return bad();
    return {a / (a + b)};
  }
  const double p = ParseDouble(text, &ok);
  if (!ok || !(p >= 0.0 && p <= 1.0)) return bad();
  return {p};
}

Draw NextDraw(std::size_t natural_size, std::size_t synthetic_size,
              MixRatio ratio, std::mt19937_64& rng) {
  if (natural_size == 0 && synthetic_size == 0) {
    Fail(ErrorKind::kInvalidArgument, "both sampling pools are empty");
  }
  if (!(ratio.p_natural >= 0.0 && ratio.p_natural <= 1.0)) {
    Fail(ErrorKind::kInvalidArgument, "p_natural outside [0, 1]");
  }
  if (ratio.p_natural > 0.0 && natural_size == 0) {
    Fail(ErrorKind::kInvalidArgument,
         "p_natural > 0 but the natural pool is empty");
  }
  if (ratio.p_natural < 1.0 && synthetic_size == 0) {
    Fail(ErrorKind::kInvalidArgument,
         "p_natural < 1 but the synthetic pool is empty");
  }
  std::bernoulli_distribution coin(ratio.p_natural);
  const Origin pool = coin(rng) ? Origin::kNatural : Origin::kSynthetic;
  const std::size_t n = pool == Origin::kNatural ? natural_size : synthetic_size;
  std::uniform_int_distribution<std::size_t> index(0, n - 1);
  return {pool, index(rng)};
}

const Utterance& NextSample(const Manifest& natural, const Manifest& synthetic,
                            MixRatio ratio, std::mt19937_64& rng) {
  const Draw d = NextDraw(natural.size(), synthetic.size(), ratio, rng);
  return d.pool == Origin::kNatural ? natural.entries[d.index]
                                    : synthetic.entries[d.index];
}

MixSampler::MixSampler(const Manifest& natural, const Manifest& synthetic,
                       MixRatio ratio, std::uint64_t seed)
    : natural_(&natural), synthetic_(&synthetic), ratio_(ratio), rng_(seed) {}

Draw MixSampler::NextDraw() {
  return data::NextDraw(natural_->size(), synthetic_->size(), ratio_, rng_);
}

const Utterance& MixSampler::Resolve(const Draw& draw) const {
  return draw.pool == Origin::kNatural ? natural_->entries.at(draw.index)
                                       : synthetic_->entries.at(draw.index);
}

std::vector<std::uint64_t> MixSampler::SaveState() const {
  return EngineState(rng_);
}

void MixSampler::RestoreState(const std::vector<std::uint64_t>& words) {
  SetEngineState(rng_, words);
}

std::vector<std::uint64_t> EngineState(const std::mt19937_64& rng) {
  std::stringstream ss;
  ss << rng;
  std::vector<std::uint64_t> words;
  std::uint64_t w;
  while (ss >> w) words.push_back(w);
  return words;
}

void SetEngineState(std::mt19937_64& rng,
                    const std::vector<std::uint64_t>& words) {
  std::stringstream ss;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) ss << ' ';
    ss << words[i];
  }
  ss >> rng;
  if (ss.fail()) {
    Fail(ErrorKind::kCheckpoint, "invalid generator state (" +
                                     std::to_string(words.size()) + " words)");
  }
}

audio::Waveform LoadWaveform(const Utterance& utt) {
  return audio::ReadWav(utt.audio_path);
}

audio::FeatureMatrix FeaturizeUtterance(const audio::Waveform& wave,
                                        const audio::FeatureConfig& cfg) {
  if (wave.sample_rate_hz != cfg.sample_rate_hz) {
    Fail(ErrorKind::kUnsupported,
         "waveform at " + std::to_string(wave.sample_rate_hz) +
             " Hz, features expect " + std::to_string(cfg.sample_rate_hz));
  }
  return audio::NormalizeFeatures(audio::ComputeLogMel(wave, cfg));
}

Batch PadBatch(const std::vector<const audio::FeatureMatrix*>& features,
               const std::vector<std::vector<LabelId>>& labels,
               double log_floor) {
  if (features.empty()) Fail(ErrorKind::kInvalidArgument, "empty batch");
  std::size_t t_max = 0;
  const std::size_t bins = features.front()->mel_bins;
  for (const auto* f : features) {
    t_max = std::max(t_max, f->frames);
    if (f->mel_bins != bins) {
      Fail(ErrorKind::kInvalidArgument, "mixed mel bin counts in batch");
    }
  }
  Batch batch;
  batch.features = Tensor<float>({features.size(), t_max, bins},
                                 static_cast<float>(std::log(log_floor)));
  for (std::size_t b = 0; b < features.size(); ++b) {
    const auto& f = *features[b];
    std::copy(f.values.begin(), f.values.end(),
              batch.features.data() + b * t_max * bins);
    batch.lengths.push_back(f.frames);
  }
  batch.labels = labels;
  return batch;
}

Batch MakeBatch(const std::vector<Utterance>& utts,
                const audio::FeatureConfig& feature_cfg,
                const augment::AugmentConfig& augment_cfg,
                const std::vector<std::uint64_t>& seeds,
                const WaveformLoader& loader) {
  if (utts.empty()) Fail(ErrorKind::kInvalidArgument, "empty batch");
  if (augment_cfg.any_enabled() && seeds.size() != utts.size()) {
    Fail(ErrorKind::kInvalidArgument, "one augmentation seed per utterance");
  }
  std::vector<audio::FeatureMatrix> feats(utts.size());
  std::vector<std::vector<LabelId>> labels(utts.size());
  for (std::size_t i = 0; i < utts.size(); ++i) {
    audio::Waveform wave = loader(utts[i]);
    if (augment_cfg.any_enabled()) {
      std::mt19937_64 rng(seeds[i]);
      wave = augment::AugmentWaveform(wave, augment_cfg, rng);
    }
    feats[i] = FeaturizeUtterance(wave, feature_cfg);
    labels[i] = Charset::Encode(utts[i].transcript);
  }
  std::vector<const audio::FeatureMatrix*> ptrs;
  for (const auto& f : feats) ptrs.push_back(&f);
  return PadBatch(ptrs, labels, feature_cfg.log_floor);
}

}  // namespace w2lp::data
