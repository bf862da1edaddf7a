// include/w2lp/dataset.hpp
//
// SPDX-License-Identifier: Apache-2.0
//
// Manifests, the natural/synthetic mixing sampler and batch assembly.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "w2lp/audio.hpp"
#include "w2lp/augment.hpp"
#include "w2lp/charset.hpp"
#include "w2lp/tensor.hpp"

namespace w2lp::data {

enum class Origin { kNatural, kSynthetic };

std::string_view OriginName(Origin origin);

struct Utterance {
  std::string audio_path;
  std::string transcript;
  Origin origin = Origin::kNatural;
  double duration_s = 0.0;
};

struct Manifest {
  std::vector<Utterance> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
};

// One record per line, tab separated: audio_path, transcript, origin,
// duration_s. Relative audio paths resolve against the manifest's directory.
Manifest LoadManifest(const std::filesystem::path& path);
Manifest ParseManifest(std::string_view text,
                       const std::filesystem::path& base_dir = {});
void SaveManifest(const Manifest& manifest, const std::filesystem::path& path);
std::string FormatManifestLine(const Utterance& utt);

struct MixRatio {
  double p_natural = 0.5;

  // Accepts "natural", "synthetic", "50/50", "33/66" or a probability.
  static MixRatio Parse(std::string_view text);
};

struct Draw {
  Origin pool;
  std::size_t index;
};

// Bernoulli(p_natural) picks the pool, then a uniform index with replacement.
Draw NextDraw(std::size_t natural_size, std::size_t synthetic_size,
              MixRatio ratio, std::mt19937_64& rng);

const Utterance& NextSample(const Manifest& natural, const Manifest& synthetic,
                            MixRatio ratio, std::mt19937_64& rng);

// Owns the generator for one training run. Prefetch workers consume the
// (pool, index) assignments it hands out instead of sampling themselves.
class MixSampler {
 public:
  MixSampler(const Manifest& natural, const Manifest& synthetic,
             MixRatio ratio, std::uint64_t seed);

  Draw NextDraw();
  const Utterance& Resolve(const Draw& draw) const;

  std::vector<std::uint64_t> SaveState() const;
  void RestoreState(const std::vector<std::uint64_t>& words);

 private:
  const Manifest* natural_;
  const Manifest* synthetic_;
  MixRatio ratio_;
  std::mt19937_64 rng_;
};

// Serialized std::mt19937_64 state as raw 64-bit words.
std::vector<std::uint64_t> EngineState(const std::mt19937_64& rng);
void SetEngineState(std::mt19937_64& rng,
                    const std::vector<std::uint64_t>& words);

struct Batch {
  // B x T_max x M, padded frames hold ln(log_floor).
  Tensor<float> features;
  std::vector<std::size_t> lengths;
  std::vector<std::vector<LabelId>> labels;

  std::size_t size() const { return lengths.size(); }
};

using WaveformLoader =
    std::function<audio::Waveform(const Utterance& utt)>;

audio::Waveform LoadWaveform(const Utterance& utt);

// Featurized, normalized utterance ready for padding into a batch.
audio::FeatureMatrix FeaturizeUtterance(const audio::Waveform& wave,
                                        const audio::FeatureConfig& cfg);

// `seeds[i]` seeds the augmentation draws for utts[i]; it is ignored when
// augmentation is disabled.
Batch MakeBatch(const std::vector<Utterance>& utts,
                const audio::FeatureConfig& feature_cfg,
                const augment::AugmentConfig& augment_cfg,
                const std::vector<std::uint64_t>& seeds,
                const WaveformLoader& loader = LoadWaveform);

// Pads already-featurized utterances into a batch.
Batch PadBatch(const std::vector<const audio::FeatureMatrix*>& features,
               const std::vector<std::vector<LabelId>>& labels,
               double log_floor);

}  // namespace w2lp::data
