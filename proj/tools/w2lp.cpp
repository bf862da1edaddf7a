// tools/w2lp.cpp
//
// SPDX-License-Identifier: Apache-2.0
//
// w2lp synth | train | eval | decode

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "w2lp/audio.hpp"
#include "w2lp/config.hpp"
#include "w2lp/ctc.hpp"
#include "w2lp/dataset.hpp"
#include "w2lp/error.hpp"
#include "w2lp/kernels.hpp"
#include "w2lp/lm.hpp"
#include "w2lp/metrics.hpp"
#include "w2lp/synth.hpp"
#include "w2lp/train.hpp"

namespace fs = std::filesystem;
using namespace w2lp;

namespace {

struct DecodeFlags {
  std::string checkpoint;
  std::string lm;
  std::optional<std::size_t> width;
  std::optional<double> alpha;
  std::optional<double> beta;
  int threads = 1;
};

void AddDecodeFlags(CLI::App* cmd, DecodeFlags& f) {
  cmd->add_option("--checkpoint", f.checkpoint, "trained checkpoint")->required();
  cmd->add_option("--lm", f.lm, "ARPA language model for beam search");
  cmd->add_option("--width", f.width, "beam width; absent means greedy");
  cmd->add_option("--alpha", f.alpha, "language model weight");
  cmd->add_option("--beta", f.beta, "word insertion bonus");
  cmd->add_option("--threads", f.threads, "worker threads")->check(CLI::PositiveNumber);
}

void RequireFile(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) {
    Fail(ErrorKind::kIo, std::string(what) + " not found: " + path);
  }
}

// Loaded checkpoint plus the decoding setup derived from flags.
class Decoder {
 public:
  explicit Decoder(const DecodeFlags& f) {
    RequireFile(f.checkpoint, "checkpoint");
    ckpt_ = train::LoadCheckpoint(f.checkpoint);
    run_ = config::RunConfig::Parse(ckpt_.config_text);
    if (train::CheckpointMode(ckpt_) == train::NumericMode::kCheck) {
      wide_ = train::NetworkFromCheckpoint<double>(ckpt_);
    } else {
      narrow_ = train::NetworkFromCheckpoint<float>(ckpt_);
    }
    if (f.width) {
      if (*f.width == 0) Fail(ErrorKind::kInvalidArgument, "--width must be >= 1");
      beam_.width = *f.width;
    }
    use_beam_ = f.width.has_value();
    beam_.alpha = f.alpha.value_or(run_.alpha);
    beam_.beta = f.beta.value_or(run_.beta);
    if (!f.lm.empty()) {
      if (!use_beam_) Fail(ErrorKind::kInvalidArgument, "--lm needs --width");
      RequireFile(f.lm, "language model");
      lm_ = lm::ArpaModel::Load(f.lm);
      beam_.lm = &*lm_;
    }
  }

  const audio::FeatureConfig& features() const { return run_.features; }

  std::string Decode(const audio::FeatureMatrix& fm) const {
    return wide_ ? Run(*wide_, fm) : Run(*narrow_, fm);
  }

 private:
  template <typename T>
  std::string Run(const model::Network<T>& net, const audio::FeatureMatrix& fm) const {
    const data::Batch batch = data::PadBatch({&fm}, {{}}, run_.features.log_floor);
    const auto out = model::ModelInfer(net, batch.features.template Cast<T>(),
                                       batch.lengths);
    ctc::LogProbView<T> view{
        out.logprobs.span().first(out.out_lengths[0] * out.logprobs.dim(2)),
        out.out_lengths[0], out.logprobs.dim(2)};
    return use_beam_ ? ctc::BeamDecode(view, beam_).transcript
                     : ctc::GreedyDecode(view);
  }

  train::Checkpoint ckpt_;
  config::RunConfig run_;
  std::optional<model::Network<float>> narrow_;
  std::optional<model::Network<double>> wide_;
  std::optional<lm::ArpaModel> lm_;
  ctc::BeamOptions beam_;
  bool use_beam_ = false;
};

int CmdSynth(const std::string& transcripts, const std::string& out,
             const std::vector<double>& tempos, const std::vector<int>& voices,
             std::uint64_t seed, const std::string& origin, const std::string& prefix) {
  RequireFile(transcripts, "transcripts file");
  synth::SynthRequest req;
  req.transcripts = synth::LoadTranscripts(transcripts);
  req.out_dir = out;
  req.seed = seed;
  req.prefix = prefix;
  if (origin == "natural") {
    req.origin = data::Origin::kNatural;
  } else if (origin != "synthetic") {
    Fail(ErrorKind::kInvalidArgument, "--origin must be natural or synthetic");
  }
  const auto all_voices = synth::DefaultVoices();
  for (int v : voices) {
    if (v < 0 || static_cast<std::size_t>(v) >= all_voices.size()) {
      Fail(ErrorKind::kInvalidArgument, "unknown voice " + std::to_string(v));
    }
    req.voices.push_back(all_voices[static_cast<std::size_t>(v)]);
  }
  for (double t : tempos) req.tempos.push_back({t});
  const auto result = synth::BuildSyntheticManifest(req);
  data::SaveManifest(result.manifest, fs::path(out) / "manifest.tsv");
  std::printf("%zu utterances written\n", result.manifest.size());
  return 0;
}

int CmdTrain(config::RunConfig run, const std::string& resume) {
  for (const auto* p : {&run.natural_manifest, &run.synthetic_manifest}) {
    if (!p->empty()) RequireFile(*p, "manifest");
  }
  if (!run.dev_manifest.empty()) RequireFile(run.dev_manifest, "dev manifest");
  if (!resume.empty()) RequireFile(resume, "checkpoint");
  if (run.natural_manifest.empty() && run.synthetic_manifest.empty()) {
    Fail(ErrorKind::kConfig, "data.natural or data.synthetic must be set");
  }
  const auto model_cfg = run.ResolveModel();
  kernels::SetNumThreads(run.threads);

  auto load = [](const std::string& p) {
    return p.empty() ? data::Manifest{} : data::LoadManifest(p);
  };
  const auto natural = load(run.natural_manifest);
  const auto synthetic = load(run.synthetic_manifest);
  const auto dev = load(run.dev_manifest);

  train::RunOptions opt;
  opt.out_dir = run.out_dir;
  opt.config_text = run.ToText();
  if (!resume.empty()) opt.resume = train::LoadCheckpoint(resume);
  opt.on_metrics = [](const train::MetricsRow& row) {
    std::printf("%s\n", train::FormatMetricsRow(row).c_str());
    std::fflush(stdout);
  };
  const auto result = train::TrainRun(natural, synthetic, dev, model_cfg, run.train,
                                      run.features, opt);
  std::printf("checkpoint %s at step %llu\n",
              (fs::path(run.out_dir) / "checkpoint.bin").string().c_str(),
              static_cast<unsigned long long>(result.checkpoint.step));
  return 0;
}

int CmdEval(const DecodeFlags& f, const std::string& manifest_path) {
  RequireFile(manifest_path, "manifest");
  kernels::SetNumThreads(f.threads);
  const Decoder decoder(f);
  const auto manifest = data::LoadManifest(manifest_path);
  if (manifest.empty()) Fail(ErrorKind::kInvalidArgument, "manifest is empty: " + manifest_path);
  std::vector<std::string> refs, hyps;
  for (const auto& u : manifest.entries) {
    const auto fm = data::FeaturizeUtterance(data::LoadWaveform(u), decoder.features());
    refs.push_back(u.transcript);
    hyps.push_back(decoder.Decode(fm));
  }
  std::printf("utterances\t%zu\nwer\t%.6f\ncer\t%.6f\n", manifest.size(),
              metrics::Wer(refs, hyps), metrics::Cer(refs, hyps));
  return 0;
}

int CmdDecode(const DecodeFlags& f, const std::string& wav) {
  RequireFile(wav, "audio file");
  kernels::SetNumThreads(f.threads);
  const Decoder decoder(f);
  const auto wave = audio::ReadWav(wav);
  std::printf("%s\n",
              decoder.Decode(data::FeaturizeUtterance(wave, decoder.features())).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Convolutional CTC speech recognition on mixed natural/synthetic data"};
  app.require_subcommand(1);

  // synth
  std::string transcripts, synth_out, origin = "synthetic", prefix = "syn";
  std::vector<double> tempos{1.0, 1.05, 1.10};
  std::vector<int> voices{0, 1, 2};
  std::uint64_t synth_seed = 0;
  auto* synth_cmd = app.add_subcommand("synth", "render transcripts to WAV and a manifest");
  synth_cmd->add_option("--transcripts", transcripts, "one transcript per line")->required();
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--tempos", tempos, "tempo variants")->delimiter(',');
  synth_cmd->add_option("--voices", voices, "voice ids")->delimiter(',');
  synth_cmd->add_option("--seed", synth_seed, "voice assignment seed");
  synth_cmd->add_option("--origin", origin, "natural or synthetic");
  synth_cmd->add_option("--prefix", prefix, "file name prefix");

  // train
  std::string config_path, resume, ratio, train_out;
  std::optional<std::uint64_t> train_seed;
  std::optional<int> train_threads;
  auto* train_cmd = app.add_subcommand("train", "train an acoustic model");
  train_cmd->add_option("--config", config_path, "run configuration")->required();
  train_cmd->add_option("--seed", train_seed, "overrides train.seed");
  train_cmd->add_option("--threads", train_threads, "overrides run.threads");
  train_cmd->add_option("--ratio", ratio, "overrides data.ratio");
  train_cmd->add_option("--out", train_out, "overrides train.out_dir");
  train_cmd->add_option("--checkpoint", resume, "resume from this checkpoint");

  // eval
  DecodeFlags eval_flags;
  std::string eval_manifest;
  auto* eval_cmd = app.add_subcommand("eval", "report WER and CER on a manifest");
  AddDecodeFlags(eval_cmd, eval_flags);
  eval_cmd->add_option("--manifest", eval_manifest, "evaluation manifest")->required();

  // decode
  DecodeFlags decode_flags;
  std::string wav;
  auto* decode_cmd = app.add_subcommand("decode", "transcribe one WAV file");
  AddDecodeFlags(decode_cmd, decode_flags);
  decode_cmd->add_option("wav", wav, "16-bit mono PCM WAV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*synth_cmd) {
      return CmdSynth(transcripts, synth_out, tempos, voices, synth_seed, origin, prefix);
    }
    if (*train_cmd) {
      RequireFile(config_path, "config");
      auto run = config::RunConfig::Load(config_path);
      if (train_seed) run.Set("train.seed", std::to_string(*train_seed));
      if (train_threads) run.Set("run.threads", std::to_string(*train_threads));
      if (!ratio.empty()) run.Set("data.ratio", ratio);
      if (!train_out.empty()) run.Set("train.out_dir", train_out);
      return CmdTrain(std::move(run), resume);
    }
    if (*eval_cmd) return CmdEval(eval_flags, eval_manifest);
    if (*decode_cmd) return CmdDecode(decode_flags, wav);
  } catch (const Error& e) {
    std::fprintf(stderr, "error[%s]: %s\n", std::string(ErrorKindName(e.kind())).c_str(),
                 e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error[internal]: %s\n", e.what());
    return 1;
  }
  return 1;
}
