// include/w2lp/ctc.hpp
//
// SPDX-License-Identifier: Apache-2.0
//
// Connectionist temporal classification: loss and gradient by forward-backward
// in log space, greedy best-path decoding and prefix beam search with an
// optional word-level language model.

#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "w2lp/charset.hpp"
#include "w2lp/tensor.hpp"

namespace w2lp::lm {
class ArpaModel;
}

namespace w2lp::ctc {

using Label = LabelId;

// Row-major [frames][classes] log-probabilities of one utterance.
template <typename T>
struct LogProbView {
  std::span<const T> values;
  std::size_t frames = 0;
  std::size_t classes = 0;

  T at(std::size_t t, std::size_t c) const { return values[t * classes + c]; }
};

// A label sequence fits in `frames` frames iff L plus the number of adjacent
// repeats does not exceed `frames`.
bool Feasible(std::span<const Label> labels, std::size_t frames);

struct CtcResult {
  double loss = std::numeric_limits<double>::infinity();
  // d loss / d logprobs, [frames][classes]; all zero when infeasible.
  std::vector<double> grad;
  bool feasible = false;
};

template <typename T>
CtcResult CtcLoss(const LogProbView<T>& lp, std::span<const Label> labels,
                  Label blank = Charset::kBlank);

struct BatchLoss {
  double mean_loss = 0.0;  // over feasible items; 0 when none
  std::size_t feasible = 0;
  std::size_t skipped = 0;
  std::vector<bool> item_feasible;
  // Gradient of mean_loss, shaped like the logprobs; zero past each length.
  Tensor<double> grad;
};

// logprobs [batch][time][classes]; frames beyond lengths[b] are ignored.
template <typename T>
BatchLoss CtcBatchLoss(const Tensor<T>& logprobs,
                       const std::vector<std::size_t>& lengths,
                       const std::vector<std::vector<Label>>& labels,
                       Label blank = Charset::kBlank);

// Argmax per frame (lowest id wins ties), merge repeats, drop blanks.
template <typename T>
std::vector<Label> GreedyPath(const LogProbView<T>& lp,
                              Label blank = Charset::kBlank);

template <typename T>
std::string GreedyDecode(const LogProbView<T>& lp) {
  return Charset::Decode(GreedyPath(lp));
}

struct BeamOptions {
  std::size_t width = 128;
  const lm::ArpaModel* lm = nullptr;
  double alpha = 1.0;
  double beta = 1.5;
  // Natural-log score used for words the language model does not list.
  double oov_logprob = -10.0;
};

struct BeamResult {
  std::vector<Label> labels;
  std::string transcript;
  double score = -std::numeric_limits<double>::infinity();
  double acoustic = -std::numeric_limits<double>::infinity();
};

// Prefix beam search over charset labels. Without a language model the score
// is the total acoustic log-probability of the prefix. With one, every
// completed word adds alpha * ln P(word | history) + beta.
template <typename T>
BeamResult BeamDecode(const LogProbView<T>& lp, const BeamOptions& options);

}  // namespace w2lp::ctc
