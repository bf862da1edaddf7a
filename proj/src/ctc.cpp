// src/ctc.cpp
//
// SPDX-License-Identifier: Apache-2.0

#include "w2lp/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string_view>

#include "w2lp/error.hpp"
#include "w2lp/lm.hpp"

namespace w2lp::ctc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double LogAdd(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

template <typename T>
void CheckView(const LogProbView<T>& lp) {
  if (lp.values.size() != lp.frames * lp.classes) {
    Fail(ErrorKind::kInvalidArgument, "logprob view size mismatch");
  }
}

}  // namespace

bool Feasible(std::span<const Label> labels, std::size_t frames) {
  std::size_t needed = labels.size();
  for (std::size_t i = 1; i < labels.size(); ++i) {
    if (labels[i] == labels[i - 1]) ++needed;
  }
  return needed <= frames;
}

template <typename T>
CtcResult CtcLoss(const LogProbView<T>& lp, std::span<const Label> labels,
                  Label blank) {
  CheckView(lp);
  for (Label l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= lp.classes || l == blank) {
      Fail(ErrorKind::kInvalidArgument, "ctc label " + std::to_string(l) +
                                            " out of range or blank");
    }
  }
  const std::size_t T_ = lp.frames;
  const std::size_t C = lp.classes;
  CtcResult r;
  r.grad.assign(T_ * C, 0.0);
  if (T_ == 0 || !Feasible(labels, T_)) return r;

  const std::size_t S = 2 * labels.size() + 1;
  std::vector<Label> ext(S, blank);
  for (std::size_t i = 0; i < labels.size(); ++i) ext[2 * i + 1] = labels[i];
  auto skip_ok = [&](std::size_t s) {
    return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];
  };
  auto emit = [&](std::size_t t, std::size_t s) {
    return static_cast<double>(lp.at(t, static_cast<std::size_t>(ext[s])));
  };

  std::vector<double> alpha(T_ * S, kNegInf), beta(T_ * S, kNegInf);
  alpha[0] = emit(0, 0);
  if (S > 1) alpha[1] = emit(0, 1);
  for (std::size_t t = 1; t < T_; ++t) {
    const double* prev = &alpha[(t - 1) * S];
    double* cur = &alpha[t * S];
    for (std::size_t s = 0; s < S; ++s) {
      double a = prev[s];
      if (s >= 1) a = LogAdd(a, prev[s - 1]);
      if (skip_ok(s)) a = LogAdd(a, prev[s - 2]);
      cur[s] = a == kNegInf ? kNegInf : a + emit(t, s);
    }
  }
  beta[(T_ - 1) * S + S - 1] = emit(T_ - 1, S - 1);
  if (S > 1) beta[(T_ - 1) * S + S - 2] = emit(T_ - 1, S - 2);
  for (std::size_t t = T_ - 1; t-- > 0;) {
    const double* next = &beta[(t + 1) * S];
    double* cur = &beta[t * S];
    for (std::size_t s = 0; s < S; ++s) {
      double b = next[s];
      if (s + 1 < S) b = LogAdd(b, next[s + 1]);
      if (s + 2 < S && skip_ok(s + 2)) b = LogAdd(b, next[s + 2]);
      cur[s] = b == kNegInf ? kNegInf : b + emit(t, s);
    }
  }

  double log_z = alpha[(T_ - 1) * S + S - 1];
  if (S > 1) log_z = LogAdd(log_z, alpha[(T_ - 1) * S + S - 2]);
  if (log_z == kNegInf) return r;  // every valid path has zero probability
  r.loss = -log_z;
  r.feasible = true;

  // Occupancy of state s at frame t, merged per class: the posterior gamma.
  std::vector<double> log_gamma(C);
  for (std::size_t t = 0; t < T_; ++t) {
    std::fill(log_gamma.begin(), log_gamma.end(), kNegInf);
    for (std::size_t s = 0; s < S; ++s) {
      const double a = alpha[t * S + s], b = beta[t * S + s];
      if (a == kNegInf || b == kNegInf) continue;
      const std::size_t c = static_cast<std::size_t>(ext[s]);
      log_gamma[c] = LogAdd(log_gamma[c], a + b - emit(t, s) - log_z);
    }
    double mass = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      const double g = log_gamma[c] == kNegInf ? 0.0 : std::exp(log_gamma[c]);
      r.grad[t * C + c] = -g;
      mass += g;
    }
    if (std::abs(mass - 1.0) > 1e-5) {
      Fail(ErrorKind::kDivergence, "ctc posterior mass " + std::to_string(mass) +
                                       " at frame " + std::to_string(t));
    }
  }
  return r;
}

template <typename T>
BatchLoss CtcBatchLoss(const Tensor<T>& logprobs,
                       const std::vector<std::size_t>& lengths,
                       const std::vector<std::vector<Label>>& labels,
                       Label blank) {
  if (logprobs.rank() != 3 || lengths.size() != logprobs.dim(0) ||
      labels.size() != logprobs.dim(0)) {
    Fail(ErrorKind::kInvalidArgument, "ctc batch shape mismatch");
  }
  const std::size_t B = logprobs.dim(0), Tmax = logprobs.dim(1),
                    C = logprobs.dim(2);
  BatchLoss out;
  out.grad = Tensor<double>({B, Tmax, C});
  out.item_feasible.assign(B, false);
  std::vector<CtcResult> results(B);
  for (std::size_t b = 0; b < B; ++b) {
    if (lengths[b] > Tmax) Fail(ErrorKind::kInvalidArgument, "length > time");
    LogProbView<T> view{logprobs.span().subspan(b * Tmax * C, lengths[b] * C),
                        lengths[b], C};
    results[b] = CtcLoss(view, labels[b], blank);
    out.item_feasible[b] = results[b].feasible;
    if (results[b].feasible) {
      ++out.feasible;
      out.mean_loss += results[b].loss;
    } else {
      ++out.skipped;
    }
  }
  if (out.feasible == 0) return out;
  out.mean_loss /= static_cast<double>(out.feasible);
  const double scale = 1.0 / static_cast<double>(out.feasible);
  for (std::size_t b = 0; b < B; ++b) {
    if (!results[b].feasible) continue;
    double* dst = out.grad.data() + b * Tmax * C;
    for (std::size_t i = 0; i < results[b].grad.size(); ++i) {
      dst[i] = results[b].grad[i] * scale;
    }
  }
  return out;
}

template <typename T>
std::vector<Label> GreedyPath(const LogProbView<T>& lp, Label blank) {
  CheckView(lp);
  std::vector<Label> out;
  Label prev = -1;
  for (std::size_t t = 0; t < lp.frames; ++t) {
    Label best = 0;
    for (std::size_t c = 1; c < lp.classes; ++c) {
      if (lp.at(t, c) > lp.at(t, static_cast<std::size_t>(best))) {
        best = static_cast<Label>(c);
      }
    }
    if (best != blank && best != prev) out.push_back(best);
    prev = best;
  }
  return out;
}

namespace {

struct Hyp {
  double p_blank = kNegInf;     // ends in blank
  double p_nonblank = kNegInf;  // ends in the last label
  double lm = 0.0;              // accumulated word bonuses

  double acoustic() const { return LogAdd(p_blank, p_nonblank); }
  double total() const { return acoustic() + lm; }
};

using Prefix = std::vector<Label>;

// Words of the prefix, split on spaces.
std::vector<std::string> Words(const Prefix& p) {
  std::vector<std::string> words;
  std::string cur;
  for (Label l : p) {
    if (l == Charset::kSpace) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(Charset::Symbol(l));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

// Bonus for the last word of `p`, given the words before it as history.
double WordBonus(const Prefix& p, const BeamOptions& o) {
  std::vector<std::string> words = Words(p);
  if (words.empty()) return 0.0;
  const std::string word = std::move(words.back());
  words.pop_back();
  double lp = o.oov_logprob;
  if (o.lm->InVocab(word)) {
    std::vector<std::string> ctx{std::string(lm::ArpaModel::kSentenceStart)};
    ctx.insert(ctx.end(), words.begin(), words.end());
    lp = o.lm->ScoreWord(ctx, word);
  }
  return o.alpha * lp + o.beta;
}

bool EndsWord(const Prefix& p) {
  return !p.empty() && p.back() != Charset::kSpace;
}

// Highest score first; equal scores fall back to the lexicographically
// smaller prefix so results are deterministic.
bool Better(const std::pair<const Prefix*, double>& a,
            const std::pair<const Prefix*, double>& b) {
  if (a.second != b.second) return a.second > b.second;
  return *a.first < *b.first;
}

}  // namespace

template <typename T>
BeamResult BeamDecode(const LogProbView<T>& lp, const BeamOptions& o) {
  CheckView(lp);
  if (o.width == 0) Fail(ErrorKind::kInvalidArgument, "beam width must be >= 1");
  if (lp.classes != static_cast<std::size_t>(Charset::kSize)) {
    Fail(ErrorKind::kInvalidArgument, "beam search expects charset logprobs");
  }
  const Label blank = Charset::kBlank;
  std::map<Prefix, Hyp> beam;
  beam[Prefix{}].p_blank = 0.0;

  for (std::size_t t = 0; t < lp.frames; ++t) {
    std::map<Prefix, Hyp> next;
    for (const auto& [prefix, hyp] : beam) {
      const double total = hyp.acoustic();
      // Blank keeps the prefix.
      {
        Hyp& h = next[prefix];
        h.lm = hyp.lm;
        h.p_blank = LogAdd(h.p_blank, total + lp.at(t, blank));
      }
      const Label last = prefix.empty() ? -1 : prefix.back();
      for (Label c = 0; c < blank; ++c) {
        const double e = lp.at(t, static_cast<std::size_t>(c));
        if (c == last) {
          // Repeat without an intervening blank collapses into the prefix.
          Hyp& same = next[prefix];
          same.lm = hyp.lm;
          same.p_nonblank = LogAdd(same.p_nonblank, hyp.p_nonblank + e);
        }
        Prefix extended = prefix;
        extended.push_back(c);
        auto [it, inserted] = next.try_emplace(std::move(extended));
        Hyp& h = it->second;
        if (inserted) {
          h.lm = hyp.lm;
          if (o.lm && c == Charset::kSpace && EndsWord(prefix)) {
            h.lm += WordBonus(prefix, o);
          }
        }
        const double from = c == last ? hyp.p_blank : total;
        h.p_nonblank = LogAdd(h.p_nonblank, from + e);
      }
    }

    std::vector<std::pair<const Prefix*, double>> ranked;
    ranked.reserve(next.size());
    for (const auto& [prefix, hyp] : next) ranked.emplace_back(&prefix, hyp.total());
    if (ranked.size() > o.width) {
      std::partial_sort(ranked.begin(), ranked.begin() + o.width, ranked.end(),
                        Better);
      ranked.resize(o.width);
    }
    std::map<Prefix, Hyp> kept;
    for (const auto& [prefix, score] : ranked) kept.emplace(*prefix, next.at(*prefix));
    beam = std::move(kept);
  }

  BeamResult best;
  const Prefix* best_prefix = nullptr;
  for (const auto& [prefix, hyp] : beam) {
    double score = hyp.total();
    if (o.lm && EndsWord(prefix)) score += WordBonus(prefix, o);
    if (!best_prefix || Better({&prefix, score}, {best_prefix, best.score})) {
      best_prefix = &prefix;
      best.score = score;
      best.acoustic = hyp.acoustic();
    }
  }
  best.labels = *best_prefix;
  best.transcript = Charset::Decode(best.labels);
  return best;
}

template CtcResult CtcLoss<float>(const LogProbView<float>&, std::span<const Label>, Label);
template CtcResult CtcLoss<double>(const LogProbView<double>&, std::span<const Label>, Label);
template BatchLoss CtcBatchLoss<float>(const Tensor<float>&, const std::vector<std::size_t>&,
                                       const std::vector<std::vector<Label>>&, Label);
template BatchLoss CtcBatchLoss<double>(const Tensor<double>&, const std::vector<std::size_t>&,
                                        const std::vector<std::vector<Label>>&, Label);
template std::vector<Label> GreedyPath<float>(const LogProbView<float>&, Label);
template std::vector<Label> GreedyPath<double>(const LogProbView<double>&, Label);
template BeamResult BeamDecode<float>(const LogProbView<float>&, const BeamOptions&);
template BeamResult BeamDecode<double>(const LogProbView<double>&, const BeamOptions&);

}  // namespace w2lp::ctc
