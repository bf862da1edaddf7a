// src/metrics.cpp
//
// SPDX-License-Identifier: Apache-2.0

#include "w2lp/metrics.hpp"

#include <algorithm>

#include "w2lp/error.hpp"

namespace w2lp::metrics {

double ErrorCounts::rate() const {
  if (reference_length == 0) {
    Fail(ErrorKind::kInvalidArgument, "error rate of an empty reference");
  }
  return static_cast<double>(edits()) / static_cast<double>(reference_length);
}

ErrorCounts& ErrorCounts::operator+=(const ErrorCounts& o) {
  substitutions += o.substitutions;
  deletions += o.deletions;
  insertions += o.insertions;
  reference_length += o.reference_length;
  return *this;
}

template <typename Token>
ErrorCounts Align(const std::vector<Token>& ref, const std::vector<Token>& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& {
    return d[i * (m + 1) + j];
  };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({sub, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }

  ErrorCounts c;
  c.reference_length = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (same ? 0 : 1)) {
        if (!same) ++c.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++c.deletions;
      --i;
    } else {
      ++c.insertions;
      --j;
    }
  }
  return c;
}

template ErrorCounts Align<std::string>(const std::vector<std::string>&,
                                        const std::vector<std::string>&);
template ErrorCounts Align<char>(const std::vector<char>&, const std::vector<char>&);
template ErrorCounts Align<int>(const std::vector<int>&, const std::vector<int>&);

std::vector<std::string> SplitWords(std::string_view text) {
  const auto a = text.find_first_not_of(' ');
  if (a == std::string_view::npos) return {};
  text = text.substr(a, text.find_last_not_of(' ') - a + 1);
  std::vector<std::string> out;
  for (std::size_t pos = 0;;) {
    const auto end = text.find(' ', pos);
    out.emplace_back(text.substr(pos, end == std::string_view::npos ? end : end - pos));
    if (end == std::string_view::npos) break;
    pos = end + 1;
  }
  return out;
}

std::vector<char> SplitChars(std::string_view text) {
  return {text.begin(), text.end()};
}

ErrorCounts WordErrors(std::string_view reference, std::string_view hypothesis) {
  return Align(SplitWords(reference), SplitWords(hypothesis));
}

ErrorCounts CharErrors(std::string_view reference, std::string_view hypothesis) {
  return Align(SplitChars(reference), SplitChars(hypothesis));
}

namespace {

template <typename Fn>
double Pooled(const std::vector<std::string>& refs,
              const std::vector<std::string>& hyps, Fn fn) {
  if (refs.size() != hyps.size()) {
    Fail(ErrorKind::kInvalidArgument, "reference and hypothesis counts differ");
  }
  ErrorCounts total;
  for (std::size_t i = 0; i < refs.size(); ++i) total += fn(refs[i], hyps[i]);
  return 100.0 * total.rate();
}

}  // namespace

double Wer(const std::vector<std::string>& references,
           const std::vector<std::string>& hypotheses) {
  return Pooled(references, hypotheses, WordErrors);
}

double Cer(const std::vector<std::string>& references,
           const std::vector<std::string>& hypotheses) {
  return Pooled(references, hypotheses, CharErrors);
}

}  // namespace w2lp::metrics
