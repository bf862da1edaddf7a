// include/w2lp/metrics.hpp
//
// SPDX-License-Identifier: Apache-2.0
//
// Levenshtein alignment and corpus-level word / character error rates.

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace w2lp::metrics {

struct ErrorCounts {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t reference_length = 0;

  std::size_t edits() const { return substitutions + deletions + insertions; }
  // edits / reference_length; reference_length must be positive.
  double rate() const;

  ErrorCounts& operator+=(const ErrorCounts& o);
  friend bool operator==(const ErrorCounts&, const ErrorCounts&) = default;
};

// Minimal edit alignment of hypothesis onto reference. When several alignments
// have the same cost the traceback prefers substitution, then deletion, then
// insertion.
template <typename Token>
ErrorCounts Align(const std::vector<Token>& reference,
                  const std::vector<Token>& hypothesis);

// Words after trimming outer spaces, split at every single space.
std::vector<std::string> SplitWords(std::string_view text);
// Every symbol, spaces included.
std::vector<char> SplitChars(std::string_view text);

ErrorCounts WordErrors(std::string_view reference, std::string_view hypothesis);
ErrorCounts CharErrors(std::string_view reference, std::string_view hypothesis);

// Percentages pooled over the corpus: 100 * total edits / total reference
// length. Insertions can push either above 100.
double Wer(const std::vector<std::string>& references,
           const std::vector<std::string>& hypotheses);
double Cer(const std::vector<std::string>& references,
           const std::vector<std::string>& hypotheses);

}  // namespace w2lp::metrics
