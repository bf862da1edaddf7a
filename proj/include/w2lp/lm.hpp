// include/w2lp/lm.hpp
//
// SPDX-License-Identifier: Apache-2.0
//
// ARPA back-off n-gram language model. Values are stored as read (log10) and
// returned in natural log.

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace w2lp::lm {

struct NGramEntry {
  double log10_prob = 0.0;
  double log10_backoff = 0.0;
  bool has_backoff = false;
};

class ArpaModel {
 public:
  static constexpr int kMaxOrder = 9;
  static constexpr std::string_view kSentenceStart = "<s>";
  static constexpr std::string_view kSentenceEnd = "</s>";
  static constexpr std::string_view kUnknown = "<unk>";

  static ArpaModel Load(const std::filesystem::path& path);
  static ArpaModel Parse(std::string_view text);

  int order() const { return static_cast<int>(tables_.size()); }
  std::size_t count(int n) const { return tables_.at(n - 1).size(); }
  std::size_t vocab_size() const { return count(1); }
  bool InVocab(std::string_view word) const;
  std::vector<std::string> Vocabulary() const;

  // Listed entry for `tokens` (length 1..order), or nullptr.
  const NGramEntry* Find(std::span<const std::string> tokens) const;

  // ln P(word | context) with Katz back-off. Context beyond order - 1 tokens is
  // truncated to the most recent ones. Words missing from the unigrams score
  // as <unk> when listed, otherwise -infinity.
  double ScoreWord(std::span<const std::string> context,
                   std::string_view word) const;

  // Sum of ScoreWord over tokens followed by </s>, starting from <s>.
  double ScoreSentence(std::span<const std::string> tokens) const;

 private:
  // One table per order; keys are the space-joined tokens.
  std::vector<std::unordered_map<std::string, NGramEntry>> tables_;
};

}  // namespace w2lp::lm
