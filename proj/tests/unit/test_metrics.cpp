// tests/unit/test_metrics.cpp
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <random>

#include "test_util.hpp"
#include "w2lp/metrics.hpp"

namespace w2lp::metrics {
namespace {

// Plain recursive edit distance, exponential but fine for length <= 6.
std::size_t Distance(const std::vector<int>& a, std::size_t i, const std::vector<int>& b,
                     std::size_t j) {
  if (i == a.size()) return b.size() - j;
  if (j == b.size()) return a.size() - i;
  const std::size_t sub = Distance(a, i + 1, b, j + 1) + (a[i] != b[j]);
  const std::size_t del = Distance(a, i + 1, b, j) + 1;
  const std::size_t ins = Distance(a, i, b, j + 1) + 1;
  return std::min({sub, del, ins});
}

std::vector<int> RandomSeq(std::mt19937_64& rng, std::size_t max_len, int alphabet) {
  std::vector<int> s(rng() % (max_len + 1));
  for (int& x : s) x = static_cast<int>(rng() % alphabet);
  return s;
}

TEST(Align, Identical) {
  const auto e = WordErrors("the cat", "the cat");
  EXPECT_EQ(e, (ErrorCounts{0, 0, 0, 2}));
}

TEST(Align, AllDeleted) {
  const auto e = WordErrors("a b c", "");
  EXPECT_EQ(e, (ErrorCounts{0, 3, 0, 3}));
}

TEST(Align, SubstitutionAndInsertion) {
  const auto e = WordErrors("the cat sat", "the bat sat on");
  EXPECT_EQ(e.substitutions, 1u);
  EXPECT_EQ(e.insertions, 1u);
  EXPECT_EQ(e.deletions, 0u);
  EXPECT_EQ(e.edits(), 2u);
  EXPECT_EQ(e.reference_length, 3u);
}

TEST(Align, TiePrefersSubstitution) {
  // "a b" -> "b a" costs 2 either as two substitutions or a deletion plus an
  // insertion; substitutions win.
  const auto e = Align<int>({1, 2}, {2, 1});
  EXPECT_EQ(e, (ErrorCounts{2, 0, 0, 2}));
}

TEST(Align, EmptyBoth) {
  EXPECT_EQ(Align<int>({}, {}), (ErrorCounts{0, 0, 0, 0}));
  EXPECT_EQ(Align<int>({}, {1, 2}), (ErrorCounts{0, 0, 2, 0}));
}

TEST(Align, MatchesRecursiveOracle) {
  // Every pair of sequences up to length 4 over 3 tokens, plus random pairs
  // up to length 6.
  std::vector<std::vector<int>> all{{}};
  for (std::size_t len = 1; len <= 4; ++len) {
    const std::size_t before = all.size();
    for (std::size_t k = 0; k < before; ++k) {
      if (all[k].size() != len - 1) continue;
      for (int t = 0; t < 3; ++t) {
        auto s = all[k];
        s.push_back(t);
        all.push_back(s);
      }
    }
  }
  for (const auto& a : all) {
    for (const auto& b : all) {
      const auto e = Align(a, b);
      ASSERT_EQ(e.edits(), Distance(a, 0, b, 0));
      EXPECT_EQ(e.reference_length, a.size());
      EXPECT_LE(e.substitutions + e.deletions, a.size());
      EXPECT_EQ(e.substitutions + e.deletions + b.size(),
                e.substitutions + e.insertions + a.size());
    }
  }
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto a = RandomSeq(rng, 6, 3), b = RandomSeq(rng, 6, 3);
    ASSERT_EQ(Align(a, b).edits(), Distance(a, 0, b, 0));
  }
}

TEST(Align, SymmetricDistance) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 500; ++trial) {
    const auto a = RandomSeq(rng, 8, 4), b = RandomSeq(rng, 8, 4);
    const auto ab = Align(a, b), ba = Align(b, a);
    EXPECT_EQ(ab.edits(), ba.edits());
  }
}

TEST(Align, TriangleInequality) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const auto a = RandomSeq(rng, 8, 3), b = RandomSeq(rng, 8, 3), c = RandomSeq(rng, 8, 3);
    EXPECT_LE(Align(a, c).edits(), Align(a, b).edits() + Align(b, c).edits());
  }
}

TEST(Tokenize, Words) {
  EXPECT_EQ(SplitWords("  the cat "), (std::vector<std::string>{"the", "cat"}));
  EXPECT_EQ(SplitWords("a  b"), (std::vector<std::string>{"a", "", "b"}));
  EXPECT_TRUE(SplitWords("").empty());
  EXPECT_TRUE(SplitWords("   ").empty());
}

TEST(Tokenize, Chars) {
  EXPECT_EQ(SplitChars("a b"), (std::vector<char>{'a', ' ', 'b'}));
  EXPECT_EQ(CharErrors("ab", "a"), (ErrorCounts{0, 1, 0, 2}));
}

TEST(Rates, Examples) {
  EXPECT_DOUBLE_EQ(Wer({"the cat sat"}, {"the cat sat"}), 0.0);
  EXPECT_DOUBLE_EQ(Wer({"one two three four"}, {"one two tree four"}), 25.0);
  EXPECT_DOUBLE_EQ(Wer({"a"}, {"a b c"}), 200.0);
  EXPECT_DOUBLE_EQ(Cer({"abcd"}, {"abed"}), 25.0);
}

TEST(Rates, CorpusPooled) {
  // 1 error over 1 word plus 0 over 3 words: pooled 25%, not the 50% mean.
  EXPECT_DOUBLE_EQ(Wer({"a", "b c d"}, {"x", "b c d"}), 25.0);
}

TEST(Rates, Errors) {
  EXPECT_W2LP_ERROR(Wer({}, {}), ErrorKind::kInvalidArgument);
  EXPECT_W2LP_ERROR(Wer({""}, {"a"}), ErrorKind::kInvalidArgument);
  EXPECT_W2LP_ERROR(Wer({"a"}, {}), ErrorKind::kInvalidArgument);
}

TEST(Counts, Accumulate) {
  ErrorCounts a{1, 2, 3, 10};
  a += ErrorCounts{1, 0, 0, 5};
  EXPECT_EQ(a, (ErrorCounts{2, 2, 3, 15}));
  EXPECT_DOUBLE_EQ(a.rate(), 7.0 / 15.0);
}

}  // namespace
}  // namespace w2lp::metrics
