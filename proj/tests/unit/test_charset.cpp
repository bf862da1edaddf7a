// tests/unit/test_charset.cpp
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <set>

#include "test_util.hpp"
#include "w2lp/charset.hpp"

namespace w2lp {
namespace {

TEST(Charset, Layout) {
  EXPECT_EQ(Charset::kSize, 29);
  EXPECT_EQ(Charset::Index('a'), 0);
  EXPECT_EQ(Charset::Index('z'), 25);
  EXPECT_EQ(Charset::Index(' '), Charset::kSpace);
  EXPECT_EQ(Charset::Index('\''), Charset::kApostrophe);
  EXPECT_EQ(Charset::kBlank, Charset::kSize - 1);
  std::set<char> seen(Charset::kSymbols.begin(), Charset::kSymbols.end());
  EXPECT_EQ(seen.size(), Charset::kSymbols.size());
  EXPECT_EQ(Charset::kSymbols.size(), static_cast<std::size_t>(Charset::kBlank));
}

TEST(Charset, EncodeDecode) {
  EXPECT_TRUE(Charset::Encode("").empty());
  EXPECT_EQ(Charset::Decode(std::vector<LabelId>{}), "");
  EXPECT_EQ(Charset::Encode("ab"), (std::vector<LabelId>{0, 1}));
  EXPECT_EQ(Charset::Encode("ab c"), (std::vector<LabelId>{0, 1, 26, 2}));
  for (const char* s : {"ab", "hello world", "don't stop", "z"}) {
    EXPECT_EQ(Charset::Decode(Charset::Encode(s)), s);
  }
}

TEST(Charset, RejectsOutsideSymbols) {
  try {
    Charset::Encode("a!b");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kCharset);
    EXPECT_NE(std::string(e.what()).find('!'), std::string::npos);
  }
  EXPECT_W2LP_ERROR(Charset::Encode("Hello"), ErrorKind::kCharset);
  EXPECT_W2LP_ERROR(Charset::Decode(std::vector<LabelId>{Charset::kBlank}),
                    ErrorKind::kCharset);
  EXPECT_W2LP_ERROR(Charset::Decode(std::vector<LabelId>{-1}), ErrorKind::kCharset);
}

}  // namespace
}  // namespace w2lp
