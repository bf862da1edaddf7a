// include/w2lp/charset.hpp
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace w2lp {

using LabelId = int;

// 26 lowercase letters, space, apostrophe; the CTC blank takes the last id.
class Charset {
 public:
  static constexpr std::string_view kSymbols = "abcdefghijklmnopqrstuvwxyz '";
  static constexpr LabelId kSpace = 26;
  static constexpr LabelId kApostrophe = 27;
  static constexpr LabelId kBlank = 28;
  // Output classes including the blank.
  static constexpr int kSize = 29;

  static bool Contains(char c) { return Index(c) >= 0; }

  // -1 when `c` is not a transcript symbol.
  static LabelId Index(char c) {
    if (c >= 'a' && c <= 'z') return c - 'a';
    if (c == ' ') return kSpace;
    if (c == '\'') return kApostrophe;
    return -1;
  }

  static char Symbol(LabelId id) { return kSymbols.at(static_cast<std::size_t>(id)); }

  // Throws Error(kCharset) naming the first offending character.
  static std::vector<LabelId> Encode(std::string_view text);
  // Throws Error(kCharset) on the blank or any out-of-range id.
  static std::string Decode(std::span<const LabelId> ids);
  static void Validate(std::string_view text);
};

}  // namespace w2lp
