// src/charset.cpp
//
// SPDX-License-Identifier: Apache-2.0

#include "w2lp/charset.hpp"

#include "w2lp/error.hpp"

namespace w2lp {

namespace {

std::string Describe(char c) {
  if (c >= 0x20 && c < 0x7f) return std::string("'") + c + "'";
  return "byte 0x" + std::to_string(static_cast<unsigned char>(c));
}

}  // namespace

void Charset::Validate(std::string_view text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (!Contains(text[i])) {
      Fail(ErrorKind::kCharset, "character " + Describe(text[i]) +
                                    " at position " + std::to_string(i) +
                                    " is not in the charset");
    }
  }
}

std::vector<LabelId> Charset::Encode(std::string_view text) {
  Validate(text);
  std::vector<LabelId> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(Index(c));
  return ids;
}

std::string Charset::Decode(std::span<const LabelId> ids) {
  std::string text;
  text.reserve(ids.size());
  for (LabelId id : ids) {
    if (id < 0 || id >= kBlank) {
      Fail(ErrorKind::kCharset,
           "label id " + std::to_string(id) + " has no transcript symbol");
    }
    text.push_back(Symbol(id));
  }
  return text;
}

}  // namespace w2lp
