// include/w2lp/error.hpp
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace w2lp {

enum class ErrorKind {
  kIo,
  kFormat,       // malformed file contents
  kUnsupported,  // well-formed but outside what we handle (stereo wav, ...)
  kParse,
  kCharset,
  kConfig,
  kInvalidArgument,
  kDivergence,
  kCheckpoint,
};

std::string_view ErrorKindName(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void Fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace w2lp
