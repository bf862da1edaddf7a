// src/error.cpp
//
// SPDX-License-Identifier: Apache-2.0

#include "w2lp/error.hpp"

namespace w2lp {

std::string_view ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIo: return "io";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kUnsupported: return "unsupported";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kCharset: return "charset";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kDivergence: return "divergence";
    case ErrorKind::kCheckpoint: return "checkpoint";
  }
  return "unknown";
}

}  // namespace w2lp
