// src/tensor.cpp
//
// SPDX-License-Identifier: Apache-2.0

#include "w2lp/tensor.hpp"

namespace w2lp {

std::string ShapeString(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace w2lp
