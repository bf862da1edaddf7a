// include/w2lp/kernels.hpp
//
// SPDX-License-Identifier: Apache-2.0
//
// 1-D convolution and batch normalization kernels over time-major
// activations. Every kernel exists twice: `serial` is the direct
// transcription of the defining formula and is kept as the test oracle;
// `parallel` is the OpenMP version the network runs. Parallel kernels assign
// each output element to exactly one thread and sum in a fixed order, so
// results do not depend on the thread count.
//
// Layouts (row-major):
//   activations  x  [batch][time][channels]
//   conv weight  w  [c_out][kernel][c_in]
//   conv bias    b  [c_out]

#pragma once

#include <cstddef>
#include <vector>

namespace w2lp::kernels {

struct ConvShape {
  std::size_t batch = 1;
  std::size_t time_in = 1;
  std::size_t c_in = 1;
  std::size_t c_out = 1;
  std::size_t kernel = 1;  // odd
  std::size_t stride = 1;

  // SAME padding: ceil(time_in / stride) output frames, (kernel - 1) / 2 zeros
  // on the left.
  std::size_t time_out() const { return (time_in + stride - 1) / stride; }
  std::size_t pad() const { return (kernel - 1) / 2; }
  std::size_t weight_size() const { return c_out * kernel * c_in; }

  void Validate() const;
};

// Per-channel statistics over the valid frames of every batch item.
struct BatchNormShape {
  std::size_t batch = 1;
  std::size_t time = 1;
  std::size_t channels = 1;
};

template <typename T>
struct BatchNormSaved {
  std::vector<T> mean;
  std::vector<T> inv_std;
};

namespace serial {

template <typename T>
void Conv1dForward(const ConvShape& s, const T* x, const T* w, const T* bias,
                   T* y);

// Accumulates into dx (which the caller zero-fills).
template <typename T>
void Conv1dBackwardInput(const ConvShape& s, const T* dy, const T* w, T* dx);

// Overwrites dw and db.
template <typename T>
void Conv1dBackwardWeight(const ConvShape& s, const T* x, const T* dy, T* dw,
                          T* db);

// Normalizes with batch statistics over frames t < lengths[b]; frames beyond
// a length are left at zero in y and xhat.
template <typename T>
BatchNormSaved<T> BatchNormTrainForward(const BatchNormShape& s,
                                        const std::vector<std::size_t>& lengths,
                                        const T* x, const T* gamma,
                                        const T* beta, T eps, T* xhat, T* y);

template <typename T>
void BatchNormBackward(const BatchNormShape& s,
                       const std::vector<std::size_t>& lengths, const T* dy,
                       const T* xhat, const T* gamma,
                       const BatchNormSaved<T>& saved, T* dx, T* dgamma,
                       T* dbeta);

}  // namespace serial

namespace parallel {

template <typename T>
void Conv1dForward(const ConvShape& s, const T* x, const T* w, const T* bias,
                   T* y);

template <typename T>
void Conv1dBackwardInput(const ConvShape& s, const T* dy, const T* w, T* dx);

template <typename T>
void Conv1dBackwardWeight(const ConvShape& s, const T* x, const T* dy, T* dw,
                          T* db);

template <typename T>
BatchNormSaved<T> BatchNormTrainForward(const BatchNormShape& s,
                                        const std::vector<std::size_t>& lengths,
                                        const T* x, const T* gamma,
                                        const T* beta, T eps, T* xhat, T* y);

template <typename T>
void BatchNormBackward(const BatchNormShape& s,
                       const std::vector<std::size_t>& lengths, const T* dy,
                       const T* xhat, const T* gamma,
                       const BatchNormSaved<T>& saved, T* dx, T* dgamma,
                       T* dbeta);

}  // namespace parallel

// Caps the OpenMP worker count; 0 restores the runtime default.
void SetNumThreads(int threads);
int NumThreads();

}  // namespace w2lp::kernels
