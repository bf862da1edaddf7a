// src/kernels_serial.cpp
//
// SPDX-License-Identifier: Apache-2.0
//
// Reference kernels. Straight loops over the defining sums; no blocking.

#include <cmath>

#include "w2lp/error.hpp"
#include "w2lp/kernels.hpp"

namespace w2lp::kernels {

void ConvShape::Validate() const {
  if (batch == 0 || time_in == 0 || c_in == 0 || c_out == 0) {
    Fail(ErrorKind::kInvalidArgument, "conv1d: empty dimension");
  }
  if (kernel % 2 == 0) Fail(ErrorKind::kInvalidArgument, "conv1d: even kernel");
  if (stride == 0) Fail(ErrorKind::kInvalidArgument, "conv1d: zero stride");
}

namespace serial {

template <typename T>
void Conv1dForward(const ConvShape& s, const T* x, const T* w, const T* bias,
                   T* y) {
  const std::size_t t_out = s.time_out();
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (std::size_t t = 0; t < t_out; ++t) {
      for (std::size_t o = 0; o < s.c_out; ++o) {
        T acc = bias ? bias[o] : T(0);
        for (std::size_t k = 0; k < s.kernel; ++k) {
          const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * s.stride + k) -
                                     static_cast<std::ptrdiff_t>(s.pad());
          if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(s.time_in)) continue;
          const T* xr = x + (b * s.time_in + pos) * s.c_in;
          const T* wr = w + (o * s.kernel + k) * s.c_in;
          for (std::size_t i = 0; i < s.c_in; ++i) acc += wr[i] * xr[i];
        }
        y[(b * t_out + t) * s.c_out + o] = acc;
      }
    }
  }
}

template <typename T>
void Conv1dBackwardInput(const ConvShape& s, const T* dy, const T* w, T* dx) {
  const std::size_t t_out = s.time_out();
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (std::size_t t = 0; t < t_out; ++t) {
      for (std::size_t o = 0; o < s.c_out; ++o) {
        const T g = dy[(b * t_out + t) * s.c_out + o];
        for (std::size_t k = 0; k < s.kernel; ++k) {
          const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * s.stride + k) -
                                     static_cast<std::ptrdiff_t>(s.pad());
          if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(s.time_in)) continue;
          T* dxr = dx + (b * s.time_in + pos) * s.c_in;
          const T* wr = w + (o * s.kernel + k) * s.c_in;
          for (std::size_t i = 0; i < s.c_in; ++i) dxr[i] += g * wr[i];
        }
      }
    }
  }
}

template <typename T>
void Conv1dBackwardWeight(const ConvShape& s, const T* x, const T* dy, T* dw,
                          T* db) {
  const std::size_t t_out = s.time_out();
  for (std::size_t i = 0; i < s.weight_size(); ++i) dw[i] = T(0);
  for (std::size_t o = 0; o < s.c_out; ++o) db[o] = T(0);
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (std::size_t t = 0; t < t_out; ++t) {
      for (std::size_t o = 0; o < s.c_out; ++o) {
        const T g = dy[(b * t_out + t) * s.c_out + o];
        db[o] += g;
        for (std::size_t k = 0; k < s.kernel; ++k) {
          const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * s.stride + k) -
                                     static_cast<std::ptrdiff_t>(s.pad());
          if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(s.time_in)) continue;
          const T* xr = x + (b * s.time_in + pos) * s.c_in;
          T* dwr = dw + (o * s.kernel + k) * s.c_in;
          for (std::size_t i = 0; i < s.c_in; ++i) dwr[i] += g * xr[i];
        }
      }
    }
  }
}

template <typename T>
BatchNormSaved<T> BatchNormTrainForward(const BatchNormShape& s,
                                        const std::vector<std::size_t>& lengths,
                                        const T* x, const T* gamma,
                                        const T* beta, T eps, T* xhat, T* y) {
  BatchNormSaved<T> saved{std::vector<T>(s.channels), std::vector<T>(s.channels)};
  std::size_t count = 0;
  for (std::size_t b = 0; b < s.batch; ++b) count += lengths[b];
  for (std::size_t c = 0; c < s.channels; ++c) {
    T sum = 0;
    for (std::size_t b = 0; b < s.batch; ++b) {
      for (std::size_t t = 0; t < lengths[b]; ++t) {
        sum += x[(b * s.time + t) * s.channels + c];
      }
    }
    const T mean = sum / static_cast<T>(count);
    T sq = 0;
    for (std::size_t b = 0; b < s.batch; ++b) {
      for (std::size_t t = 0; t < lengths[b]; ++t) {
        const T d = x[(b * s.time + t) * s.channels + c] - mean;
        sq += d * d;
      }
    }
    const T inv_std = T(1) / std::sqrt(sq / static_cast<T>(count) + eps);
    saved.mean[c] = mean;
    saved.inv_std[c] = inv_std;
    for (std::size_t b = 0; b < s.batch; ++b) {
      for (std::size_t t = 0; t < s.time; ++t) {
        const std::size_t idx = (b * s.time + t) * s.channels + c;
        if (t < lengths[b]) {
          xhat[idx] = (x[idx] - mean) * inv_std;
          y[idx] = gamma[c] * xhat[idx] + beta[c];
        } else {
          xhat[idx] = T(0);
          y[idx] = T(0);
        }
      }
    }
  }
  return saved;
}

template <typename T>
void BatchNormBackward(const BatchNormShape& s,
                       const std::vector<std::size_t>& lengths, const T* dy,
                       const T* xhat, const T* gamma,
                       const BatchNormSaved<T>& saved, T* dx, T* dgamma,
                       T* dbeta) {
  std::size_t count = 0;
  for (std::size_t b = 0; b < s.batch; ++b) count += lengths[b];
  const T n = static_cast<T>(count);
  for (std::size_t c = 0; c < s.channels; ++c) {
    T sum_dy = 0, sum_dy_xhat = 0;
    for (std::size_t b = 0; b < s.batch; ++b) {
      for (std::size_t t = 0; t < lengths[b]; ++t) {
        const std::size_t idx = (b * s.time + t) * s.channels + c;
        sum_dy += dy[idx];
        sum_dy_xhat += dy[idx] * xhat[idx];
      }
    }
    dbeta[c] = sum_dy;
    dgamma[c] = sum_dy_xhat;
    const T scale = gamma[c] * saved.inv_std[c] / n;
    for (std::size_t b = 0; b < s.batch; ++b) {
      for (std::size_t t = 0; t < s.time; ++t) {
        const std::size_t idx = (b * s.time + t) * s.channels + c;
        dx[idx] = t < lengths[b]
                      ? scale * (n * dy[idx] - sum_dy - xhat[idx] * sum_dy_xhat)
                      : T(0);
      }
    }
  }
}

#define W2LP_INSTANTIATE(T)                                                    \
  template void Conv1dForward<T>(const ConvShape&, const T*, const T*,         \
                                 const T*, T*);                                \
  template void Conv1dBackwardInput<T>(const ConvShape&, const T*, const T*,   \
                                       T*);                                    \
  template void Conv1dBackwardWeight<T>(const ConvShape&, const T*, const T*,  \
                                        T*, T*);                               \
  template BatchNormSaved<T> BatchNormTrainForward<T>(                         \
      const BatchNormShape&, const std::vector<std::size_t>&, const T*,        \
      const T*, const T*, T, T*, T*);                                          \
  template void BatchNormBackward<T>(const BatchNormShape&,                    \
                                     const std::vector<std::size_t>&,          \
                                     const T*, const T*, const T*,             \
                                     const BatchNormSaved<T>&, T*, T*, T*);

W2LP_INSTANTIATE(float)
W2LP_INSTANTIATE(double)
#undef W2LP_INSTANTIATE

}  // namespace serial
}  // namespace w2lp::kernels
