// src/kernels_parallel.cpp
//
// SPDX-License-Identifier: Apache-2.0
//
// OpenMP kernels. Convolution runs as a register-blocked product between a
// zero-padded input, whose receptive windows are contiguous rows of length
// kernel * c_in, and the transposed weight matrix. Every output element is
// summed over the window in ascending order by a single thread.

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "w2lp/kernels.hpp"

namespace w2lp::kernels {

void SetNumThreads(int threads) {
  omp_set_num_threads(threads > 0 ? threads : omp_get_num_procs());
}

int NumThreads() { return omp_get_max_threads(); }

namespace parallel {

namespace {

// Output frames per tile and output channels per tile (two AVX registers).
constexpr std::size_t kTileT = 4;
template <typename T>
constexpr std::size_t kTileO = 64 / sizeof(T);

template <typename T>
struct PaddedInput {
  std::vector<T> data;
  std::size_t frames = 0;  // per batch item
};

template <typename T>
PaddedInput<T> PadInput(const ConvShape& s, const T* x) {
  PaddedInput<T> p;
  p.frames = (s.time_out() - 1) * s.stride + s.kernel;
  p.data.assign(s.batch * p.frames * s.c_in, T(0));
  const std::size_t pad = s.pad();
#pragma omp parallel for schedule(static)
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (std::size_t t = 0; t < s.time_in && t + pad < p.frames; ++t) {
      std::memcpy(&p.data[(b * p.frames + t + pad) * s.c_in],
                  x + (b * s.time_in + t) * s.c_in, s.c_in * sizeof(T));
    }
  }
  return p;
}

// y[t][o] = bias[o] + sum_j win_t[j] * wt[j][o] over one tile.
template <typename T, std::size_t NT, std::size_t NO>
inline void ForwardTile(std::size_t kc, std::size_t c_out, const T* const* win,
                        const T* wt, const T* bias, std::size_t o0, T* y,
                        std::size_t y_row) {
  T acc[NT][NO];
  for (std::size_t tt = 0; tt < NT; ++tt) {
    for (std::size_t oo = 0; oo < NO; ++oo) acc[tt][oo] = bias ? bias[o0 + oo] : T(0);
  }
  for (std::size_t j = 0; j < kc; ++j) {
    const T* wr = wt + j * c_out + o0;
    for (std::size_t tt = 0; tt < NT; ++tt) {
      const T xv = win[tt][j];
#pragma omp simd
      for (std::size_t oo = 0; oo < NO; ++oo) acc[tt][oo] += xv * wr[oo];
    }
  }
  for (std::size_t tt = 0; tt < NT; ++tt) {
    for (std::size_t oo = 0; oo < NO; ++oo) y[tt * y_row + o0 + oo] = acc[tt][oo];
  }
}

template <typename T>
void ForwardTileGeneric(std::size_t nt, std::size_t no, std::size_t kc,
                        std::size_t c_out, const T* const* win, const T* wt,
                        const T* bias, std::size_t o0, T* y, std::size_t y_row) {
  for (std::size_t tt = 0; tt < nt; ++tt) {
    for (std::size_t oo = 0; oo < no; ++oo) {
      T acc = bias ? bias[o0 + oo] : T(0);
      for (std::size_t j = 0; j < kc; ++j) acc += win[tt][j] * wt[j * c_out + o0 + oo];
      y[tt * y_row + o0 + oo] = acc;
    }
  }
}

template <typename T>
void ForwardPadded(const ConvShape& s, const PaddedInput<T>& xp, const T* wt,
                   const T* bias, T* y) {
  const std::size_t t_out = s.time_out();
  const std::size_t kc = s.kernel * s.c_in;
  const std::size_t tiles_t = (t_out + kTileT - 1) / kTileT;
  constexpr std::size_t kO = kTileO<T>;
#pragma omp parallel for collapse(2) schedule(static)
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (std::size_t tile = 0; tile < tiles_t; ++tile) {
      const std::size_t t0 = tile * kTileT;
      const std::size_t nt = std::min(kTileT, t_out - t0);
      const T* win[kTileT];
      for (std::size_t tt = 0; tt < kTileT; ++tt) {
        const std::size_t t = t0 + std::min(tt, nt - 1);
        win[tt] = xp.data.data() + (b * xp.frames + t * s.stride) * s.c_in;
      }
      T* yt = y + (b * t_out + t0) * s.c_out;
      for (std::size_t o0 = 0; o0 < s.c_out; o0 += kO) {
        const std::size_t no = std::min(kO, s.c_out - o0);
        if (nt == kTileT && no == kO) {
          ForwardTile<T, kTileT, kO>(kc, s.c_out, win, wt, bias, o0, yt, s.c_out);
        } else {
          ForwardTileGeneric(nt, no, kc, s.c_out, win, wt, bias, o0, yt, s.c_out);
        }
      }
    }
  }
}

// dw[o][j] = sum_{b,t} dy[b][t][o] * win_{b,t}[j] over one tile.
template <typename T, std::size_t NO, std::size_t NJ>
inline void WeightTile(const ConvShape& s, const PaddedInput<T>& xp,
                       const T* dy, std::size_t o0, std::size_t j0, T* dw) {
  const std::size_t t_out = s.time_out();
  const std::size_t kc = s.kernel * s.c_in;
  T acc[NO][NJ] = {};
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (std::size_t t = 0; t < t_out; ++t) {
      const T* xr = xp.data.data() + (b * xp.frames + t * s.stride) * s.c_in + j0;
      const T* dr = dy + (b * t_out + t) * s.c_out + o0;
      for (std::size_t oo = 0; oo < NO; ++oo) {
        const T g = dr[oo];
#pragma omp simd
        for (std::size_t jj = 0; jj < NJ; ++jj) acc[oo][jj] += g * xr[jj];
      }
    }
  }
  for (std::size_t oo = 0; oo < NO; ++oo) {
    for (std::size_t jj = 0; jj < NJ; ++jj) dw[(o0 + oo) * kc + j0 + jj] = acc[oo][jj];
  }
}

template <typename T>
void WeightTileGeneric(const ConvShape& s, const PaddedInput<T>& xp,
                       const T* dy, std::size_t o0, std::size_t no,
                       std::size_t j0, std::size_t nj, T* dw) {
  const std::size_t t_out = s.time_out();
  const std::size_t kc = s.kernel * s.c_in;
  for (std::size_t oo = 0; oo < no; ++oo) {
    for (std::size_t jj = 0; jj < nj; ++jj) {
      T acc = 0;
      for (std::size_t b = 0; b < s.batch; ++b) {
        for (std::size_t t = 0; t < t_out; ++t) {
          acc += dy[(b * t_out + t) * s.c_out + o0 + oo] *
                 xp.data[(b * xp.frames + t * s.stride) * s.c_in + j0 + jj];
        }
      }
      dw[(o0 + oo) * kc + j0 + jj] = acc;
    }
  }
}

}  // namespace

template <typename T>
void Conv1dForward(const ConvShape& s, const T* x, const T* w, const T* bias,
                   T* y) {
  const std::size_t kc = s.kernel * s.c_in;
  std::vector<T> wt(kc * s.c_out);
  for (std::size_t o = 0; o < s.c_out; ++o) {
    for (std::size_t j = 0; j < kc; ++j) wt[j * s.c_out + o] = w[o * kc + j];
  }
  const PaddedInput<T> xp = PadInput(s, x);
  ForwardPadded(s, xp, wt.data(), bias, y);
}

template <typename T>
void Conv1dBackwardInput(const ConvShape& s, const T* dy, const T* w, T* dx) {
  if (s.stride == 1) {
    // With unit stride the input gradient is itself a SAME convolution of dy
    // with the kernel reversed in time and the channel roles swapped.
    ConvShape bs = s;
    bs.c_in = s.c_out;
    bs.c_out = s.c_in;
    std::vector<T> flipped(s.weight_size());
    for (std::size_t o = 0; o < s.c_out; ++o) {
      for (std::size_t k = 0; k < s.kernel; ++k) {
        for (std::size_t i = 0; i < s.c_in; ++i) {
          flipped[(i * s.kernel + (s.kernel - 1 - k)) * s.c_out + o] =
              w[(o * s.kernel + k) * s.c_in + i];
        }
      }
    }
    std::vector<T> tmp(s.batch * s.time_in * s.c_in);
    Conv1dForward(bs, dy, flipped.data(), static_cast<const T*>(nullptr), tmp.data());
    const std::size_t n = tmp.size();
#pragma omp parallel for simd schedule(static)
    for (std::size_t i = 0; i < n; ++i) dx[i] += tmp[i];
    return;
  }

  const std::size_t t_out = s.time_out();
  const std::size_t kc = s.kernel * s.c_in;
  const std::size_t frames = (t_out - 1) * s.stride + s.kernel;
  const std::size_t pad = s.pad();
#pragma omp parallel for schedule(static)
  for (std::size_t b = 0; b < s.batch; ++b) {
    std::vector<T> dxp(frames * s.c_in, T(0));
    for (std::size_t t = 0; t < t_out; ++t) {
      T* win = dxp.data() + t * s.stride * s.c_in;
      for (std::size_t o = 0; o < s.c_out; ++o) {
        const T g = dy[(b * t_out + t) * s.c_out + o];
        const T* wr = w + o * kc;
#pragma omp simd
        for (std::size_t j = 0; j < kc; ++j) win[j] += g * wr[j];
      }
    }
    for (std::size_t t = 0; t < s.time_in && t + pad < frames; ++t) {
      T* dxr = dx + (b * s.time_in + t) * s.c_in;
      const T* src = dxp.data() + (t + pad) * s.c_in;
      for (std::size_t i = 0; i < s.c_in; ++i) dxr[i] += src[i];
    }
  }
}

template <typename T>
void Conv1dBackwardWeight(const ConvShape& s, const T* x, const T* dy, T* dw,
                          T* db) {
  const PaddedInput<T> xp = PadInput(s, x);
  const std::size_t t_out = s.time_out();
  const std::size_t kc = s.kernel * s.c_in;
  constexpr std::size_t kO = 4;
  constexpr std::size_t kJ = kTileO<T>;
  const std::size_t tiles_o = (s.c_out + kO - 1) / kO;
  const std::size_t tiles_j = (kc + kJ - 1) / kJ;
#pragma omp parallel for collapse(2) schedule(static)
  for (std::size_t to = 0; to < tiles_o; ++to) {
    for (std::size_t tj = 0; tj < tiles_j; ++tj) {
      const std::size_t o0 = to * kO, j0 = tj * kJ;
      const std::size_t no = std::min(kO, s.c_out - o0);
      const std::size_t nj = std::min(kJ, kc - j0);
      if (no == kO && nj == kJ) {
        WeightTile<T, kO, kJ>(s, xp, dy, o0, j0, dw);
      } else {
        WeightTileGeneric(s, xp, dy, o0, no, j0, nj, dw);
      }
    }
  }
  for (std::size_t o = 0; o < s.c_out; ++o) db[o] = T(0);
  for (std::size_t bt = 0; bt < s.batch * t_out; ++bt) {
    const T* dr = dy + bt * s.c_out;
    for (std::size_t o = 0; o < s.c_out; ++o) db[o] += dr[o];
  }
}

namespace {

constexpr std::size_t kChannelBlock = 16;

}  // namespace

template <typename T>
BatchNormSaved<T> BatchNormTrainForward(const BatchNormShape& s,
                                        const std::vector<std::size_t>& lengths,
                                        const T* x, const T* gamma,
                                        const T* beta, T eps, T* xhat, T* y) {
  BatchNormSaved<T> saved{std::vector<T>(s.channels), std::vector<T>(s.channels)};
  std::size_t count = 0;
  for (std::size_t b = 0; b < s.batch; ++b) count += lengths[b];
  const T n = static_cast<T>(count);
  const std::size_t blocks = (s.channels + kChannelBlock - 1) / kChannelBlock;
#pragma omp parallel for schedule(static)
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    const std::size_t c0 = blk * kChannelBlock;
    const std::size_t c1 = std::min(s.channels, c0 + kChannelBlock);
    T sum[kChannelBlock] = {}, sq[kChannelBlock] = {};
    for (std::size_t b = 0; b < s.batch; ++b) {
      for (std::size_t t = 0; t < lengths[b]; ++t) {
        const T* xr = x + (b * s.time + t) * s.channels;
        for (std::size_t c = c0; c < c1; ++c) sum[c - c0] += xr[c];
      }
    }
    for (std::size_t c = c0; c < c1; ++c) saved.mean[c] = sum[c - c0] / n;
    for (std::size_t b = 0; b < s.batch; ++b) {
      for (std::size_t t = 0; t < lengths[b]; ++t) {
        const T* xr = x + (b * s.time + t) * s.channels;
        for (std::size_t c = c0; c < c1; ++c) {
          const T d = xr[c] - saved.mean[c];
          sq[c - c0] += d * d;
        }
      }
    }
    for (std::size_t c = c0; c < c1; ++c) {
      saved.inv_std[c] = T(1) / std::sqrt(sq[c - c0] / n + eps);
    }
    for (std::size_t b = 0; b < s.batch; ++b) {
      for (std::size_t t = 0; t < s.time; ++t) {
        const std::size_t row = (b * s.time + t) * s.channels;
        const bool valid = t < lengths[b];
        for (std::size_t c = c0; c < c1; ++c) {
          if (valid) {
            xhat[row + c] = (x[row + c] - saved.mean[c]) * saved.inv_std[c];
            y[row + c] = gamma[c] * xhat[row + c] + beta[c];
          } else {
            xhat[row + c] = T(0);
            y[row + c] = T(0);
          }
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
  const std::size_t blocks = (s.channels + kChannelBlock - 1) / kChannelBlock;
#pragma omp parallel for schedule(static)
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    const std::size_t c0 = blk * kChannelBlock;
    const std::size_t c1 = std::min(s.channels, c0 + kChannelBlock);
    T sdy[kChannelBlock] = {}, sdyx[kChannelBlock] = {};
    for (std::size_t b = 0; b < s.batch; ++b) {
      for (std::size_t t = 0; t < lengths[b]; ++t) {
        const std::size_t row = (b * s.time + t) * s.channels;
        for (std::size_t c = c0; c < c1; ++c) {
          sdy[c - c0] += dy[row + c];
          sdyx[c - c0] += dy[row + c] * xhat[row + c];
        }
      }
    }
    for (std::size_t c = c0; c < c1; ++c) {
      dbeta[c] = sdy[c - c0];
      dgamma[c] = sdyx[c - c0];
    }
    for (std::size_t b = 0; b < s.batch; ++b) {
      for (std::size_t t = 0; t < s.time; ++t) {
        const std::size_t row = (b * s.time + t) * s.channels;
        const bool valid = t < lengths[b];
        for (std::size_t c = c0; c < c1; ++c) {
          const T scale = gamma[c] * saved.inv_std[c] / n;
          dx[row + c] = valid ? scale * (n * dy[row + c] - sdy[c - c0] -
                                         xhat[row + c] * sdyx[c - c0])
                              : T(0);
        }
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

}  // namespace parallel
}  // namespace w2lp::kernels
