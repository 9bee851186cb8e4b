// Copyright 2026 The ebus-slowfast Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ebus/ops.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>

namespace ebus {

namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using ConstMapRM = Eigen::Map<const MatRM<T>>;
template <typename T>
using StridedMap = Eigen::Map<MatRM<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const MatRM<T>, 0, Eigen::OuterStride<>>;

// Upper bound on im2col buffer elements; larger convolutions are processed
// in chunks of output frames.
constexpr std::size_t kMaxColElems = std::size_t{1} << 24;

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

void require_rank(const Shape& dims, std::size_t rank, const char* what) {
  if (dims.size() != rank) {
    throw ShapeError("rank", std::string(what) + " expects rank " +
                                 std::to_string(rank) + ", got " +
                                 shape_str(dims));
  }
}

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

struct ConvGeom {
  std::int64_t n, c, t, h, w;       // input
  std::int64_t co, kt, kh, kw;      // kernel
  std::int64_t to, ho, wo;          // output
  Triple stride, pad;
  std::int64_t ck() const { return c * kt * kh * kw; }
  std::int64_t in_frame() const { return h * w; }
  std::int64_t out_frame() const { return ho * wo; }
  bool pointwise() const {
    return kt == 1 && kh == 1 && kw == 1 && stride == Triple{1, 1, 1} &&
           pad == Triple{0, 0, 0};
  }
  std::int64_t chunk_frames() const {
    const auto per_frame = static_cast<std::size_t>(ck() * out_frame());
    return std::max<std::int64_t>(
        1, static_cast<std::int64_t>(kMaxColElems / std::max<std::size_t>(per_frame, 1)));
  }
};

// Gathers input patches for output frames [t0, t1) of sample x (shape [C,T,H,W])
// into col [CK, (t1-t0)*Ho*Wo].
template <typename T>
void im2col(const T* x, const ConvGeom& g, std::int64_t t0, std::int64_t t1,
            T* col) {
  const std::int64_t cols = (t1 - t0) * g.out_frame();
  for (std::int64_t c = 0; c < g.c; ++c) {
    for (std::int64_t a = 0; a < g.kt; ++a) {
      for (std::int64_t b = 0; b < g.kh; ++b) {
        for (std::int64_t d = 0; d < g.kw; ++d) {
          const std::int64_t row = ((c * g.kt + a) * g.kh + b) * g.kw + d;
          T* dst = col + row * cols;
          for (std::int64_t ot = t0; ot < t1; ++ot) {
            const std::int64_t it = ot * g.stride[0] - g.pad[0] + a;
            for (std::int64_t oh = 0; oh < g.ho; ++oh) {
              const std::int64_t ih = oh * g.stride[1] - g.pad[1] + b;
              T* out = dst + ((ot - t0) * g.ho + oh) * g.wo;
              if (it < 0 || it >= g.t || ih < 0 || ih >= g.h) {
                std::fill(out, out + g.wo, T{0});
                continue;
              }
              const T* src = x + ((c * g.t + it) * g.h + ih) * g.w;
              for (std::int64_t ow = 0; ow < g.wo; ++ow) {
                const std::int64_t iw = ow * g.stride[2] - g.pad[2] + d;
                out[ow] = (iw < 0 || iw >= g.w) ? T{0} : src[iw];
              }
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters col back into dx (shape [C,T,H,W]).
template <typename T>
void col2im(const T* col, const ConvGeom& g, std::int64_t t0, std::int64_t t1,
            T* dx) {
  const std::int64_t cols = (t1 - t0) * g.out_frame();
  for (std::int64_t c = 0; c < g.c; ++c) {
    for (std::int64_t a = 0; a < g.kt; ++a) {
      for (std::int64_t b = 0; b < g.kh; ++b) {
        for (std::int64_t d = 0; d < g.kw; ++d) {
          const std::int64_t row = ((c * g.kt + a) * g.kh + b) * g.kw + d;
          const T* src = col + row * cols;
          for (std::int64_t ot = t0; ot < t1; ++ot) {
            const std::int64_t it = ot * g.stride[0] - g.pad[0] + a;
            if (it < 0 || it >= g.t) continue;
            for (std::int64_t oh = 0; oh < g.ho; ++oh) {
              const std::int64_t ih = oh * g.stride[1] - g.pad[1] + b;
              if (ih < 0 || ih >= g.h) continue;
              const T* in = src + ((ot - t0) * g.ho + oh) * g.wo;
              T* dst = dx + ((c * g.t + it) * g.h + ih) * g.w;
              for (std::int64_t ow = 0; ow < g.wo; ++ow) {
                const std::int64_t iw = ow * g.stride[2] - g.pad[2] + d;
                if (iw >= 0 && iw < g.w) dst[iw] += in[ow];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
T sigmoid(T x) {
  if (x >= 0) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

}  // namespace

std::int64_t window_out_extent(std::int64_t extent, std::int64_t kernel,
                               std::int64_t stride, std::int64_t pad,
                               const char* axis) {
  if (kernel <= 0 || stride <= 0 || pad < 0) {
    throw ShapeError(axis, "kernel and stride must be positive, padding "
                           "nonnegative");
  }
  if (extent + 2 * pad < kernel) {
    throw ShapeError(axis, "window " + std::to_string(kernel) +
                               " exceeds padded extent " +
                               std::to_string(extent + 2 * pad));
  }
  return (extent + 2 * pad - kernel) / stride + 1;
}

// ---------------------------------------------------------------------------
// conv3d

template <typename T>
Var<T> conv3d(Tape<T>& tape, const Var<T>& input, const Var<T>& kernel,
              const OptionalVar<T>& bias, Triple stride, Triple pad) {
  const auto& xd = input.dims();
  const auto& wd = kernel.dims();
  require_rank(xd, 5, "conv3d input");
  require_rank(wd, 5, "conv3d kernel");
  if (wd[1] != xd[1]) {
    throw ShapeError("C", "conv3d kernel expects " + std::to_string(wd[1]) +
                              " input channels, input has " +
                              std::to_string(xd[1]));
  }
  if (bias && (bias->dims() != Shape{wd[0]})) {
    throw ShapeError("C_out", "conv3d bias dims " + shape_str(bias->dims()) +
                                  " do not match output channels " +
                                  std::to_string(wd[0]));
  }
  ConvGeom g{xd[0], xd[1], xd[2], xd[3], xd[4], wd[0], wd[2], wd[3], wd[4],
             0,     0,     0,     stride, pad};
  g.to = window_out_extent(g.t, g.kt, stride[0], pad[0], "T");
  g.ho = window_out_extent(g.h, g.kh, stride[1], pad[1], "H");
  g.wo = window_out_extent(g.w, g.kw, stride[2], pad[2], "W");

  Tensor<T> out(Shape{g.n, g.co, g.to, g.ho, g.wo});
  const T* xp = input.value().ptr();
  const T* wp = kernel.value().ptr();
  const std::int64_t in_sample = g.c * g.t * g.in_frame();
  const std::int64_t out_sample = g.co * g.to * g.out_frame();
  const std::int64_t out_chan = g.to * g.out_frame();
  ConstMapRM<T> wmat(wp, g.co, g.ck());

  if (g.pointwise()) {
    for (std::int64_t n = 0; n < g.n; ++n) {
      ConstMapRM<T> xs(xp + n * in_sample, g.c, out_chan);
      MapRM<T> os(out.ptr() + n * out_sample, g.co, out_chan);
      os.noalias() = wmat * xs;
    }
  } else {
    const std::int64_t chunk = g.chunk_frames();
    std::vector<T> col;
    for (std::int64_t n = 0; n < g.n; ++n) {
      for (std::int64_t t0 = 0; t0 < g.to; t0 += chunk) {
        const std::int64_t t1 = std::min(g.to, t0 + chunk);
        const std::int64_t ncols = (t1 - t0) * g.out_frame();
        col.resize(static_cast<std::size_t>(g.ck() * ncols));
        im2col(xp + n * in_sample, g, t0, t1, col.data());
        ConstMapRM<T> cm(col.data(), g.ck(), ncols);
        StridedMap<T> os(out.ptr() + n * out_sample + t0 * g.out_frame(), g.co,
                         ncols, Eigen::OuterStride<>(out_chan));
        os.noalias() = wmat * cm;
      }
    }
  }
  if (bias) {
    const T* bp = bias->value().ptr();
    for (std::int64_t n = 0; n < g.n; ++n) {
      for (std::int64_t co = 0; co < g.co; ++co) {
        T* o = out.ptr() + n * out_sample + co * out_chan;
        for (std::int64_t i = 0; i < out_chan; ++i) o[i] += bp[co];
      }
    }
  }

  NodePtr<T> xn = input.node(), wn = kernel.node();
  NodePtr<T> bn = bias ? bias->node() : nullptr;
  return tape.record(
      std::move(out), {&input, &kernel, bias ? &*bias : nullptr},
      [xn, wn, bn, g, in_sample, out_sample, out_chan](const Tensor<T>& dy) {
        const T* xp = xn->value().ptr();
        const T* wp = wn->value().ptr();
        ConstMapRM<T> wmat(wp, g.co, g.ck());
        T* dxp = xn->requires_grad ? xn->grad_buffer().ptr() : nullptr;
        T* dwp = wn->requires_grad ? wn->grad_buffer().ptr() : nullptr;
        if (g.pointwise()) {
          for (std::int64_t n = 0; n < g.n; ++n) {
            ConstMapRM<T> dys(dy.ptr() + n * out_sample, g.co, out_chan);
            if (dwp) {
              ConstMapRM<T> xs(xp + n * in_sample, g.c, out_chan);
              MapRM<T>(dwp, g.co, g.ck()).noalias() += dys * xs.transpose();
            }
            if (dxp) {
              MapRM<T>(dxp + n * in_sample, g.c, out_chan).noalias() +=
                  wmat.transpose() * dys;
            }
          }
        } else {
          const std::int64_t chunk = g.chunk_frames();
          std::vector<T> col;
          MatRM<T> dcol;
          for (std::int64_t n = 0; n < g.n; ++n) {
            for (std::int64_t t0 = 0; t0 < g.to; t0 += chunk) {
              const std::int64_t t1 = std::min(g.to, t0 + chunk);
              const std::int64_t ncols = (t1 - t0) * g.out_frame();
              ConstStridedMap<T> dys(dy.ptr() + n * out_sample +
                                         t0 * g.out_frame(),
                                     g.co, ncols, Eigen::OuterStride<>(out_chan));
              if (dwp) {
                col.resize(static_cast<std::size_t>(g.ck() * ncols));
                im2col(xp + n * in_sample, g, t0, t1, col.data());
                ConstMapRM<T> cm(col.data(), g.ck(), ncols);
                MapRM<T>(dwp, g.co, g.ck()).noalias() += dys * cm.transpose();
              }
              if (dxp) {
                dcol.noalias() = wmat.transpose() * dys;
                col2im(dcol.data(), g, t0, t1, dxp + n * in_sample);
              }
            }
          }
        }
        if (bn && bn->requires_grad) {
          T* db = bn->grad_buffer().ptr();
          for (std::int64_t n = 0; n < g.n; ++n) {
            for (std::int64_t co = 0; co < g.co; ++co) {
              const T* d = dy.ptr() + n * out_sample + co * out_chan;
              T acc{0};
              for (std::int64_t i = 0; i < out_chan; ++i) acc += d[i];
              db[co] += acc;
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// pooling

template <typename T>
Var<T> pool3d(Tape<T>& tape, const Var<T>& input, PoolMode mode, Triple window,
              Triple stride, Triple pad) {
  const auto& xd = input.dims();
  require_rank(xd, 5, "pool3d input");
  const char* axes[3] = {"T", "H", "W"};
  Triple outd{};
  for (int i = 0; i < 3; ++i) {
    if (pad[i] >= window[i]) {
      throw ShapeError(axes[i], "pool3d padding must be smaller than window");
    }
    outd[i] = window_out_extent(xd[2 + i], window[i], stride[i], pad[i], axes[i]);
  }
  const std::int64_t planes = xd[0] * xd[1];
  const std::int64_t T_ = xd[2], H = xd[3], W = xd[4];
  Tensor<T> out(Shape{xd[0], xd[1], outd[0], outd[1], outd[2]});
  const std::int64_t out_plane = outd[0] * outd[1] * outd[2];
  const std::int64_t in_plane = T_ * H * W;
  // Max mode: flat input index of the winner per output (-1 if none).
  // Avg mode: number of valid cells per output.
  std::vector<std::int64_t> aux(static_cast<std::size_t>(planes * out_plane), -1);
  const T* xp = input.value().ptr();
  T* op = out.ptr();
  for (std::int64_t p = 0; p < planes; ++p) {
    for (std::int64_t ot = 0; ot < outd[0]; ++ot) {
      for (std::int64_t oh = 0; oh < outd[1]; ++oh) {
        for (std::int64_t ow = 0; ow < outd[2]; ++ow) {
          const std::int64_t oi = ((p * outd[0] + ot) * outd[1] + oh) * outd[2] + ow;
          T best = -std::numeric_limits<T>::infinity();
          std::int64_t arg = -1;
          double acc = 0.0;
          std::int64_t count = 0;
          for (std::int64_t a = 0; a < window[0]; ++a) {
            const std::int64_t it = ot * stride[0] - pad[0] + a;
            if (it < 0 || it >= T_) continue;
            for (std::int64_t b = 0; b < window[1]; ++b) {
              const std::int64_t ih = oh * stride[1] - pad[1] + b;
              if (ih < 0 || ih >= H) continue;
              for (std::int64_t d = 0; d < window[2]; ++d) {
                const std::int64_t iw = ow * stride[2] - pad[2] + d;
                if (iw < 0 || iw >= W) continue;
                const std::int64_t ii = p * in_plane + (it * H + ih) * W + iw;
                if (mode == PoolMode::kMax) {
                  if (xp[ii] > best) {
                    best = xp[ii];
                    arg = ii;
                  }
                } else {
                  acc += xp[ii];
                  ++count;
                }
              }
            }
          }
          if (mode == PoolMode::kMax) {
            op[oi] = arg >= 0 ? best : T{0};
            aux[static_cast<std::size_t>(oi)] = arg;
          } else {
            op[oi] = count ? static_cast<T>(acc / static_cast<double>(count)) : T{0};
            aux[static_cast<std::size_t>(oi)] = count;
          }
        }
      }
    }
  }

  NodePtr<T> xn = input.node();
  return tape.record(
      std::move(out), {&input},
      [xn, mode, window, stride, pad, outd, planes, in_plane, T_, H, W,
       aux = std::move(aux)](const Tensor<T>& dy) {
        T* dx = xn->grad_buffer().ptr();
        const T* g = dy.ptr();
        if (mode == PoolMode::kMax) {
          for (std::size_t oi = 0; oi < aux.size(); ++oi) {
            if (aux[oi] >= 0) dx[aux[oi]] += g[oi];
          }
          return;
        }
        for (std::int64_t p = 0; p < planes; ++p) {
          for (std::int64_t ot = 0; ot < outd[0]; ++ot) {
            for (std::int64_t oh = 0; oh < outd[1]; ++oh) {
              for (std::int64_t ow = 0; ow < outd[2]; ++ow) {
                const std::int64_t oi =
                    ((p * outd[0] + ot) * outd[1] + oh) * outd[2] + ow;
                const std::int64_t count = aux[static_cast<std::size_t>(oi)];
                if (count <= 0) continue;
                const T share = g[oi] / static_cast<T>(count);
                for (std::int64_t a = 0; a < window[0]; ++a) {
                  const std::int64_t it = ot * stride[0] - pad[0] + a;
                  if (it < 0 || it >= T_) continue;
                  for (std::int64_t b = 0; b < window[1]; ++b) {
                    const std::int64_t ih = oh * stride[1] - pad[1] + b;
                    if (ih < 0 || ih >= H) continue;
                    for (std::int64_t d = 0; d < window[2]; ++d) {
                      const std::int64_t iw = ow * stride[2] - pad[2] + d;
                      if (iw < 0 || iw >= W) continue;
                      dx[p * in_plane + (it * H + ih) * W + iw] += share;
                    }
                  }
                }
              }
            }
          }
        }
      });
}

template <typename T>
Var<T> global_avg_pool(Tape<T>& tape, const Var<T>& input) {
  const auto& xd = input.dims();
  require_rank(xd, 5, "global_avg_pool input");
  const std::int64_t n = xd[0], c = xd[1];
  const std::int64_t plane = xd[2] * xd[3] * xd[4];
  Tensor<T> out(Shape{n, c});
  const T* xp = input.value().ptr();
  for (std::int64_t i = 0; i < n * c; ++i) {
    double acc = 0.0;
    for (std::int64_t j = 0; j < plane; ++j) acc += xp[i * plane + j];
    out[static_cast<std::size_t>(i)] = static_cast<T>(acc / static_cast<double>(plane));
  }
  NodePtr<T> xn = input.node();
  return tape.record(std::move(out), {&input},
                     [xn, n, c, plane](const Tensor<T>& dy) {
                       T* dx = xn->grad_buffer().ptr();
                       for (std::int64_t i = 0; i < n * c; ++i) {
                         const T share = dy[static_cast<std::size_t>(i)] /
                                         static_cast<T>(plane);
                         for (std::int64_t j = 0; j < plane; ++j) dx[i * plane + j] += share;
                       }
                     });
}

// ---------------------------------------------------------------------------
// affine

template <typename T>
Var<T> affine(Tape<T>& tape, const Var<T>& input, const Var<T>& weight,
              const OptionalVar<T>& bias) {
  require_rank(input.dims(), 2, "affine input");
  require_rank(weight.dims(), 2, "affine weight");
  const std::int64_t n = input.dim(0), d = input.dim(1);
  const std::int64_t dout = weight.dim(0);
  if (weight.dim(1) != d) {
    throw ShapeError("D", "affine weight expects " + std::to_string(weight.dim(1)) +
                              " features, input has " + std::to_string(d));
  }
  if (bias && bias->dims() != Shape{dout}) {
    throw ShapeError("D_out", "affine bias dims " + shape_str(bias->dims()) +
                                  " do not match " + std::to_string(dout));
  }
  Tensor<T> out(Shape{n, dout});
  ConstMapRM<T> x(input.value().ptr(), n, d);
  ConstMapRM<T> w(weight.value().ptr(), dout, d);
  MapRM<T> o(out.ptr(), n, dout);
  o.noalias() = x * w.transpose();
  if (bias) {
    const T* bp = bias->value().ptr();
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < dout; ++j) o(i, j) += bp[j];
  }
  NodePtr<T> xn = input.node(), wn = weight.node();
  NodePtr<T> bn = bias ? bias->node() : nullptr;
  return tape.record(
      std::move(out), {&input, &weight, bias ? &*bias : nullptr},
      [xn, wn, bn, n, d, dout](const Tensor<T>& dy) {
        ConstMapRM<T> g(dy.ptr(), n, dout);
        if (xn->requires_grad) {
          ConstMapRM<T> w(wn->value().ptr(), dout, d);
          MapRM<T>(xn->grad_buffer().ptr(), n, d).noalias() += g * w;
        }
        if (wn->requires_grad) {
          ConstMapRM<T> x(xn->value().ptr(), n, d);
          MapRM<T>(wn->grad_buffer().ptr(), dout, d).noalias() += g.transpose() * x;
        }
        if (bn && bn->requires_grad) {
          T* db = bn->grad_buffer().ptr();
          for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < dout; ++j) db[j] += g(i, j);
        }
      });
}

// ---------------------------------------------------------------------------
// batch norm

template <typename T>
Var<T> batch_norm3d(Tape<T>& tape, const Var<T>& input, const Var<T>& scale,
                    const Var<T>& shift, BatchNormStats<T>& stats,
                    NormMode mode, double eps) {
  const auto& xd = input.dims();
  require_rank(xd, 5, "batch_norm3d input");
  const std::int64_t n = xd[0], c = xd[1];
  const std::int64_t s = xd[2] * xd[3] * xd[4];
  const std::int64_t m = n * s;
  if (scale.dims() != Shape{c} || shift.dims() != Shape{c}) {
    throw ShapeError("C", "batch_norm3d scale/shift must have " +
                              std::to_string(c) + " channels");
  }
  if (stats.mean.dims() != Shape{c}) {
    throw ShapeError("C", "batch_norm3d running stats channel mismatch");
  }
  if (mode == NormMode::kTrain && m < 2) {
    throw Error(ErrorCode::kValue,
                "batch_norm3d in train mode needs at least 2 values per "
                "channel, got " + std::to_string(m));
  }
  const T* xp = input.value().ptr();
  const T* gp = scale.value().ptr();
  const T* bp = shift.value().ptr();
  Tensor<T> out(xd);
  Tensor<T> xhat(xd);
  std::vector<T> inv_std(static_cast<std::size_t>(c));
  for (std::int64_t ch = 0; ch < c; ++ch) {
    double mu, var;
    if (mode == NormMode::kTrain) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const T* row = xp + (i * c + ch) * s;
        for (std::int64_t j = 0; j < s; ++j) acc += row[j];
      }
      mu = acc / static_cast<double>(m);
      double sq = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const T* row = xp + (i * c + ch) * s;
        for (std::int64_t j = 0; j < s; ++j) {
          const double dv = row[j] - mu;
          sq += dv * dv;
        }
      }
      var = sq / static_cast<double>(m);
      const double unbiased = sq / static_cast<double>(m - 1);
      auto& rm = stats.mean[static_cast<std::size_t>(ch)];
      auto& rv = stats.var[static_cast<std::size_t>(ch)];
      rm = static_cast<T>(kBatchNormMomentum * rm + (1.0 - kBatchNormMomentum) * mu);
      rv = static_cast<T>(kBatchNormMomentum * rv +
                          (1.0 - kBatchNormMomentum) * unbiased);
    } else {
      mu = stats.mean[static_cast<std::size_t>(ch)];
      var = stats.var[static_cast<std::size_t>(ch)];
    }
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(ch)] = static_cast<T>(inv);
    for (std::int64_t i = 0; i < n; ++i) {
      const std::int64_t base = (i * c + ch) * s;
      for (std::int64_t j = 0; j < s; ++j) {
        const T xh = static_cast<T>((xp[base + j] - mu) * inv);
        xhat[static_cast<std::size_t>(base + j)] = xh;
        out[static_cast<std::size_t>(base + j)] = gp[ch] * xh + bp[ch];
      }
    }
  }

  NodePtr<T> xn = input.node(), gn = scale.node(), bn = shift.node();
  return tape.record(
      std::move(out), {&input, &scale, &shift},
      [xn, gn, bn, n, c, s, m, mode, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](const Tensor<T>& dy) {
        const T* g = dy.ptr();
        const T* xh = xhat.ptr();
        const T* gamma = gn->value().ptr();
        T* dx = xn->requires_grad ? xn->grad_buffer().ptr() : nullptr;
        T* dgamma = gn->requires_grad ? gn->grad_buffer().ptr() : nullptr;
        T* dbeta = bn->requires_grad ? bn->grad_buffer().ptr() : nullptr;
        for (std::int64_t ch = 0; ch < c; ++ch) {
          double sum_dy = 0.0, sum_dy_xh = 0.0;
          for (std::int64_t i = 0; i < n; ++i) {
            const std::int64_t base = (i * c + ch) * s;
            for (std::int64_t j = 0; j < s; ++j) {
              sum_dy += g[base + j];
              sum_dy_xh += static_cast<double>(g[base + j]) * xh[base + j];
            }
          }
          if (dgamma) dgamma[ch] += static_cast<T>(sum_dy_xh);
          if (dbeta) dbeta[ch] += static_cast<T>(sum_dy);
          if (!dx) continue;
          const double k = static_cast<double>(gamma[ch]) * inv_std[static_cast<std::size_t>(ch)];
          for (std::int64_t i = 0; i < n; ++i) {
            const std::int64_t base = (i * c + ch) * s;
            for (std::int64_t j = 0; j < s; ++j) {
              if (mode == NormMode::kTrain) {
                const double md = static_cast<double>(m);
                dx[base + j] += static_cast<T>(
                    k / md * (md * g[base + j] - sum_dy - xh[base + j] * sum_dy_xh));
              } else {
                dx[base + j] += static_cast<T>(k * g[base + j]);
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// elementwise and row-wise

template <typename T>
Var<T> relu(Tape<T>& tape, const Var<T>& input) {
  Tensor<T> out(input.dims());
  const T* xp = input.value().ptr();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = xp[i] > T{0} ? xp[i] : T{0};
  NodePtr<T> xn = input.node();
  return tape.record(std::move(out), {&input}, [xn](const Tensor<T>& dy) {
    T* dx = xn->grad_buffer().ptr();
    const T* xp = xn->value().ptr();
    for (std::size_t i = 0; i < dy.numel(); ++i)
      if (xp[i] > T{0}) dx[i] += dy[i];
  });
}

template <typename T>
Var<T> l2_normalize(Tape<T>& tape, const Var<T>& input, double eps) {
  require_rank(input.dims(), 2, "l2_normalize input");
  if (!(eps > 0)) throw Error(ErrorCode::kValue, "l2_normalize eps must be > 0");
  const std::int64_t n = input.dim(0), d = input.dim(1);
  Tensor<T> out(input.dims());
  std::vector<T> norms(static_cast<std::size_t>(n));
  const T* xp = input.value().ptr();
  for (std::int64_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::int64_t j = 0; j < d; ++j) sq += static_cast<double>(xp[i * d + j]) * xp[i * d + j];
    const double norm = std::sqrt(sq);
    if (!(norm >= eps)) {
      throw Error(ErrorCode::kValue, "l2_normalize: row " + std::to_string(i) +
                                         " has norm below eps");
    }
    norms[static_cast<std::size_t>(i)] = static_cast<T>(norm);
    for (std::int64_t j = 0; j < d; ++j)
      out[static_cast<std::size_t>(i * d + j)] = static_cast<T>(xp[i * d + j] / norm);
  }
  NodePtr<T> xn = input.node();
  Tensor<T> y = out;
  return tape.record(std::move(out), {&input},
                     [xn, n, d, y = std::move(y), norms = std::move(norms)](
                         const Tensor<T>& dy) {
                       T* dx = xn->grad_buffer().ptr();
                       for (std::int64_t i = 0; i < n; ++i) {
                         double dot = 0.0;
                         for (std::int64_t j = 0; j < d; ++j)
                           dot += static_cast<double>(y[i * d + j]) * dy[i * d + j];
                         for (std::int64_t j = 0; j < d; ++j) {
                           dx[i * d + j] += static_cast<T>(
                               (dy[i * d + j] - y[i * d + j] * dot) /
                               norms[static_cast<std::size_t>(i)]);
                         }
                       }
                     });
}

template <typename T>
Var<T> softmax(Tape<T>& tape, const Var<T>& input, double temperature) {
  require_rank(input.dims(), 2, "softmax input");
  if (!(temperature > 0)) throw Error(ErrorCode::kValue, "softmax temperature must be > 0");
  const std::int64_t n = input.dim(0), k = input.dim(1);
  Tensor<T> out(input.dims());
  const T* xp = input.value().ptr();
  for (std::int64_t i = 0; i < n; ++i) {
    const T* row = xp + i * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::int64_t j = 0; j < k; ++j) z += std::exp((row[j] - mx) / temperature);
    for (std::int64_t j = 0; j < k; ++j)
      out[static_cast<std::size_t>(i * k + j)] =
          static_cast<T>(std::exp((row[j] - mx) / temperature) / z);
  }
  NodePtr<T> xn = input.node();
  Tensor<T> p = out;
  return tape.record(std::move(out), {&input},
                     [xn, n, k, temperature, p = std::move(p)](const Tensor<T>& dy) {
                       T* dx = xn->grad_buffer().ptr();
                       for (std::int64_t i = 0; i < n; ++i) {
                         double dot = 0.0;
                         for (std::int64_t j = 0; j < k; ++j)
                           dot += static_cast<double>(dy[i * k + j]) * p[i * k + j];
                         for (std::int64_t j = 0; j < k; ++j)
                           dx[i * k + j] += static_cast<T>(
                               p[i * k + j] * (dy[i * k + j] - dot) / temperature);
                       }
                     });
}

template <typename T>
Var<T> cross_entropy_soft(Tape<T>& tape, const Var<T>& logits,
                          const Tensor<T>& target, double temperature) {
  require_rank(logits.dims(), 2, "cross_entropy_soft logits");
  if (target.dims() != logits.dims()) {
    throw ShapeError("K", "cross_entropy_soft target dims " +
                              shape_str(target.dims()) + " vs logits " +
                              shape_str(logits.dims()));
  }
  if (!(temperature > 0)) {
    throw Error(ErrorCode::kValue, "cross_entropy_soft temperature must be > 0");
  }
  const std::int64_t n = logits.dim(0), k = logits.dim(1);
  const T* lp = logits.value().ptr();
  const T* tp = target.ptr();
  std::vector<T> probs(static_cast<std::size_t>(n * k));
  std::vector<T> tsum(static_cast<std::size_t>(n));
  double loss = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    double rs = 0.0;
    for (std::int64_t j = 0; j < k; ++j) {
      const double t = tp[i * k + j];
      if (!(t >= 0.0)) {
        throw Error(ErrorCode::kValue, "cross_entropy_soft: target row " +
                                           std::to_string(i) + " has a negative entry");
      }
      rs += t;
    }
    if (std::abs(rs - 1.0) > 1e-6) {
      throw Error(ErrorCode::kValue, "cross_entropy_soft: target row " +
                                         std::to_string(i) + " sums to " +
                                         std::to_string(rs));
    }
    tsum[static_cast<std::size_t>(i)] = static_cast<T>(rs);
    const T* row = lp + i * k;
    const double mx = *std::max_element(row, row + k) / temperature;
    double z = 0.0;
    for (std::int64_t j = 0; j < k; ++j) z += std::exp(row[j] / temperature - mx);
    const double log_z = std::log(z) + mx;
    for (std::int64_t j = 0; j < k; ++j) {
      const double logp = row[j] / temperature - log_z;
      probs[static_cast<std::size_t>(i * k + j)] = static_cast<T>(std::exp(logp));
      loss -= tp[i * k + j] * logp;
    }
  }
  Tensor<T> out(Shape{1}, static_cast<T>(loss / static_cast<double>(n)));
  NodePtr<T> ln = logits.node();
  return tape.record(
      std::move(out), {&logits},
      [ln, n, k, temperature, target, probs = std::move(probs),
       tsum = std::move(tsum)](const Tensor<T>& dy) {
        T* dl = ln->grad_buffer().ptr();
        const double scale = dy[0] / (temperature * static_cast<double>(n));
        for (std::int64_t i = 0; i < n; ++i)
          for (std::int64_t j = 0; j < k; ++j) {
            const auto idx = static_cast<std::size_t>(i * k + j);
            dl[idx] += static_cast<T>(
                scale * (probs[idx] * tsum[static_cast<std::size_t>(i)] - target[idx]));
          }
      });
}

template <typename T>
Var<T> logistic_loss(Tape<T>& tape, const Var<T>& logits,
                     const std::vector<T>& labels) {
  const auto n = logits.value().numel();
  if (labels.size() != n) {
    throw ShapeError("N", "logistic_loss: " + std::to_string(labels.size()) +
                              " labels for " + std::to_string(n) + " logits");
  }
  const T* lp = logits.value().ptr();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double l = lp[i];
    loss += std::max(l, 0.0) - l * labels[i] + std::log1p(std::exp(-std::abs(l)));
  }
  Tensor<T> out(Shape{1}, static_cast<T>(loss / static_cast<double>(n)));
  NodePtr<T> ln = logits.node();
  return tape.record(std::move(out), {&logits}, [ln, n, labels](const Tensor<T>& dy) {
    T* dl = ln->grad_buffer().ptr();
    const T* lp = ln->value().ptr();
    const T scale = dy[0] / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) dl[i] += scale * (sigmoid(lp[i]) - labels[i]);
  });
}

template <typename T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  if (a.dims() != b.dims()) {
    throw ShapeError("dims", "add: " + shape_str(a.dims()) + " vs " + shape_str(b.dims()));
  }
  Tensor<T> out = a.value();
  add_into(out, b.value());
  NodePtr<T> an = a.node(), bn = b.node();
  return tape.record(std::move(out), {&a, &b}, [an, bn](const Tensor<T>& dy) {
    if (an->requires_grad) add_into(an->grad_buffer(), dy);
    if (bn->requires_grad) add_into(bn->grad_buffer(), dy);
  });
}

template <typename T>
Var<T> mul(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  if (a.dims() != b.dims()) {
    throw ShapeError("dims", "mul: " + shape_str(a.dims()) + " vs " + shape_str(b.dims()));
  }
  Tensor<T> out(a.dims());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
  NodePtr<T> an = a.node(), bn = b.node();
  return tape.record(std::move(out), {&a, &b}, [an, bn](const Tensor<T>& dy) {
    if (an->requires_grad) {
      T* d = an->grad_buffer().ptr();
      for (std::size_t i = 0; i < dy.numel(); ++i) d[i] += dy[i] * bn->value()[i];
    }
    if (bn->requires_grad) {
      T* d = bn->grad_buffer().ptr();
      for (std::size_t i = 0; i < dy.numel(); ++i) d[i] += dy[i] * an->value()[i];
    }
  });
}

template <typename T>
Var<T> scale(Tape<T>& tape, const Var<T>& a, double factor) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v = static_cast<T>(v * factor);
  NodePtr<T> an = a.node();
  return tape.record(std::move(out), {&a}, [an, factor](const Tensor<T>& dy) {
    T* d = an->grad_buffer().ptr();
    for (std::size_t i = 0; i < dy.numel(); ++i) d[i] += static_cast<T>(dy[i] * factor);
  });
}

template <typename T>
Var<T> sum(Tape<T>& tape, const Var<T>& a) {
  double acc = 0.0;
  for (auto v : a.value().data()) acc += v;
  NodePtr<T> an = a.node();
  return tape.record(Tensor<T>(Shape{1}, static_cast<T>(acc)), {&a},
                     [an](const Tensor<T>& dy) {
                       for (auto& v : an->grad_buffer().data()) v += dy[0];
                     });
}

template <typename T>
Var<T> mean(Tape<T>& tape, const Var<T>& a) {
  return scale(tape, sum(tape, a), 1.0 / static_cast<double>(a.value().numel()));
}

template <typename T>
Var<T> reshape(Tape<T>& tape, const Var<T>& a, Shape dims) {
  Tensor<T> out = a.value().reshaped(std::move(dims));
  NodePtr<T> an = a.node();
  return tape.record(std::move(out), {&a}, [an](const Tensor<T>& dy) {
    auto d = an->grad_buffer().data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
  });
}

template <typename T>
Var<T> concat_cols(Tape<T>& tape, const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw Error(ErrorCode::kValue, "concat_cols: no inputs");
  const std::int64_t n = parts[0].dim(0);
  std::int64_t total = 0;
  for (const auto& p : parts) {
    require_rank(p.dims(), 2, "concat_cols input");
    if (p.dim(0) != n) throw ShapeError("N", "concat_cols: row count mismatch");
    total += p.dim(1);
  }
  Tensor<T> out(Shape{n, total});
  std::int64_t off = 0;
  for (const auto& p : parts) {
    const std::int64_t d = p.dim(1);
    for (std::int64_t i = 0; i < n; ++i)
      std::copy_n(p.value().ptr() + i * d, d, out.ptr() + i * total + off);
    off += d;
  }
  std::vector<NodePtr<T>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  // record() decides from its inputs whether to keep the node; any part that
  // requires a gradient is enough.
  const Var<T>* witness = &parts[0];
  for (const auto& p : parts)
    if (p.requires_grad()) witness = &p;
  return tape.record(std::move(out), {witness},
                     [nodes, n, total](const Tensor<T>& dy) {
                       std::int64_t off = 0;
                       for (const auto& node : nodes) {
                         const std::int64_t d = node->value().dim(1);
                         if (node->requires_grad) {
                           T* g = node->grad_buffer().ptr();
                           for (std::int64_t i = 0; i < n; ++i)
                             for (std::int64_t j = 0; j < d; ++j)
                               g[i * d + j] += dy[static_cast<std::size_t>(i * total + off + j)];
                         }
                         off += d;
                       }
                     });
}

template <typename T>
Var<T> slice_rows(Tape<T>& tape, const Var<T>& a, std::int64_t begin,
                  std::int64_t end) {
  const auto& ad = a.dims();
  if (ad.empty() || begin < 0 || end > ad[0] || begin >= end) {
    throw ShapeError("N", "slice_rows: invalid range [" + std::to_string(begin) +
                              "," + std::to_string(end) + ") for dims " + shape_str(ad));
  }
  Shape od = ad;
  od[0] = end - begin;
  const std::size_t row = shape_numel(ad) / static_cast<std::size_t>(ad[0]);
  Tensor<T> out(od);
  std::copy_n(a.value().ptr() + static_cast<std::size_t>(begin) * row, out.numel(), out.ptr());
  NodePtr<T> an = a.node();
  return tape.record(std::move(out), {&a}, [an, begin, row](const Tensor<T>& dy) {
    T* d = an->grad_buffer().ptr() + static_cast<std::size_t>(begin) * row;
    for (std::size_t i = 0; i < dy.numel(); ++i) d[i] += dy[i];
  });
}

template <typename T>
Var<T> detach(Tape<T>& tape, const Var<T>& a) {
  return tape.constant(a.value());
}

#define EBUS_INSTANTIATE_OPS(T)                                                  \
  template Var<T> conv3d(Tape<T>&, const Var<T>&, const Var<T>&,                 \
                         const OptionalVar<T>&, Triple, Triple);          \
  template Var<T> pool3d(Tape<T>&, const Var<T>&, PoolMode, Triple, Triple,      \
                         Triple);                                                \
  template Var<T> global_avg_pool(Tape<T>&, const Var<T>&);                      \
  template Var<T> affine(Tape<T>&, const Var<T>&, const Var<T>&,                 \
                         const OptionalVar<T>&);                          \
  template Var<T> batch_norm3d(Tape<T>&, const Var<T>&, const Var<T>&,           \
                               const Var<T>&, BatchNormStats<T>&, NormMode,      \
                               double);                                          \
  template Var<T> relu(Tape<T>&, const Var<T>&);                                 \
  template Var<T> l2_normalize(Tape<T>&, const Var<T>&, double);                 \
  template Var<T> softmax(Tape<T>&, const Var<T>&, double);                      \
  template Var<T> cross_entropy_soft(Tape<T>&, const Var<T>&, const Tensor<T>&,  \
                                     double);                                    \
  template Var<T> logistic_loss(Tape<T>&, const Var<T>&, const std::vector<T>&); \
  template Var<T> add(Tape<T>&, const Var<T>&, const Var<T>&);                   \
  template Var<T> mul(Tape<T>&, const Var<T>&, const Var<T>&);                   \
  template Var<T> scale(Tape<T>&, const Var<T>&, double);                        \
  template Var<T> sum(Tape<T>&, const Var<T>&);                                  \
  template Var<T> mean(Tape<T>&, const Var<T>&);                                 \
  template Var<T> reshape(Tape<T>&, const Var<T>&, Shape);                       \
  template Var<T> concat_cols(Tape<T>&, const std::vector<Var<T>>&);             \
  template Var<T> slice_rows(Tape<T>&, const Var<T>&, std::int64_t,              \
                             std::int64_t);                                      \
  template Var<T> detach(Tape<T>&, const Var<T>&);

EBUS_INSTANTIATE_OPS(float)
EBUS_INSTANTIATE_OPS(double)

#undef EBUS_INSTANTIATE_OPS

}  // namespace ebus
