#pragma once

#include <cmath>
#include <cstring>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

#include "core/parallel.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

// Differentiable layer set: 2-D convolution and transposed convolution
// (cross-correlation semantics, im2col + GEMM), batch normalization, ELU,
// a fixed-matrix projection, Glorot init and Adam. Every backward pass is
// exact for the corresponding forward map.
//
// The *_into / *_inplace / *_acc variants write into caller-owned buffers so
// the training loop runs allocation-free after the first batch; the plain
// variants allocate and are the convenient form for small inputs and tests.

namespace esi::nn {

struct Stride {
  int h = 1, w = 1;
};
struct Pad {
  int h = 0, w = 0;
};

inline int conv_out_dim(int n, int k, int s, int p) { return (n + 2 * p - k) / s + 1; }
inline int tconv_out_dim(int n, int k, int s, int p) { return (n - 1) * s - 2 * p + k; }

template <typename T>
struct ConvKernel {
  int kh = 1, kw = 1, ci = 1, co = 1;
  std::vector<T> w;     // (kh, kw, ci, co) row-major
  std::vector<T> bias;  // co
};

// Transposed-convolution weights. ci/co are this op's input/output channel
// counts; the flat layout (kh, kw, co, ci) equals the layout of the adjoint
// convolution's kernel, so a conv kernel and a tconv kernel sharing the same
// array are adjoint maps.
template <typename T>
struct TconvKernel {
  int kh = 1, kw = 1, ci = 1, co = 1;
  std::vector<T> w;     // (kh, kw, co, ci) row-major
  std::vector<T> bias;  // co
};

// Reshape without zero-filling new storage (contents unspecified).
template <typename T>
void ensure_shape(Tensor4<T>& t, int b, int h, int w, int c) {
  if (t.b == b && t.h == h && t.w == w && t.c == c) return;
  t.b = b;
  t.h = h;
  t.w = w;
  t.c = c;
  t.v.resize(std::size_t(b) * h * w * c);
}

namespace detail {

template <typename T>
std::vector<T>& lane_scratch(int lane) {
  static thread_local std::vector<T> buf;
  (void)lane;
  return buf;
}

// Patch matrix of one sample: (Ho*Wo) x (kh*kw*C), zero-padded borders.
template <typename T>
void im2col(const T* x, int H, int W, int C, int kh, int kw, int sh, int sw, int ph, int pw,
            int Ho, int Wo, T* col) {
  const std::size_t row_len = std::size_t(kh) * kw * C;
  for (int oh = 0; oh < Ho; ++oh) {
    const int ih0 = oh * sh - ph;
    for (int ow = 0; ow < Wo; ++ow) {
      const int iw0 = ow * sw - pw;
      T* dst = col + (std::size_t(oh) * Wo + ow) * row_len;
      for (int i = 0; i < kh; ++i) {
        const int ih = ih0 + i;
        T* drow = dst + std::size_t(i) * kw * C;
        if (ih < 0 || ih >= H) {
          std::memset(drow, 0, std::size_t(kw) * C * sizeof(T));
          continue;
        }
        const int j0 = std::max(0, -iw0);
        const int j1 = std::min(kw, W - iw0);
        if (j0 > 0) std::memset(drow, 0, std::size_t(j0) * C * sizeof(T));
        if (j1 < kw) std::memset(drow + std::size_t(j1) * C, 0, std::size_t(kw - j1) * C * sizeof(T));
        if (j1 > j0)
          std::memcpy(drow + std::size_t(j0) * C, x + (std::size_t(ih) * W + (iw0 + j0)) * C,
                      std::size_t(j1 - j0) * C * sizeof(T));
      }
    }
  }
}

// Adjoint of im2col: scatter-adds patch rows back into the image.
template <typename T>
void col2im_add(const T* col, int H, int W, int C, int kh, int kw, int sh, int sw, int ph, int pw,
                int Ho, int Wo, T* x) {
  const std::size_t row_len = std::size_t(kh) * kw * C;
  for (int oh = 0; oh < Ho; ++oh) {
    const int ih0 = oh * sh - ph;
    for (int ow = 0; ow < Wo; ++ow) {
      const int iw0 = ow * sw - pw;
      const T* src = col + (std::size_t(oh) * Wo + ow) * row_len;
      for (int i = 0; i < kh; ++i) {
        const int ih = ih0 + i;
        if (ih < 0 || ih >= H) continue;
        const int j0 = std::max(0, -iw0);
        const int j1 = std::min(kw, W - iw0);
        if (j1 <= j0) continue;
        const T* srow = src + (std::size_t(i) * kw + j0) * C;
        T* xrow = x + (std::size_t(ih) * W + (iw0 + j0)) * C;
        const std::size_t n = std::size_t(j1 - j0) * C;
        for (std::size_t q = 0; q < n; ++q) xrow[q] += srow[q];
      }
    }
  }
}

template <typename T>
void check_conv_shapes(const Tensor4<T>& x, int kh, int kw, int ci, Stride s, Pad p) {
  if (x.c != ci) raise(ErrorCode::ShapeError, "input channels do not match kernel");
  if (s.h < 1 || s.w < 1) raise(ErrorCode::ShapeError, "stride must be positive");
  if (p.h < 0 || p.w < 0) raise(ErrorCode::ShapeError, "padding must be non-negative");
  if (kh > x.h + 2 * p.h || kw > x.w + 2 * p.w)
    raise(ErrorCode::ShapeError, "kernel does not fit the padded input");
}

}  // namespace detail

template <typename T>
void conv2d_forward_into(const Tensor4<T>& x, const ConvKernel<T>& k, Stride s, Pad p,
                         Tensor4<T>& y) {
  detail::check_conv_shapes(x, k.kh, k.kw, k.ci, s, p);
  const int ho = conv_out_dim(x.h, k.kh, s.h, p.h);
  const int wo = conv_out_dim(x.w, k.kw, s.w, p.w);
  if (ho < 1 || wo < 1) raise(ErrorCode::ShapeError, "non-positive convolution output size");

  ensure_shape(y, x.b, ho, wo, k.co);
  const std::size_t rows = std::size_t(ho) * wo;
  const std::size_t kcols = std::size_t(k.kh) * k.kw * k.ci;
  Eigen::Map<const RowMat<T>> kmat(k.w.data(), Eigen::Index(kcols), k.co);
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bias(k.bias.data(), k.co);

  parallel_chunks(std::size_t(x.b), [&](int lane, std::size_t lo, std::size_t hi) {
    auto& scratch = detail::lane_scratch<T>(lane);
    scratch.resize(rows * kcols);
    for (std::size_t b = lo; b < hi; ++b) {
      detail::im2col(x.sample(int(b)), x.h, x.w, x.c, k.kh, k.kw, s.h, s.w, p.h, p.w, ho, wo,
                     scratch.data());
      Eigen::Map<const RowMat<T>> col(scratch.data(), Eigen::Index(rows), Eigen::Index(kcols));
      Eigen::Map<RowMat<T>> yb(y.sample(int(b)), Eigen::Index(rows), k.co);
      yb.noalias() = col * kmat;
      yb.rowwise() += bias;
    }
  });
}

template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& x, const ConvKernel<T>& k, Stride s, Pad p) {
  Tensor4<T> y;
  conv2d_forward_into(x, k, s, p, y);
  return y;
}

template <typename T>
struct ConvGrads {
  Tensor4<T> input;
  std::vector<T> kernel;
  std::vector<T> bias;
};

// Accumulates kernel/bias gradients into kernel_acc/bias_acc; writes the
// input gradient into *grad_input when non-null.
template <typename T>
void conv2d_backward_acc(const Tensor4<T>& grad_out, const Tensor4<T>& x, const ConvKernel<T>& k,
                         Stride s, Pad p, Tensor4<T>* grad_input, std::vector<T>& kernel_acc,
                         std::vector<T>& bias_acc) {
  detail::check_conv_shapes(x, k.kh, k.kw, k.ci, s, p);
  const int ho = conv_out_dim(x.h, k.kh, s.h, p.h);
  const int wo = conv_out_dim(x.w, k.kw, s.w, p.w);
  if (grad_out.b != x.b || grad_out.h != ho || grad_out.w != wo || grad_out.c != k.co)
    raise(ErrorCode::ShapeError, "grad_out does not match the forward output shape");
  if (kernel_acc.size() != k.w.size() || bias_acc.size() != k.bias.size())
    raise(ErrorCode::ShapeError, "gradient accumulators disagree with the kernel");

  const std::size_t rows = std::size_t(ho) * wo;
  const std::size_t kcols = std::size_t(k.kh) * k.kw * k.ci;
  Eigen::Map<const RowMat<T>> kmat(k.w.data(), Eigen::Index(kcols), k.co);

  if (grad_input) {
    ensure_shape(*grad_input, x.b, x.h, x.w, x.c);
    std::memset(grad_input->data(), 0, grad_input->size() * sizeof(T));
  }

  const int lanes = max_lanes();
  std::vector<std::vector<T>> lane_kernel(static_cast<std::size_t>(lanes));
  std::vector<std::vector<T>> lane_bias(static_cast<std::size_t>(lanes));

  parallel_chunks(std::size_t(x.b), [&](int lane, std::size_t lo, std::size_t hi) {
    auto& scratch = detail::lane_scratch<T>(lane);
    scratch.resize(2 * rows * kcols);
    T* col = scratch.data();
    T* gcol = scratch.data() + rows * kcols;
    auto& kg = lane_kernel[std::size_t(lane)];
    auto& bg = lane_bias[std::size_t(lane)];
    kg.assign(k.w.size(), T(0));
    bg.assign(k.bias.size(), T(0));
    Eigen::Map<RowMat<T>> kgm(kg.data(), Eigen::Index(kcols), k.co);
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> bgm(bg.data(), k.co);

    for (std::size_t b = lo; b < hi; ++b) {
      Eigen::Map<const RowMat<T>> gb(grad_out.sample(int(b)), Eigen::Index(rows), k.co);
      detail::im2col(x.sample(int(b)), x.h, x.w, x.c, k.kh, k.kw, s.h, s.w, p.h, p.w, ho, wo, col);
      Eigen::Map<const RowMat<T>> colm(col, Eigen::Index(rows), Eigen::Index(kcols));
      kgm.noalias() += colm.transpose() * gb;
      bgm += gb.colwise().sum();

      if (grad_input) {
        Eigen::Map<RowMat<T>> gcolm(gcol, Eigen::Index(rows), Eigen::Index(kcols));
        gcolm.noalias() = gb * kmat.transpose();
        detail::col2im_add(gcol, x.h, x.w, x.c, k.kh, k.kw, s.h, s.w, p.h, p.w, ho, wo,
                           grad_input->sample(int(b)));
      }
    }
  });

  // Combine per-lane partials in lane order so accumulation is reproducible.
  for (int lane = 0; lane < lanes; ++lane) {
    if (lane_kernel[std::size_t(lane)].empty()) continue;
    for (std::size_t i = 0; i < kernel_acc.size(); ++i)
      kernel_acc[i] += lane_kernel[std::size_t(lane)][i];
    for (std::size_t i = 0; i < bias_acc.size(); ++i) bias_acc[i] += lane_bias[std::size_t(lane)][i];
  }
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& grad_out, const Tensor4<T>& x, const ConvKernel<T>& k,
                             Stride s, Pad p) {
  ConvGrads<T> g;
  g.kernel.assign(k.w.size(), T(0));
  g.bias.assign(k.bias.size(), T(0));
  conv2d_backward_acc(grad_out, x, k, s, p, &g.input, g.kernel, g.bias);
  return g;
}

template <typename T>
void tconv2d_forward_into(const Tensor4<T>& x, const TconvKernel<T>& k, Stride s, Pad p,
                          Tensor4<T>& y) {
  if (x.c != k.ci) raise(ErrorCode::ShapeError, "input channels do not match kernel");
  const int ho = tconv_out_dim(x.h, k.kh, s.h, p.h);
  const int wo = tconv_out_dim(x.w, k.kw, s.w, p.w);
  if (ho < 1 || wo < 1) raise(ErrorCode::ShapeError, "non-positive transposed-convolution output size");

  ensure_shape(y, x.b, ho, wo, k.co);
  const std::size_t rows = std::size_t(x.h) * x.w;  // adjoint conv output positions
  const std::size_t kcols = std::size_t(k.kh) * k.kw * k.co;
  Eigen::Map<const RowMat<T>> kmat(k.w.data(), Eigen::Index(kcols), k.ci);
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bias(k.bias.data(), k.co);

  parallel_chunks(std::size_t(x.b), [&](int lane, std::size_t lo, std::size_t hi) {
    auto& scratch = detail::lane_scratch<T>(lane);
    scratch.resize(rows * kcols);
    for (std::size_t b = lo; b < hi; ++b) {
      Eigen::Map<const RowMat<T>> xb(x.sample(int(b)), Eigen::Index(rows), k.ci);
      Eigen::Map<RowMat<T>> colm(scratch.data(), Eigen::Index(rows), Eigen::Index(kcols));
      colm.noalias() = xb * kmat.transpose();
      T* yb = y.sample(int(b));
      std::memset(yb, 0, y.sample_size() * sizeof(T));
      detail::col2im_add(scratch.data(), ho, wo, k.co, k.kh, k.kw, s.h, s.w, p.h, p.w, x.h, x.w, yb);
      Eigen::Map<RowMat<T>> ym(yb, Eigen::Index(std::size_t(ho) * wo), k.co);
      ym.rowwise() += bias;
    }
  });
}

template <typename T>
Tensor4<T> tconv2d_forward(const Tensor4<T>& x, const TconvKernel<T>& k, Stride s, Pad p) {
  Tensor4<T> y;
  tconv2d_forward_into(x, k, s, p, y);
  return y;
}

template <typename T>
void tconv2d_backward_acc(const Tensor4<T>& grad_out, const Tensor4<T>& x, const TconvKernel<T>& k,
                          Stride s, Pad p, Tensor4<T>* grad_input, std::vector<T>& kernel_acc,
                          std::vector<T>& bias_acc) {
  const int ho = tconv_out_dim(x.h, k.kh, s.h, p.h);
  const int wo = tconv_out_dim(x.w, k.kw, s.w, p.w);
  if (grad_out.b != x.b || grad_out.h != ho || grad_out.w != wo || grad_out.c != k.co)
    raise(ErrorCode::ShapeError, "grad_out does not match the forward output shape");
  if (kernel_acc.size() != k.w.size() || bias_acc.size() != k.bias.size())
    raise(ErrorCode::ShapeError, "gradient accumulators disagree with the kernel");

  const std::size_t rows = std::size_t(x.h) * x.w;
  const std::size_t kcols = std::size_t(k.kh) * k.kw * k.co;
  Eigen::Map<const RowMat<T>> kmat(k.w.data(), Eigen::Index(kcols), k.ci);

  if (grad_input) ensure_shape(*grad_input, x.b, x.h, x.w, x.c);

  const int lanes = max_lanes();
  std::vector<std::vector<T>> lane_kernel(static_cast<std::size_t>(lanes));
  std::vector<std::vector<T>> lane_bias(static_cast<std::size_t>(lanes));

  parallel_chunks(std::size_t(x.b), [&](int lane, std::size_t lo, std::size_t hi) {
    auto& scratch = detail::lane_scratch<T>(lane);
    scratch.resize(rows * kcols);
    auto& kg = lane_kernel[std::size_t(lane)];
    auto& bg = lane_bias[std::size_t(lane)];
    kg.assign(k.w.size(), T(0));
    bg.assign(k.bias.size(), T(0));
    Eigen::Map<RowMat<T>> kgm(kg.data(), Eigen::Index(kcols), k.ci);
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> bgm(bg.data(), k.co);

    for (std::size_t b = lo; b < hi; ++b) {
      // grad wrt input: forward convolution of grad_out with the same kernel
      detail::im2col(grad_out.sample(int(b)), ho, wo, k.co, k.kh, k.kw, s.h, s.w, p.h, p.w, x.h, x.w,
                     scratch.data());
      Eigen::Map<const RowMat<T>> gcol(scratch.data(), Eigen::Index(rows), Eigen::Index(kcols));
      if (grad_input) {
        Eigen::Map<RowMat<T>> gx(grad_input->sample(int(b)), Eigen::Index(rows), k.ci);
        gx.noalias() = gcol * kmat;
      }

      Eigen::Map<const RowMat<T>> xb(x.sample(int(b)), Eigen::Index(rows), k.ci);
      kgm.noalias() += gcol.transpose() * xb;

      Eigen::Map<const RowMat<T>> gb(grad_out.sample(int(b)), Eigen::Index(std::size_t(ho) * wo),
                                     k.co);
      bgm += gb.colwise().sum();
    }
  });

  for (int lane = 0; lane < lanes; ++lane) {
    if (lane_kernel[std::size_t(lane)].empty()) continue;
    for (std::size_t i = 0; i < kernel_acc.size(); ++i)
      kernel_acc[i] += lane_kernel[std::size_t(lane)][i];
    for (std::size_t i = 0; i < bias_acc.size(); ++i) bias_acc[i] += lane_bias[std::size_t(lane)][i];
  }
}

template <typename T>
ConvGrads<T> tconv2d_backward(const Tensor4<T>& grad_out, const Tensor4<T>& x,
                              const TconvKernel<T>& k, Stride s, Pad p) {
  ConvGrads<T> g;
  g.kernel.assign(k.w.size(), T(0));
  g.bias.assign(k.bias.size(), T(0));
  tconv2d_backward_acc(grad_out, x, k, s, p, &g.input, g.kernel, g.bias);
  return g;
}

template <typename T>
struct BatchNormParams {
  std::vector<T> gamma, beta, running_mean, running_var;
  T momentum = T(0.99);
  T epsilon = T(1e-3);

  void init(int channels) {
    gamma.assign(std::size_t(channels), T(1));
    beta.assign(std::size_t(channels), T(0));
    running_mean.assign(std::size_t(channels), T(0));
    running_var.assign(std::size_t(channels), T(1));
  }
  int channels() const { return int(gamma.size()); }
};

template <typename T>
struct BatchNormCache {
  std::vector<T> inv_std;  // batch statistics
  Tensor4<T> xhat;
  bool training = false;
};

// Training-mode BN, normalizing x in place. Batch statistics land in the
// cache, running statistics update by momentum.
template <typename T>
void batchnorm_forward_train_inplace(Tensor4<T>& x, BatchNormParams<T>& p,
                                     BatchNormCache<T>& cache) {
  const int c = p.channels();
  if (x.c != c) raise(ErrorCode::ShapeError, "channel count does not match BN params");
  if (x.b < 2) raise(ErrorCode::BatchTooSmall, "batch normalization needs batch >= 2 in training");
  const std::size_t rows = x.size() / std::size_t(c);
  T* data = x.data();

  // Single stats pass with per-lane double accumulators, merged in lane order.
  const int lanes = max_lanes();
  std::vector<std::vector<double>> partial(static_cast<std::size_t>(lanes));
  parallel_chunks(rows, [&](int lane, std::size_t lo, std::size_t hi) {
    auto& acc = partial[std::size_t(lane)];
    acc.assign(2 * std::size_t(c), 0.0);
    for (std::size_t r = lo; r < hi; ++r) {
      const T* row = data + r * std::size_t(c);
      for (int j = 0; j < c; ++j) {
        const double v = double(row[j]);
        acc[std::size_t(j)] += v;
        acc[std::size_t(c + j)] += v * v;
      }
    }
  });
  std::vector<double> sum(std::size_t(c), 0.0), sumsq(std::size_t(c), 0.0);
  for (int lane = 0; lane < lanes; ++lane) {
    if (partial[std::size_t(lane)].empty()) continue;
    for (int j = 0; j < c; ++j) {
      sum[std::size_t(j)] += partial[std::size_t(lane)][std::size_t(j)];
      sumsq[std::size_t(j)] += partial[std::size_t(lane)][std::size_t(c + j)];
    }
  }

  std::vector<T> mean(std::size_t(c), T(0)), var(std::size_t(c), T(0)), inv_std(std::size_t(c), T(0));
  const double inv_m = 1.0 / double(rows);
  for (int j = 0; j < c; ++j) {
    const double mu = sum[std::size_t(j)] * inv_m;
    const double v = std::max(0.0, sumsq[std::size_t(j)] * inv_m - mu * mu);
    mean[std::size_t(j)] = T(mu);
    var[std::size_t(j)] = T(v);
    inv_std[std::size_t(j)] = T(1.0 / std::sqrt(v + double(p.epsilon)));
  }

  cache.training = true;
  cache.inv_std = inv_std;
  ensure_shape(cache.xhat, x.b, x.h, x.w, x.c);
  T* xhat = cache.xhat.data();

  parallel_chunks(rows, [&](int, std::size_t lo, std::size_t hi) {
    for (std::size_t r = lo; r < hi; ++r) {
      T* row = data + r * std::size_t(c);
      T* hrow = xhat + r * std::size_t(c);
      for (int j = 0; j < c; ++j) {
        const T h = (row[j] - mean[std::size_t(j)]) * inv_std[std::size_t(j)];
        hrow[j] = h;
        row[j] = p.gamma[std::size_t(j)] * h + p.beta[std::size_t(j)];
      }
    }
  });

  for (int j = 0; j < c; ++j) {
    p.running_mean[std::size_t(j)] =
        p.momentum * p.running_mean[std::size_t(j)] + (T(1) - p.momentum) * mean[std::size_t(j)];
    p.running_var[std::size_t(j)] =
        p.momentum * p.running_var[std::size_t(j)] + (T(1) - p.momentum) * var[std::size_t(j)];
  }
}

// Inference-mode BN (running statistics), in place. Touches no state.
template <typename T>
void batchnorm_infer_inplace(Tensor4<T>& x, const BatchNormParams<T>& p) {
  const int c = p.channels();
  if (x.c != c) raise(ErrorCode::ShapeError, "channel count does not match BN params");
  const std::size_t rows = x.size() / std::size_t(c);
  std::vector<T> scale(std::size_t(c), T(0)), shift(std::size_t(c), T(0));
  for (int j = 0; j < c; ++j) {
    const T s = p.gamma[std::size_t(j)] / std::sqrt(p.running_var[std::size_t(j)] + p.epsilon);
    scale[std::size_t(j)] = s;
    shift[std::size_t(j)] = p.beta[std::size_t(j)] - s * p.running_mean[std::size_t(j)];
  }
  T* data = x.data();
  parallel_chunks(rows, [&](int, std::size_t lo, std::size_t hi) {
    for (std::size_t r = lo; r < hi; ++r) {
      T* row = data + r * std::size_t(c);
      for (int j = 0; j < c; ++j) row[j] = scale[std::size_t(j)] * row[j] + shift[std::size_t(j)];
    }
  });
}

template <typename T>
Tensor4<T> batchnorm_forward(const Tensor4<T>& x, BatchNormParams<T>& p, bool training,
                             BatchNormCache<T>* cache = nullptr) {
  Tensor4<T> y = x;
  if (training) {
    BatchNormCache<T> local;
    batchnorm_forward_train_inplace(y, p, cache ? *cache : local);
  } else {
    batchnorm_infer_inplace(y, p);
    if (cache) cache->training = false;
  }
  return y;
}

template <typename T>
struct BatchNormGrads {
  Tensor4<T> input;
  std::vector<T> gamma, beta;
};

// Training-mode BN backward, writing the input gradient over grad_out in
// place and accumulating the gamma/beta gradients.
template <typename T>
void batchnorm_backward_acc(Tensor4<T>& grad_out, const BatchNormParams<T>& p,
                            const BatchNormCache<T>& cache, std::vector<T>& gamma_acc,
                            std::vector<T>& beta_acc) {
  if (!cache.training)
    raise(ErrorCode::InvalidArgument, "batchnorm backward requires a training-mode cache");
  const int c = p.channels();
  if (grad_out.c != c || !grad_out.same_shape(cache.xhat))
    raise(ErrorCode::ShapeError, "grad_out does not match the cached activation shape");
  if (gamma_acc.size() != std::size_t(c) || beta_acc.size() != std::size_t(c))
    raise(ErrorCode::ShapeError, "gradient accumulators disagree with BN params");
  const std::size_t rows = grad_out.size() / std::size_t(c);
  T* gp = grad_out.data();
  const T* hp = cache.xhat.data();

  const int lanes = max_lanes();
  std::vector<std::vector<double>> partial(static_cast<std::size_t>(lanes));
  parallel_chunks(rows, [&](int lane, std::size_t lo, std::size_t hi) {
    auto& acc = partial[std::size_t(lane)];
    acc.assign(2 * std::size_t(c), 0.0);
    for (std::size_t r = lo; r < hi; ++r) {
      const T* grow = gp + r * std::size_t(c);
      const T* hrow = hp + r * std::size_t(c);
      for (int j = 0; j < c; ++j) {
        acc[std::size_t(j)] += double(grow[j]);
        acc[std::size_t(c + j)] += double(grow[j]) * double(hrow[j]);
      }
    }
  });
  std::vector<T> gsum(std::size_t(c), T(0)), gxsum(std::size_t(c), T(0));
  for (int lane = 0; lane < lanes; ++lane) {
    if (partial[std::size_t(lane)].empty()) continue;
    for (int j = 0; j < c; ++j) {
      gsum[std::size_t(j)] += T(partial[std::size_t(lane)][std::size_t(j)]);
      gxsum[std::size_t(j)] += T(partial[std::size_t(lane)][std::size_t(c + j)]);
    }
  }
  for (int j = 0; j < c; ++j) {
    beta_acc[std::size_t(j)] += gsum[std::size_t(j)];
    gamma_acc[std::size_t(j)] += gxsum[std::size_t(j)];
  }

  const T inv_m = T(1) / T(rows);
  std::vector<T> coeff(std::size_t(c), T(0)), mean_g(std::size_t(c), T(0)), mean_gx(std::size_t(c), T(0));
  for (int j = 0; j < c; ++j) {
    coeff[std::size_t(j)] = p.gamma[std::size_t(j)] * cache.inv_std[std::size_t(j)];
    mean_g[std::size_t(j)] = gsum[std::size_t(j)] * inv_m;
    mean_gx[std::size_t(j)] = gxsum[std::size_t(j)] * inv_m;
  }
  parallel_chunks(rows, [&](int, std::size_t lo, std::size_t hi) {
    for (std::size_t r = lo; r < hi; ++r) {
      T* grow = gp + r * std::size_t(c);
      const T* hrow = hp + r * std::size_t(c);
      for (int j = 0; j < c; ++j)
        grow[j] = coeff[std::size_t(j)] *
                  (grow[j] - mean_g[std::size_t(j)] - hrow[j] * mean_gx[std::size_t(j)]);
    }
  });
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor4<T>& grad_out, const BatchNormParams<T>& p,
                                     const BatchNormCache<T>& cache) {
  BatchNormGrads<T> g;
  g.gamma.assign(p.gamma.size(), T(0));
  g.beta.assign(p.beta.size(), T(0));
  g.input = grad_out;
  batchnorm_backward_acc(g.input, p, cache, g.gamma, g.beta);
  return g;
}

// x > 0 -> x; x <= 0 -> exp(x) - 1 (alpha = 1). The float path uses the
// branchless identity max(x, 0) + (exp(min(x, 0)) - 1) so Eigen's packet exp
// applies; the double path keeps expm1 for the gradient suite.
template <typename T>
void elu_forward_inplace(Tensor4<T>& x) {
  T* data = x.data();
  parallel_chunks_granular(x.size(), 64, [&](int, std::size_t lo, std::size_t hi) {
    if constexpr (std::is_same_v<T, float>) {
      Eigen::Map<Eigen::ArrayXf> seg(data + lo, Eigen::Index(hi - lo));
      seg = seg.max(0.0f) + (seg.min(0.0f).exp() - 1.0f);
    } else {
      for (std::size_t i = lo; i < hi; ++i)
        if (data[i] <= T(0)) data[i] = std::expm1(data[i]);
    }
  });
}

template <typename T>
Tensor4<T> elu_forward(const Tensor4<T>& x) {
  Tensor4<T> y = x;
  elu_forward_inplace(y);
  return y;
}

// Gradient through ELU given its cached output, written over grad_out.
// d = y > 0 ? 1 : y + 1, which is min(y + 1, 1) since y + 1 <= 1 iff y <= 0.
template <typename T>
void elu_backward_inplace(Tensor4<T>& grad_out, const Tensor4<T>& y) {
  if (!grad_out.same_shape(y)) raise(ErrorCode::ShapeError, "elu grad shape mismatch");
  T* g = grad_out.data();
  const T* yv = y.data();
  parallel_chunks_granular(y.size(), 64, [&](int, std::size_t lo, std::size_t hi) {
    using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
    Eigen::Map<Arr> gs(g + lo, Eigen::Index(hi - lo));
    Eigen::Map<const Arr> ys(yv + lo, Eigen::Index(hi - lo));
    gs *= (ys + T(1)).min(T(1));
  });
}

template <typename T>
Tensor4<T> elu_backward(const Tensor4<T>& grad_out, const Tensor4<T>& y) {
  Tensor4<T> g = grad_out;
  elu_backward_inplace(g, y);
  return g;
}

// Fixed linear projection of each sample: (B, rows_in, T, 1) -> (B, rows_out, T, 1)
// with y_b = M x_b. M is constant and carries no gradient.
template <typename T>
void fixed_matmul_forward_into(const Tensor4<T>& x, const RowMat<T>& m, Tensor4<T>& y) {
  if (x.c != 1 || x.h != m.cols())
    raise(ErrorCode::ShapeError, "fixed matmul expects (B, " + std::to_string(m.cols()) + ", T, 1)");
  ensure_shape(y, x.b, int(m.rows()), x.w, 1);
  parallel_chunks(std::size_t(x.b), [&](int, std::size_t lo, std::size_t hi) {
    for (std::size_t b = lo; b < hi; ++b) {
      Eigen::Map<const RowMat<T>> xb(x.sample(int(b)), m.cols(), x.w);
      Eigen::Map<RowMat<T>> yb(y.sample(int(b)), m.rows(), x.w);
      yb.noalias() = m * xb;
    }
  });
}

template <typename T>
Tensor4<T> fixed_matmul_forward(const Tensor4<T>& x, const RowMat<T>& m) {
  Tensor4<T> y;
  fixed_matmul_forward_into(x, m, y);
  return y;
}

template <typename T>
void fixed_matmul_backward_into(const Tensor4<T>& grad_out, const RowMat<T>& m, Tensor4<T>& gx) {
  if (grad_out.c != 1 || grad_out.h != m.rows())
    raise(ErrorCode::ShapeError, "fixed matmul grad shape mismatch");
  ensure_shape(gx, grad_out.b, int(m.cols()), grad_out.w, 1);
  parallel_chunks(std::size_t(grad_out.b), [&](int, std::size_t lo, std::size_t hi) {
    for (std::size_t b = lo; b < hi; ++b) {
      Eigen::Map<const RowMat<T>> gb(grad_out.sample(int(b)), m.rows(), grad_out.w);
      Eigen::Map<RowMat<T>> gxb(gx.sample(int(b)), m.cols(), grad_out.w);
      gxb.noalias() = m.transpose() * gb;
    }
  });
}

template <typename T>
Tensor4<T> fixed_matmul_backward(const Tensor4<T>& grad_out, const RowMat<T>& m) {
  Tensor4<T> gx;
  fixed_matmul_backward_into(grad_out, m, gx);
  return gx;
}

// Entries ~ Uniform(-b, b) with b = sqrt(6 / (fan_in + fan_out)).
template <typename T>
std::vector<T> glorot_uniform(Rng& rng, int fan_in, int fan_out, std::size_t count) {
  if (fan_in < 1 || fan_out < 1) raise(ErrorCode::InvalidArgument, "fans must be >= 1");
  const double bound = std::sqrt(6.0 / (double(fan_in) + double(fan_out)));
  std::vector<T> w(count);
  for (auto& v : w) v = T(rng.uniform(-bound, bound));
  return w;
}

struct AdamConfig {
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
};

template <typename T>
struct AdamSlot {
  std::vector<T> m, v;
  void init(std::size_t n) {
    m.assign(n, T(0));
    v.assign(n, T(0));
  }
};

// Bias-corrected Adam update with scheduled rate lr_t; step is the 1-based
// index of this update.
template <typename T>
void adam_step(std::vector<T>& theta, const std::vector<T>& grad, AdamSlot<T>& slot, long step,
               double lr_t, const AdamConfig& cfg) {
  if (theta.size() != grad.size() || slot.m.size() != theta.size())
    raise(ErrorCode::ShapeError, "adam buffers disagree in size");
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, double(step));
  const double c2 = 1.0 - std::pow(b2, double(step));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = double(grad[i]);
    if (!std::isfinite(g)) raise(ErrorCode::NonFiniteGradient, "non-finite gradient entry");
    const double m = b1 * double(slot.m[i]) + (1.0 - b1) * g;
    const double v = b2 * double(slot.v[i]) + (1.0 - b2) * g * g;
    slot.m[i] = T(m);
    slot.v[i] = T(v);
    theta[i] -= T(lr_t * (m / c1) / (std::sqrt(v / c2) + cfg.epsilon));
  }
}

}  // namespace esi::nn
