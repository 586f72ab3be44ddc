#include "dyffpad/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "dyffpad/error.hpp"

namespace dyffpad::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank) {
    throw Error(ErrorCode::ShapeMismatch,
                std::string(what) + ": expected rank " + std::to_string(rank) + ", got " + shape_string(s));
  }
}

bool is_pointwise(std::size_t k, ConvGeometry g) { return k == 1 && g.stride == 1 && g.pad == 0; }

// col[(c*K+ky)*K+kx][oy*OW+ox] = x[c][oy*s+ky-p][ox*s+kx-p] (zero outside).
template <typename T>
void im2col(const T* x, std::size_t c_in, std::size_t h, std::size_t w, std::size_t k, ConvGeometry g,
            std::size_t oh, std::size_t ow, T* col) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < c_in; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* dst = col + ((c * k + ky) * k + kx) * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          T* row = dst + oy * ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(row, row + ow, T(0));
            continue;
          }
          const T* src = x + (c * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            row[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, std::size_t c_in, std::size_t h, std::size_t w, std::size_t k, ConvGeometry g,
            std::size_t oh, std::size_t ow, T* x) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < c_in; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* src = col + ((c * k + ky) * k + kx) * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          T* dst = x + (c * h + static_cast<std::size_t>(iy)) * w;
          const T* row = src + oy * ow;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) dst[ix] += row[ox];
          }
        }
      }
    }
  }
}

struct ConvDims {
  std::size_t n, c, h, w, o, k, oh, ow;
};

template <typename T>
ConvDims conv_dims(const Tensor<T>& x, const Tensor<T>& weight, ConvGeometry g) {
  require_rank(x.shape(), 4, "conv2d input");
  require_rank(weight.shape(), 4, "conv2d weight");
  if (g.stride < 1) throw Error(ErrorCode::InvalidConfig, "conv2d stride must be >= 1");
  ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), weight.dim(0), weight.dim(2), 0, 0};
  if (weight.dim(1) != d.c || weight.dim(3) != d.k) {
    throw Error(ErrorCode::ShapeMismatch,
                "conv2d weight " + shape_string(weight.shape()) + " vs input " + shape_string(x.shape()));
  }
  if (d.h + 2 * g.pad < d.k || d.w + 2 * g.pad < d.k) {
    throw Error(ErrorCode::ShapeMismatch, "conv2d kernel larger than padded input");
  }
  d.oh = conv_out_size(d.h, d.k, g);
  d.ow = conv_out_size(d.w, d.k, g);
  return d;
}

template <typename T>
std::size_t channel_stride(const Tensor<T>& x) {
  return x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
}

}  // namespace

// ------------------------------------------------------------ convolution

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias, ConvGeometry g) {
  const ConvDims d = conv_dims(x, weight, g);
  if (bias) require_shape(bias->shape(), {d.o}, "conv2d bias");
  Tensor<T> y({d.n, d.o, d.oh, d.ow});
  const std::size_t ckk = d.c * d.k * d.k;
  const std::size_t p = d.oh * d.ow;
  const bool direct = is_pointwise(d.k, g);
  std::vector<T> col(direct ? 0 : ckk * p);
  ConstMapMat<T> wm(weight.data(), static_cast<Eigen::Index>(d.o), static_cast<Eigen::Index>(ckk));
  for (std::size_t n = 0; n < d.n; ++n) {
    const T* xn = x.data() + n * d.c * d.h * d.w;
    if (!direct) im2col(xn, d.c, d.h, d.w, d.k, g, d.oh, d.ow, col.data());
    ConstMapMat<T> cm(direct ? xn : col.data(), static_cast<Eigen::Index>(ckk), static_cast<Eigen::Index>(p));
    MapMat<T> ym(y.data() + n * d.o * p, static_cast<Eigen::Index>(d.o), static_cast<Eigen::Index>(p));
    ym.noalias() = wm * cm;
    if (bias) {
      for (std::size_t o = 0; o < d.o; ++o) ym.row(static_cast<Eigen::Index>(o)).array() += (*bias)[o];
    }
  }
  return y;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, bool has_bias,
                               const Tensor<T>& grad_out, ConvGeometry g) {
  const ConvDims d = conv_dims(x, weight, g);
  require_shape(grad_out.shape(), {d.n, d.o, d.oh, d.ow}, "conv2d grad_out");
  Conv2dGrads<T> out{Tensor<T>(x.shape()), Tensor<T>(weight.shape()), has_bias ? Tensor<T>({d.o}) : Tensor<T>()};
  const std::size_t ckk = d.c * d.k * d.k;
  const std::size_t p = d.oh * d.ow;
  const bool direct = is_pointwise(d.k, g);
  std::vector<T> col(direct ? 0 : ckk * p);
  std::vector<T> gcol(direct ? 0 : ckk * p);
  ConstMapMat<T> wm(weight.data(), static_cast<Eigen::Index>(d.o), static_cast<Eigen::Index>(ckk));
  MapMat<T> gw(out.weight.data(), static_cast<Eigen::Index>(d.o), static_cast<Eigen::Index>(ckk));
  for (std::size_t n = 0; n < d.n; ++n) {
    const T* xn = x.data() + n * d.c * d.h * d.w;
    T* gxn = out.input.data() + n * d.c * d.h * d.w;
    ConstMapMat<T> gy(grad_out.data() + n * d.o * p, static_cast<Eigen::Index>(d.o), static_cast<Eigen::Index>(p));
    if (direct) {
      ConstMapMat<T> cm(xn, static_cast<Eigen::Index>(ckk), static_cast<Eigen::Index>(p));
      gw.noalias() += gy * cm.transpose();
      MapMat<T> gx(gxn, static_cast<Eigen::Index>(ckk), static_cast<Eigen::Index>(p));
      gx.noalias() = wm.transpose() * gy;
    } else {
      im2col(xn, d.c, d.h, d.w, d.k, g, d.oh, d.ow, col.data());
      ConstMapMat<T> cm(col.data(), static_cast<Eigen::Index>(ckk), static_cast<Eigen::Index>(p));
      gw.noalias() += gy * cm.transpose();
      MapMat<T> gc(gcol.data(), static_cast<Eigen::Index>(ckk), static_cast<Eigen::Index>(p));
      gc.noalias() = wm.transpose() * gy;
      col2im(gcol.data(), d.c, d.h, d.w, d.k, g, d.oh, d.ow, gxn);
    }
    if (has_bias) {
      for (std::size_t o = 0; o < d.o; ++o) out.bias[o] += gy.row(static_cast<Eigen::Index>(o)).sum();
    }
  }
  return out;
}

// ------------------------------------------------------------ batch norm

namespace {

template <typename T>
void check_bn(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta) {
  if (x.rank() != 4 && x.rank() != 2) throw Error(ErrorCode::ShapeMismatch, "batch norm expects rank 2 or 4");
  require_shape(gamma.shape(), {x.dim(1)}, "batch norm gamma");
  require_shape(beta.shape(), {x.dim(1)}, "batch norm beta");
}

}  // namespace

template <typename T>
Tensor<T> batch_norm_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps,
                           BatchNormCache<T>& cache) {
  check_bn(x, gamma, beta);
  const std::size_t n = x.dim(0), c = x.dim(1), s = channel_stride(x);
  if (n < 2) throw Error(ErrorCode::BatchTooSmall, "training-mode batch norm needs batch >= 2");
  const double m = static_cast<double>(n * s);
  cache.normalized = Tensor<T>(x.shape());
  cache.inv_std.assign(c, T(0));
  cache.batch_mean.assign(c, T(0));
  cache.batch_var.assign(c, T(0));
  Tensor<T> y(x.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const T* p = x.data() + (b * c + ch) * s;
      for (std::size_t i = 0; i < s; ++i) sum += p[i];
    }
    const double mean = sum / m;
    double sq = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const T* p = x.data() + (b * c + ch) * s;
      for (std::size_t i = 0; i < s; ++i) sq += (p[i] - mean) * (p[i] - mean);
    }
    const double var = sq / m;
    const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
    cache.batch_mean[ch] = static_cast<T>(mean);
    cache.batch_var[ch] = static_cast<T>(var);
    cache.inv_std[ch] = static_cast<T>(inv);
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * s;
      for (std::size_t i = 0; i < s; ++i) {
        const T xh = static_cast<T>((x[off + i] - mean) * inv);
        cache.normalized[off + i] = xh;
        y[off + i] = gamma[ch] * xh + beta[ch];
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> batch_norm_infer(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                           const Tensor<T>& running_mean, const Tensor<T>& running_var, T eps) {
  check_bn(x, gamma, beta);
  const std::size_t n = x.dim(0), c = x.dim(1), s = channel_stride(x);
  require_shape(running_mean.shape(), {c}, "batch norm running mean");
  require_shape(running_var.shape(), {c}, "batch norm running var");
  Tensor<T> y(x.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T inv = T(1) / std::sqrt(running_var[ch] + eps);
    const T scale = gamma[ch] * inv;
    const T shift = beta[ch] - running_mean[ch] * scale;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * s;
      for (std::size_t i = 0; i < s; ++i) y[off + i] = x[off + i] * scale + shift;
    }
  }
  return y;
}

template <typename T>
void batch_norm_update_running(Tensor<T>& running_mean, Tensor<T>& running_var, const BatchNormCache<T>& cache,
                               std::size_t count_per_channel, T momentum) {
  const double unbias = count_per_channel > 1
                            ? static_cast<double>(count_per_channel) / static_cast<double>(count_per_channel - 1)
                            : 1.0;
  for (std::size_t ch = 0; ch < cache.batch_mean.size(); ++ch) {
    running_mean[ch] = (T(1) - momentum) * running_mean[ch] + momentum * cache.batch_mean[ch];
    running_var[ch] =
        (T(1) - momentum) * running_var[ch] + momentum * static_cast<T>(cache.batch_var[ch] * unbias);
  }
}

template <typename T>
BatchNormGrads<T> batch_norm_backward(const Tensor<T>& grad_out, const Tensor<T>& gamma,
                                      const BatchNormCache<T>& cache) {
  const Tensor<T>& xh = cache.normalized;
  require_shape(grad_out.shape(), xh.shape(), "batch norm grad_out");
  const std::size_t n = xh.dim(0), c = xh.dim(1), s = channel_stride(xh);
  const double m = static_cast<double>(n * s);
  BatchNormGrads<T> out{Tensor<T>(xh.shape()), Tensor<T>({c}), Tensor<T>({c})};
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * s;
      for (std::size_t i = 0; i < s; ++i) {
        sum_g += grad_out[off + i];
        sum_gx += static_cast<double>(grad_out[off + i]) * xh[off + i];
      }
    }
    out.gamma[ch] = static_cast<T>(sum_gx);
    out.beta[ch] = static_cast<T>(sum_g);
    const double k = static_cast<double>(gamma[ch]) * cache.inv_std[ch] / m;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * s;
      for (std::size_t i = 0; i < s; ++i) {
        out.input[off + i] = static_cast<T>(k * (m * grad_out[off + i] - sum_g - xh[off + i] * sum_gx));
      }
    }
  }
  return out;
}

// ------------------------------------------------------------ elementwise

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  require_shape(grad_out.shape(), x.shape(), "relu grad_out");
  Tensor<T> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] > T(0) ? grad_out[i] : T(0);
  return g;
}

template <typename T>
Tensor<T> sigmoid_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T v = x[i];
    // Branch keeps exp() from overflowing for large |v|.
    y[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
  }
  return y;
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& grad_out) {
  require_shape(grad_out.shape(), y.shape(), "sigmoid grad_out");
  Tensor<T> g(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) g[i] = grad_out[i] * y[i] * (T(1) - y[i]);
  return g;
}

// ------------------------------------------------------------ pooling

template <typename T>
Tensor<T> avg_pool_forward(const Tensor<T>& x, std::size_t k, std::size_t stride) {
  require_rank(x.shape(), 4, "avg_pool input");
  if (k < 1 || stride < 1 || x.dim(2) < k || x.dim(3) < k) {
    throw Error(ErrorCode::ShapeMismatch, "avg_pool window does not fit input " + shape_string(x.shape()));
  }
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = (h - k) / stride + 1, ow = (w - k) / stride + 1;
  Tensor<T> y({n, c, oh, ow});
  const T inv = T(1) / static_cast<T>(k * k);
  for (std::size_t p = 0; p < n * c; ++p) {
    const T* src = x.data() + p * h * w;
    T* dst = y.data() + p * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T acc = 0;
        for (std::size_t ky = 0; ky < k; ++ky) {
          for (std::size_t kx = 0; kx < k; ++kx) acc += src[(oy * stride + ky) * w + ox * stride + kx];
        }
        dst[oy * ow + ox] = acc * inv;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> avg_pool_backward(const Shape& input_shape, const Tensor<T>& grad_out, std::size_t k, std::size_t stride) {
  require_rank(input_shape, 4, "avg_pool input");
  const std::size_t n = input_shape[0], c = input_shape[1], h = input_shape[2], w = input_shape[3];
  const std::size_t oh = (h - k) / stride + 1, ow = (w - k) / stride + 1;
  require_shape(grad_out.shape(), {n, c, oh, ow}, "avg_pool grad_out");
  Tensor<T> g(input_shape);
  const T inv = T(1) / static_cast<T>(k * k);
  for (std::size_t p = 0; p < n * c; ++p) {
    T* dst = g.data() + p * h * w;
    const T* src = grad_out.data() + p * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const T v = src[oy * ow + ox] * inv;
        for (std::size_t ky = 0; ky < k; ++ky) {
          for (std::size_t kx = 0; kx < k; ++kx) dst[(oy * stride + ky) * w + ox * stride + kx] += v;
        }
      }
    }
  }
  return g;
}

template <typename T>
Tensor<T> global_avg_pool_forward(const Tensor<T>& x) {
  require_rank(x.shape(), 4, "global_avg_pool input");
  const std::size_t n = x.dim(0), c = x.dim(1), s = x.dim(2) * x.dim(3);
  Tensor<T> y({n, c});
  for (std::size_t p = 0; p < n * c; ++p) {
    double acc = 0.0;
    const T* src = x.data() + p * s;
    for (std::size_t i = 0; i < s; ++i) acc += src[i];
    y[p] = static_cast<T>(acc / static_cast<double>(s));
  }
  return y;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Shape& input_shape, const Tensor<T>& grad_out) {
  require_rank(input_shape, 4, "global_avg_pool input");
  const std::size_t n = input_shape[0], c = input_shape[1], s = input_shape[2] * input_shape[3];
  require_shape(grad_out.shape(), {n, c}, "global_avg_pool grad_out");
  Tensor<T> g(input_shape);
  for (std::size_t p = 0; p < n * c; ++p) {
    const T v = grad_out[p] / static_cast<T>(s);
    std::fill(g.data() + p * s, g.data() + (p + 1) * s, v);
  }
  return g;
}

// ------------------------------------------------------------ fully connected

template <typename T>
Tensor<T> fully_connected_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank(x.shape(), 2, "linear input");
  require_rank(weight.shape(), 2, "linear weight");
  const std::size_t n = x.dim(0), in = x.dim(1), out = weight.dim(0);
  if (weight.dim(1) != in) {
    throw Error(ErrorCode::ShapeMismatch,
                "linear weight " + shape_string(weight.shape()) + " vs input " + shape_string(x.shape()));
  }
  require_shape(bias.shape(), {out}, "linear bias");
  Tensor<T> y({n, out});
  ConstMapMat<T> xm(x.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in));
  ConstMapMat<T> wm(weight.data(), static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
  MapMat<T> ym(y.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(out));
  ym.noalias() = xm * wm.transpose();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t o = 0; o < out; ++o) y[b * out + o] += bias[o];
  }
  return y;
}

template <typename T>
LinearGrads<T> fully_connected_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_out) {
  const std::size_t n = x.dim(0), in = x.dim(1), out = weight.dim(0);
  require_shape(grad_out.shape(), {n, out}, "linear grad_out");
  LinearGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(weight.shape()), Tensor<T>({out})};
  ConstMapMat<T> xm(x.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in));
  ConstMapMat<T> wm(weight.data(), static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
  ConstMapMat<T> gy(grad_out.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(out));
  MapMat<T>(g.input.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in)).noalias() = gy * wm;
  MapMat<T>(g.weight.data(), static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)).noalias() =
      gy.transpose() * xm;
  for (std::size_t o = 0; o < out; ++o) {
    T acc = 0;
    for (std::size_t b = 0; b < n; ++b) acc += grad_out[b * out + o];
    g.bias[o] = acc;
  }
  return g;
}

// ------------------------------------------------------------ concat

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>* const> parts) {
  if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat of nothing");
  const Shape& first = parts.front()->shape();
  if (first.size() < 2) throw Error(ErrorCode::ShapeMismatch, "concat needs rank >= 2");
  std::size_t width = 0;
  for (const auto* p : parts) {
    Shape s = p->shape();
    if (s.size() != first.size()) throw Error(ErrorCode::ShapeMismatch, "concat rank mismatch");
    s[1] = first[1];
    if (s != first) {
      throw Error(ErrorCode::ShapeMismatch,
                  "concat " + shape_string(p->shape()) + " with " + shape_string(first));
    }
    width += p->dim(1);
  }
  Shape out_shape = first;
  out_shape[1] = width;
  Tensor<T> y(out_shape);
  const std::size_t n = first[0];
  const std::size_t inner = first.size() == 4 ? first[2] * first[3] : 1;
  for (std::size_t b = 0; b < n; ++b) {
    T* dst = y.data() + b * width * inner;
    for (const auto* p : parts) {
      const std::size_t len = p->dim(1) * inner;
      std::copy_n(p->data() + b * len, len, dst);
      dst += len;
    }
  }
  return y;
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b) {
  const Tensor<T>* parts[] = {&a, &b};
  return concat<T>(std::span<const Tensor<T>* const>(parts));
}

template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& x, std::span<const std::size_t> widths) {
  std::size_t total = 0;
  for (auto w : widths) total += w;
  if (x.rank() < 2 || x.dim(1) != total) {
    throw Error(ErrorCode::ShapeMismatch, "split widths do not sum to axis 1 of " + shape_string(x.shape()));
  }
  const std::size_t n = x.dim(0);
  const std::size_t inner = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  std::vector<Tensor<T>> out;
  out.reserve(widths.size());
  for (auto w : widths) {
    Shape s = x.shape();
    s[1] = w;
    out.emplace_back(s);
  }
  for (std::size_t b = 0; b < n; ++b) {
    const T* src = x.data() + b * total * inner;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      const std::size_t len = widths[i] * inner;
      std::copy_n(src, len, out[i].data() + b * len);
      src += len;
    }
  }
  return out;
}

// ------------------------------------------------------------ loss

template <typename T>
T bce_loss(const Tensor<T>& scores, std::span<const T> labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw Error(ErrorCode::ShapeMismatch, "bce: score and label counts differ");
  }
  const double lo = kBceClamp, hi = 1.0 - kBceClamp;
  double acc = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = std::clamp(static_cast<double>(scores[i]), lo, hi);
    const double y = labels[i];
    acc -= y * std::log(s) + (1.0 - y) * std::log(1.0 - s);
  }
  return static_cast<T>(acc / static_cast<double>(scores.size()));
}

template <typename T>
Tensor<T> bce_backward(const Tensor<T>& scores, std::span<const T> labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw Error(ErrorCode::ShapeMismatch, "bce: score and label counts differ");
  }
  const double lo = kBceClamp, hi = 1.0 - kBceClamp;
  const double inv_n = 1.0 / static_cast<double>(scores.size());
  Tensor<T> g(scores.shape());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double raw = scores[i];
    if (raw < lo || raw > hi) continue;  // clamp is flat outside its range
    const double y = labels[i];
    g[i] = static_cast<T>((-y / raw + (1.0 - y) / (1.0 - raw)) * inv_n);
  }
  return g;
}

#define DYFFPAD_INSTANTIATE_OPS(T)                                                                          \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, ConvGeometry);    \
  template Conv2dGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, bool, const Tensor<T>&,       \
                                          ConvGeometry);                                                    \
  template Tensor<T> batch_norm_train(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T,              \
                                      BatchNormCache<T>&);                                                  \
  template Tensor<T> batch_norm_infer(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                 \
                                      const Tensor<T>&, const Tensor<T>&, T);                               \
  template void batch_norm_update_running(Tensor<T>&, Tensor<T>&, const BatchNormCache<T>&, std::size_t, T); \
  template BatchNormGrads<T> batch_norm_backward(const Tensor<T>&, const Tensor<T>&,                        \
                                                 const BatchNormCache<T>&);                                 \
  template Tensor<T> relu_forward(const Tensor<T>&);                                                        \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> sigmoid_forward(const Tensor<T>&);                                                     \
  template Tensor<T> sigmoid_backward(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> avg_pool_forward(const Tensor<T>&, std::size_t, std::size_t);                          \
  template Tensor<T> avg_pool_backward(const Shape&, const Tensor<T>&, std::size_t, std::size_t);           \
  template Tensor<T> global_avg_pool_forward(const Tensor<T>&);                                             \
  template Tensor<T> global_avg_pool_backward(const Shape&, const Tensor<T>&);                              \
  template Tensor<T> fully_connected_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);         \
  template LinearGrads<T> fully_connected_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);   \
  template Tensor<T> concat(std::span<const Tensor<T>* const>);                                             \
  template Tensor<T> concat(const Tensor<T>&, const Tensor<T>&);                                            \
  template std::vector<Tensor<T>> split(const Tensor<T>&, std::span<const std::size_t>);                    \
  template T bce_loss(const Tensor<T>&, std::span<const T>);                                                \
  template Tensor<T> bce_backward(const Tensor<T>&, std::span<const T>);

DYFFPAD_INSTANTIATE_OPS(float)
DYFFPAD_INSTANTIATE_OPS(double)

#undef DYFFPAD_INSTANTIATE_OPS

}  // namespace dyffpad::nn
