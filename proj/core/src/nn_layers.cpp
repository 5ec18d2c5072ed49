// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "semmix/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include "semmix/error.hpp"

namespace semmix::nn {

namespace {

// Upper bound on im2col buffer elements; larger batches are processed in
// sample chunks.
constexpr std::size_t kColumnBudget = std::size_t{1} << 18;

template <typename T>
void im2col(const Tensor<T>& x, int kernel, int b0, int b1, Mat<T>& col) {
  const int h = x.height;
  const int w = x.width;
  const int pad = kernel / 2;
  const std::size_t plane = x.plane();
  col.resize(static_cast<Eigen::Index>((b1 - b0) * plane), x.channels * kernel * kernel);
  for (int ci = 0; ci < x.channels; ++ci) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        T* dst = col.col((ci * kernel + ky) * kernel + kx).data();
        const int dy = ky - pad;
        const int dx = kx - pad;
        const int x_lo = std::max(0, -dx);
        const int x_hi = std::min(w, w - dx);
        for (int b = b0; b < b1; ++b) {
          const T* src = x.plane_ptr(ci, b);
          T* d = dst + static_cast<std::size_t>(b - b0) * plane;
          for (int y = 0; y < h; ++y) {
            T* drow = d + static_cast<std::size_t>(y) * w;
            const int sy = y + dy;
            if (sy < 0 || sy >= h) {
              std::fill(drow, drow + w, T(0));
              continue;
            }
            const T* srow = src + static_cast<std::size_t>(sy) * w;
            std::fill(drow, drow + x_lo, T(0));
            std::copy(srow + x_lo + dx, srow + x_hi + dx, drow + x_lo);
            std::fill(drow + x_hi, drow + w, T(0));
          }
        }
      }
    }
  }
}

template <typename T>
int chunk_samples(const Tensor<T>& x, int kernel) {
  const std::size_t per_sample = x.plane() * static_cast<std::size_t>(x.channels) * kernel * kernel;
  return static_cast<int>(std::max<std::size_t>(1, kColumnBudget / std::max<std::size_t>(1, per_sample)));
}

template <typename T>
void uniform_fill(Mat<T>& m, InitRng& rng, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(const std::string& name, int cin, int cout, int kernel)
    : cin_(cin), cout_(cout), kernel_(kernel),
      weight_(name + ".weight", cin * kernel * kernel, cout),
      bias_(name + ".bias", 1, cout) {
  if (kernel != 1 && kernel != 3) throw_invalid("Conv2d supports kernel 1 or 3");
}

template <typename T>
void Conv2d<T>::init(InitRng& rng, bool zero) {
  if (zero) {
    weight_.value.setZero();
  } else {
    uniform_fill(weight_.value, rng, 1.0 / std::sqrt(static_cast<double>(cin_ * kernel_ * kernel_)));
  }
  bias_.value.setZero();
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, Cache* cache) const {
  if (x.channels != cin_) throw_invalid("Conv2d: input channel mismatch");
  Tensor<T> y(cout_, x.batch, x.height, x.width);
  auto out = y.mat();
  if (kernel_ == 1) {
    out.noalias() = x.mat() * weight_.value;
  } else {
    const int chunk = chunk_samples(x, kernel_);
    Mat<T> col;
    for (int b0 = 0; b0 < x.batch; b0 += chunk) {
      const int b1 = std::min(x.batch, b0 + chunk);
      im2col(x, kernel_, b0, b1, col);
      out.middleRows(static_cast<Eigen::Index>(b0 * x.plane()), col.rows()).noalias() =
          col * weight_.value;
    }
  }
  out.rowwise() += bias_.value.row(0);
  if (cache) cache->input = x;
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& dy, const Cache& cache) {
  const Tensor<T>& x = cache.input;
  Tensor<T> dx(cin_, x.batch, x.height, x.width);
  const auto dout = dy.mat();
  bias_.grad.row(0) += dout.colwise().sum();
  if (kernel_ == 1) {
    weight_.grad.noalias() += x.mat().transpose() * dout;
    dx.mat().noalias() = dout * weight_.value.transpose();
    return dx;
  }
  // Weight gradient from im2col(x); input gradient as a convolution of dy
  // with the spatially flipped, channel-transposed kernel.
  Mat<T> flipped(static_cast<Eigen::Index>(cout_) * kernel_ * kernel_, cin_);
  for (int co = 0; co < cout_; ++co) {
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx) {
        const auto row = (co * kernel_ + ky) * kernel_ + kx;
        for (int ci = 0; ci < cin_; ++ci) {
          flipped(row, ci) =
              weight_.value((ci * kernel_ + (kernel_ - 1 - ky)) * kernel_ + (kernel_ - 1 - kx), co);
        }
      }
    }
  }
  const int chunk = std::min(chunk_samples(x, kernel_), chunk_samples(dy, kernel_));
  Mat<T> col;
  auto dmat = dx.mat();
  for (int b0 = 0; b0 < x.batch; b0 += chunk) {
    const int b1 = std::min(x.batch, b0 + chunk);
    im2col(x, kernel_, b0, b1, col);
    const auto rows = static_cast<Eigen::Index>(b0 * x.plane());
    const auto dblock = dout.middleRows(rows, col.rows());
    weight_.grad.noalias() += col.transpose() * dblock;
    im2col(dy, kernel_, b0, b1, col);
    dmat.middleRows(rows, col.rows()).noalias() = col * flipped;
  }
  return dx;
}

// ---------------------------------------------------------------- GroupNorm

template <typename T>
GroupNorm<T>::GroupNorm(const std::string& name, int channels, int groups)
    : channels_(channels), groups_(groups),
      gamma_(name + ".gamma", 1, channels), beta_(name + ".beta", 1, channels) {
  if (groups < 1 || channels % groups != 0) throw_invalid("GroupNorm: channels not divisible by groups");
  init();
}

template <typename T>
void GroupNorm<T>::init() {
  gamma_.value.setOnes();
  beta_.value.setZero();
}

template <typename T>
Tensor<T> GroupNorm<T>::forward(const Tensor<T>& x, Cache* cache) const {
  constexpr double eps = 1e-5;
  if (x.channels != channels_) throw_invalid("GroupNorm: channel mismatch");
  using Plane = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
  using ConstPlane = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;
  const int per_group = channels_ / groups_;
  const auto plane = static_cast<Eigen::Index>(x.plane());
  const double count = static_cast<double>(per_group * plane);
  Tensor<T> y(x.channels, x.batch, x.height, x.width);
  if (cache) {
    cache->normalized = Tensor<T>(x.channels, x.batch, x.height, x.width);
    cache->inv_std.assign(static_cast<std::size_t>(x.batch * groups_), T(0));
  }
  for (int b = 0; b < x.batch; ++b) {
    for (int g = 0; g < groups_; ++g) {
      double sum = 0.0;
      for (int c = g * per_group; c < (g + 1) * per_group; ++c) {
        sum += static_cast<double>(ConstPlane(x.plane_ptr(c, b), plane).sum());
      }
      const T mean = static_cast<T>(sum / count);
      double var = 0.0;
      for (int c = g * per_group; c < (g + 1) * per_group; ++c) {
        var += static_cast<double>((ConstPlane(x.plane_ptr(c, b), plane) - mean).square().sum());
      }
      const T inv = static_cast<T>(1.0 / std::sqrt(var / count + eps));
      if (cache) cache->inv_std[static_cast<std::size_t>(b * groups_ + g)] = inv;
      for (int c = g * per_group; c < (g + 1) * per_group; ++c) {
        ConstPlane in(x.plane_ptr(c, b), plane);
        Plane out(y.plane_ptr(c, b), plane);
        if (cache) {
          Plane n(cache->normalized.plane_ptr(c, b), plane);
          n = (in - mean) * inv;
          out = n * gamma_.value(0, c) + beta_.value(0, c);
        } else {
          out = (in - mean) * (inv * gamma_.value(0, c)) + beta_.value(0, c);
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> GroupNorm<T>::backward(const Tensor<T>& dy, const Cache& cache) {
  using Plane = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
  using ConstPlane = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;
  const Tensor<T>& xh = cache.normalized;
  const int per_group = channels_ / groups_;
  const auto plane = static_cast<Eigen::Index>(xh.plane());
  const double count = static_cast<double>(per_group * plane);
  Tensor<T> dx(xh.channels, xh.batch, xh.height, xh.width);
  for (int b = 0; b < xh.batch; ++b) {
    for (int g = 0; g < groups_; ++g) {
      double sum_d = 0.0;
      double sum_dx = 0.0;
      for (int c = g * per_group; c < (g + 1) * per_group; ++c) {
        ConstPlane d(dy.plane_ptr(c, b), plane);
        ConstPlane n(xh.plane_ptr(c, b), plane);
        const T dgam = (d * n).sum();
        const T dbet = d.sum();
        gamma_.grad(0, c) += dgam;
        beta_.grad(0, c) += dbet;
        sum_d += static_cast<double>(dbet) * gamma_.value(0, c);
        sum_dx += static_cast<double>(dgam) * gamma_.value(0, c);
      }
      const T inv = cache.inv_std[static_cast<std::size_t>(b * groups_ + g)];
      const T mean_d = static_cast<T>(sum_d / count);
      const T mean_dx = static_cast<T>(sum_dx / count);
      for (int c = g * per_group; c < (g + 1) * per_group; ++c) {
        ConstPlane d(dy.plane_ptr(c, b), plane);
        ConstPlane n(xh.plane_ptr(c, b), plane);
        Plane o(dx.plane_ptr(c, b), plane);
        o = inv * (d * gamma_.value(0, c) - mean_d - n * mean_dx);
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(const std::string& name, int in, int out)
    : weight_(name + ".weight", in, out), bias_(name + ".bias", 1, out) {}

template <typename T>
void Linear<T>::init(InitRng& rng, bool zero) {
  if (zero) {
    weight_.value.setZero();
  } else {
    uniform_fill(weight_.value, rng, 1.0 / std::sqrt(static_cast<double>(weight_.value.rows())));
  }
  bias_.value.setZero();
}

template <typename T>
Mat<T> Linear<T>::forward(const Mat<T>& x, Cache* cache) const {
  if (x.cols() != weight_.value.rows()) throw_invalid("Linear: input width mismatch");
  Mat<T> y = x * weight_.value;
  y.rowwise() += bias_.value.row(0);
  if (cache) cache->input = x;
  return y;
}

template <typename T>
Mat<T> Linear<T>::backward(const Mat<T>& dy, const Cache& cache) {
  weight_.grad.noalias() += cache.input.transpose() * dy;
  bias_.grad.row(0) += dy.colwise().sum();
  return dy * weight_.value.transpose();
}

// ---------------------------------------------------------------- Embedding

template <typename T>
Embedding<T>::Embedding(const std::string& name, int vocab, int dim) : table_(name, vocab, dim) {}

template <typename T>
void Embedding<T>::init(InitRng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  for (Eigen::Index i = 0; i < table_.value.size(); ++i) {
    table_.value.data()[i] = static_cast<T>(dist(rng));
  }
}

template <typename T>
Mat<T> Embedding<T>::lookup(const std::vector<int>& ids) const {
  Mat<T> out(static_cast<Eigen::Index>(ids.size()), table_.value.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table_.value.rows()) throw_invalid("Embedding: token id out of range");
    out.row(static_cast<Eigen::Index>(i)) = table_.value.row(ids[i]);
  }
  return out;
}

template <typename T>
void Embedding<T>::accumulate(const std::vector<int>& ids, const Mat<T>& grad_rows) {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    table_.grad.row(ids[i]) += grad_rows.row(static_cast<Eigen::Index>(i));
  }
}

// ---------------------------------------------------------------- free ops

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  using Flat = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
  using ConstFlat = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;
  Tensor<T> y(x.channels, x.batch, x.height, x.width);
  const auto n = static_cast<Eigen::Index>(x.size());
  ConstFlat in(x.data.data(), n);
  Flat(y.data.data(), n) = in / (T(1) + (-in).exp());
  return y;
}

template <typename T>
Tensor<T> silu_backward(const Tensor<T>& dy, const Tensor<T>& x) {
  using Flat = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
  using ConstFlat = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;
  Tensor<T> dx(x.channels, x.batch, x.height, x.width);
  const auto n = static_cast<Eigen::Index>(x.size());
  ConstFlat in(x.data.data(), n);
  ConstFlat d(dy.data.data(), n);
  const Eigen::Array<T, Eigen::Dynamic, 1> s = T(1) / (T(1) + (-in).exp());
  Flat(dx.data.data(), n) = d * s * (T(1) + in * (T(1) - s));
  return dx;
}

template <typename T>
Mat<T> silu(const Mat<T>& x) {
  return x.unaryExpr([](T v) { return v / (T(1) + std::exp(-v)); });
}

template <typename T>
Mat<T> silu_backward(const Mat<T>& dy, const Mat<T>& x) {
  return dy.binaryExpr(x, [](T d, T v) {
    const T s = T(1) / (T(1) + std::exp(-v));
    return d * s * (T(1) + v * (T(1) - s));
  });
}

template <typename T>
Tensor<T> avg_pool2(const Tensor<T>& x) {
  if (x.height % 2 != 0 || x.width % 2 != 0) throw_invalid("avg_pool2 needs even spatial size");
  Tensor<T> y(x.channels, x.batch, x.height / 2, x.width / 2);
  for (int c = 0; c < x.channels; ++c) {
    for (int b = 0; b < x.batch; ++b) {
      const T* p = x.plane_ptr(c, b);
      T* q = y.plane_ptr(c, b);
      for (int yy = 0; yy < y.height; ++yy) {
        for (int xx = 0; xx < y.width; ++xx) {
          const T* r0 = p + (2 * yy) * x.width + 2 * xx;
          const T* r1 = r0 + x.width;
          q[yy * y.width + xx] = T(0.25) * (r0[0] + r0[1] + r1[0] + r1[1]);
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> avg_pool2_backward(const Tensor<T>& dy) {
  Tensor<T> dx(dy.channels, dy.batch, dy.height * 2, dy.width * 2);
  for (int c = 0; c < dy.channels; ++c) {
    for (int b = 0; b < dy.batch; ++b) {
      const T* p = dy.plane_ptr(c, b);
      T* q = dx.plane_ptr(c, b);
      for (int yy = 0; yy < dx.height; ++yy) {
        for (int xx = 0; xx < dx.width; ++xx) {
          q[yy * dx.width + xx] = T(0.25) * p[(yy / 2) * dy.width + xx / 2];
        }
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> upsample2(const Tensor<T>& x) {
  Tensor<T> y(x.channels, x.batch, x.height * 2, x.width * 2);
  for (int c = 0; c < x.channels; ++c) {
    for (int b = 0; b < x.batch; ++b) {
      const T* p = x.plane_ptr(c, b);
      T* q = y.plane_ptr(c, b);
      for (int yy = 0; yy < y.height; ++yy) {
        for (int xx = 0; xx < y.width; ++xx) q[yy * y.width + xx] = p[(yy / 2) * x.width + xx / 2];
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> upsample2_backward(const Tensor<T>& dy) {
  Tensor<T> dx(dy.channels, dy.batch, dy.height / 2, dy.width / 2);
  for (int c = 0; c < dy.channels; ++c) {
    for (int b = 0; b < dy.batch; ++b) {
      const T* p = dy.plane_ptr(c, b);
      T* q = dx.plane_ptr(c, b);
      for (int yy = 0; yy < dy.height; ++yy) {
        for (int xx = 0; xx < dy.width; ++xx) q[(yy / 2) * dx.width + xx / 2] += p[yy * dy.width + xx];
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.batch != b.batch || a.height != b.height || a.width != b.width) {
    throw_invalid("concat_channels: shape mismatch");
  }
  Tensor<T> y;
  y.channels = a.channels + b.channels;
  y.batch = a.batch;
  y.height = a.height;
  y.width = a.width;
  y.data.reserve(a.size() + b.size());
  y.data.insert(y.data.end(), a.data.begin(), a.data.end());
  y.data.insert(y.data.end(), b.data.begin(), b.data.end());
  return y;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& d, int channels_a) {
  Tensor<T> a(channels_a, d.batch, d.height, d.width);
  Tensor<T> b(d.channels - channels_a, d.batch, d.height, d.width);
  std::copy(d.data.begin(), d.data.begin() + static_cast<std::ptrdiff_t>(a.size()), a.data.begin());
  std::copy(d.data.begin() + static_cast<std::ptrdiff_t>(a.size()), d.data.end(), b.data.begin());
  return {std::move(a), std::move(b)};
}

template <typename T>
void add_channel_bias(Tensor<T>& x, const Mat<T>& bias) {
  for (int c = 0; c < x.channels; ++c) {
    for (int b = 0; b < x.batch; ++b) {
      T* p = x.plane_ptr(c, b);
      const T v = bias(b, c);
      for (std::size_t i = 0; i < x.plane(); ++i) p[i] += v;
    }
  }
}

template <typename T>
Mat<T> channel_bias_grad(const Tensor<T>& dy) {
  Mat<T> g(dy.batch, dy.channels);
  for (int c = 0; c < dy.channels; ++c) {
    for (int b = 0; b < dy.batch; ++b) {
      const T* p = dy.plane_ptr(c, b);
      T s = T(0);
      for (std::size_t i = 0; i < dy.plane(); ++i) s += p[i];
      g(b, c) = s;
    }
  }
  return g;
}

template <typename T>
Mat<T> timestep_embedding(const std::vector<double>& steps, int dim) {
  const int half = dim / 2;
  Mat<T> out = Mat<T>::Zero(static_cast<Eigen::Index>(steps.size()), dim);
  for (std::size_t r = 0; r < steps.size(); ++r) {
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / half);
      out(static_cast<Eigen::Index>(r), i) = static_cast<T>(std::sin(steps[r] * freq));
      out(static_cast<Eigen::Index>(r), half + i) = static_cast<T>(std::cos(steps[r] * freq));
    }
  }
  return out;
}

#define SEMMIX_INSTANTIATE_NN(T)                                                        \
  template class Conv2d<T>;                                                             \
  template class GroupNorm<T>;                                                          \
  template class Linear<T>;                                                             \
  template class Embedding<T>;                                                          \
  template Tensor<T> silu(const Tensor<T>&);                                            \
  template Tensor<T> silu_backward(const Tensor<T>&, const Tensor<T>&);                 \
  template Mat<T> silu(const Mat<T>&);                                                  \
  template Mat<T> silu_backward(const Mat<T>&, const Mat<T>&);                          \
  template Tensor<T> avg_pool2(const Tensor<T>&);                                       \
  template Tensor<T> avg_pool2_backward(const Tensor<T>&);                              \
  template Tensor<T> upsample2(const Tensor<T>&);                                       \
  template Tensor<T> upsample2_backward(const Tensor<T>&);                              \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);               \
  template std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>&, int);       \
  template void add_channel_bias(Tensor<T>&, const Mat<T>&);                            \
  template Mat<T> channel_bias_grad(const Tensor<T>&);                                  \
  template Mat<T> timestep_embedding<T>(const std::vector<double>&, int);

SEMMIX_INSTANTIATE_NN(float)
SEMMIX_INSTANTIATE_NN(double)

#undef SEMMIX_INSTANTIATE_NN

}  // namespace semmix::nn
