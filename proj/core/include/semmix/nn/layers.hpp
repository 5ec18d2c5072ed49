// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <string>

#include "semmix/nn/tensor.hpp"

namespace semmix::nn {

using InitRng = std::mt19937_64;

/// Stride-1 convolution with kernel 1 or 3 ("same" zero padding).
/// Weight is (cin * k * k) x cout, row index (ci * k + ky) * k + kx.
template <typename T>
class Conv2d {
 public:
  struct Cache {
    Tensor<T> input;
  };

  Conv2d() = default;
  Conv2d(const std::string& name, int cin, int cout, int kernel);

  Tensor<T> forward(const Tensor<T>& x, Cache* cache) const;
  Tensor<T> backward(const Tensor<T>& dy, const Cache& cache);

  void init(InitRng& rng, bool zero = false);
  void collect(ParameterList<T>& out) { out.push_back(&weight_); out.push_back(&bias_); }
  int in_channels() const { return cin_; }
  int out_channels() const { return cout_; }

 private:
  int cin_ = 0;
  int cout_ = 0;
  int kernel_ = 3;
  Parameter<T> weight_;
  Parameter<T> bias_;
};

template <typename T>
class GroupNorm {
 public:
  struct Cache {
    Tensor<T> normalized;
    std::vector<T> inv_std;  // [batch * groups]
  };

  GroupNorm() = default;
  GroupNorm(const std::string& name, int channels, int groups);

  Tensor<T> forward(const Tensor<T>& x, Cache* cache) const;
  Tensor<T> backward(const Tensor<T>& dy, const Cache& cache);

  void init();
  void collect(ParameterList<T>& out) { out.push_back(&gamma_); out.push_back(&beta_); }

 private:
  int channels_ = 0;
  int groups_ = 1;
  Parameter<T> gamma_;
  Parameter<T> beta_;
};

/// y = x W + b for row-vector items (x is items x in).
template <typename T>
class Linear {
 public:
  struct Cache {
    Mat<T> input;
  };

  Linear() = default;
  Linear(const std::string& name, int in, int out);

  Mat<T> forward(const Mat<T>& x, Cache* cache) const;
  Mat<T> backward(const Mat<T>& dy, const Cache& cache);

  void init(InitRng& rng, bool zero = false);
  void collect(ParameterList<T>& out) { out.push_back(&weight_); out.push_back(&bias_); }
  const Mat<T>& weight() const { return weight_.value; }

 private:
  Parameter<T> weight_;
  Parameter<T> bias_;
};

template <typename T>
class Embedding {
 public:
  Embedding() = default;
  Embedding(const std::string& name, int vocab, int dim);

  /// Rows of the table for `ids`, as an ids.size() x dim matrix.
  Mat<T> lookup(const std::vector<int>& ids) const;
  void accumulate(const std::vector<int>& ids, const Mat<T>& grad_rows);

  void init(InitRng& rng);
  void collect(ParameterList<T>& out) { out.push_back(&table_); }
  int dim() const { return static_cast<int>(table_.value.cols()); }

 private:
  Parameter<T> table_;
};

// Stateless element-wise and resampling ops.
template <typename T> Tensor<T> silu(const Tensor<T>& x);
template <typename T> Tensor<T> silu_backward(const Tensor<T>& dy, const Tensor<T>& x);
template <typename T> Mat<T> silu(const Mat<T>& x);
template <typename T> Mat<T> silu_backward(const Mat<T>& dy, const Mat<T>& x);
template <typename T> Tensor<T> avg_pool2(const Tensor<T>& x);
template <typename T> Tensor<T> avg_pool2_backward(const Tensor<T>& dy);
template <typename T> Tensor<T> upsample2(const Tensor<T>& x);
template <typename T> Tensor<T> upsample2_backward(const Tensor<T>& dy);
template <typename T> Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
/// Splits a gradient of concat_channels(a, b) back into (da, db).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& d, int channels_a);
/// x(c, b, :, :) += bias(b, c).
template <typename T> void add_channel_bias(Tensor<T>& x, const Mat<T>& bias);
/// Gradient of add_channel_bias with respect to bias: sum over each plane.
template <typename T> Mat<T> channel_bias_grad(const Tensor<T>& dy);

/// Sinusoidal step embedding, one row per entry of `steps`.
template <typename T>
Mat<T> timestep_embedding(const std::vector<double>& steps, int dim);

}  // namespace semmix::nn
