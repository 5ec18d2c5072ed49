// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace semmix::nn {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

/// Feature maps stored channel-major: element (c, b, y, x) lives at
/// ((c * batch + b) * height + y) * width + x. Viewed as a matrix it is
/// (batch * height * width) x channels, one column per channel, so channel
/// concatenation is plain appending.
template <typename T>
struct Tensor {
  int channels = 0;
  int batch = 0;
  int height = 0;
  int width = 0;
  std::vector<T, Eigen::aligned_allocator<T>> data;

  Tensor() = default;
  Tensor(int c, int n, int h, int w)
      : channels(c), batch(n), height(h), width(w),
        data(static_cast<std::size_t>(c) * n * h * w, T(0)) {}

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  std::size_t rows() const { return static_cast<std::size_t>(batch) * plane(); }
  std::size_t size() const { return data.size(); }

  Eigen::Map<Mat<T>> mat() {
    return {data.data(), static_cast<Eigen::Index>(rows()), channels};
  }
  Eigen::Map<const Mat<T>> mat() const {
    return {data.data(), static_cast<Eigen::Index>(rows()), channels};
  }
  T* plane_ptr(int c, int b) { return data.data() + (static_cast<std::size_t>(c) * batch + b) * plane(); }
  const T* plane_ptr(int c, int b) const {
    return data.data() + (static_cast<std::size_t>(c) * batch + b) * plane();
  }
  bool same_shape(const Tensor& o) const {
    return channels == o.channels && batch == o.batch && height == o.height && width == o.width;
  }
};

/// A trainable blob with its gradient accumulator.
template <typename T>
struct Parameter {
  std::string name;
  Mat<T> value;
  Mat<T> grad;

  Parameter() = default;
  Parameter(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Mat<T>::Zero(rows, cols)), grad(Mat<T>::Zero(rows, cols)) {}

  std::size_t size() const { return static_cast<std::size_t>(value.size()); }
  void zero_grad() { grad.setZero(); }
};

template <typename T>
using ParameterList = std::vector<Parameter<T>*>;

}  // namespace semmix::nn
