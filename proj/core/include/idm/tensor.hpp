#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace idm::ad {

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major float64 array. Gradients live next to values in graph
// nodes and parameters, not here.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> values;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> v)
      : shape(std::move(s)), values(std::move(v)) {
    if (values.size() != static_cast<size_t>(numel(shape)))
      throw DimensionError("tensor value count does not match shape");
  }

  static long numel(const std::vector<int>& s) {
    long n = 1;
    for (int d : s) {
      if (d <= 0) throw DimensionError("non-positive dimension");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) {
    long n = numel(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }

  static Tensor full(std::vector<int> s, double v) {
    long n = numel(s);
    return Tensor(std::move(s), std::vector<double>(n, v));
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  long size() const { return static_cast<long>(values.size()); }
  double item() const {
    assert(values.size() == 1);
    return values[0];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }
};

}  // namespace idm::ad
