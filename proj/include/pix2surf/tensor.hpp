#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "pix2surf/common.hpp"

namespace pix2surf {

// Dense double tensor, row-major. Rank up to 4 is all the nets need.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(size_t(numel_of(shape)), 0.0);
  }
  Tensor(std::vector<int> s, double fill) : shape(std::move(s)) {
    data.assign(size_t(numel_of(shape)), fill);
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
      if (d < 0) throw ShapeError("negative tensor dim");
      n *= d;
    }
    return n;
  }

  int64_t numel() const { return int64_t(data.size()); }
  int dim(int i) const { return shape[size_t(i)]; }
  int rank() const { return int(shape.size()); }

  double& at(int i) { return data[size_t(i)]; }
  double at(int i) const { return data[size_t(i)]; }
  double& at(int i, int j) { return data[size_t(i) * shape[1] + j]; }
  double at(int i, int j) const { return data[size_t(i) * shape[1] + j]; }
  double& at(int i, int j, int k) {
    return data[(size_t(i) * shape[1] + j) * shape[2] + k];
  }
  double at(int i, int j, int k) const {
    return data[(size_t(i) * shape[1] + j) * shape[2] + k];
  }
  double& at(int i, int j, int k, int l) {
    return data[((size_t(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }
  double at(int i, int j, int k, int l) const {
    return data[((size_t(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  bool finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double min() const { return *std::min_element(data.begin(), data.end()); }
  double max() const { return *std::max_element(data.begin(), data.end()); }
  double sum() const { return std::accumulate(data.begin(), data.end(), 0.0); }
};

inline void check_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace pix2surf
