#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace zcpt {

// Dense row-major tensor of 64-bit floats. Shapes are (N,C,H,W) for image
// data and (N,F) for flat features; scalars use shape (1).
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s);

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, double v);
  static Tensor scalar(double v);

  std::size_t numel() const { return data.size(); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape.size()); }

  double& at4(int n, int c, int h, int w) {
    return data[static_cast<std::size_t>(((n * dim(1) + c) * dim(2) + h) * dim(3) + w)];
  }
  double at4(int n, int c, int h, int w) const {
    return data[static_cast<std::size_t>(((n * dim(1) + c) * dim(2) + h) * dim(3) + w)];
  }
  double& at2(int n, int f) { return data[static_cast<std::size_t>(n * dim(1) + f)]; }
  double at2(int n, int f) const { return data[static_cast<std::size_t>(n * dim(1) + f)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
  void fill(double v);
};

std::size_t shape_numel(const std::vector<int>& s);
std::string shape_str(const std::vector<int>& s);

}  // namespace zcpt
