#pragma once

#include <cmath>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <vector>

#include "setagg/common.hpp"

namespace setagg {

// Dense row-major tensor of doubles. Rank 1 ({n}) and rank 2 ({rows, cols})
// cover everything in this library; a scalar is stored as shape {1}.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> data) : shape(std::move(s)), v(std::move(data)) {}

  static Tensor scalar(double x) { return Tensor({1}, {x}); }

  static Tensor vec(std::vector<double> data) {
    int n = static_cast<int>(data.size());
    return Tensor({n}, std::move(data));
  }

  static Tensor zeros(std::vector<int> s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }

  static Tensor full(std::vector<int> s, double x) {
    Tensor t = zeros(std::move(s));
    for (double& e : t.v) e = x;
    return t;
  }

  // rows x cols matrix from a flat row-major list
  static Tensor matrix(int rows, int cols, std::vector<double> data) {
    return Tensor({rows, cols}, std::move(data));
  }

  std::size_t size() const { return v.size(); }
  int rank() const { return static_cast<int>(shape.size()); }

  int rows() const { return rank() == 2 ? shape[0] : 1; }
  int cols() const { return rank() == 2 ? shape[1] : (shape.empty() ? 0 : shape[0]); }

  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols() + c]; }

  double& operator[](std::size_t i) { return v[i]; }
  double operator[](std::size_t i) const { return v[i]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double e : v)
      if (!std::isfinite(e)) return false;
    return true;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << '{';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << '}';
    return os.str();
  }
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractError(msg);
}

}  // namespace setagg
