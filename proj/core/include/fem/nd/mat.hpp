#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace fem::nd {

struct NdError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles. The engine is rank-2 only: scalars are
/// 1x1, vectors are 1xN or Nx1 depending on context, batches are rows.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c) {
    if (r < 0 || c < 0) throw NdError("Mat: negative dimension");
    v.assign(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0);
  }

  static Mat full(int r, int c, double x) {
    Mat m(r, c);
    for (double& e : m.v) e = x;
    return m;
  }
  static Mat scalar(double x) { return full(1, 1, x); }
  static Mat row_vec(std::span<const double> xs) {
    Mat m(1, static_cast<int>(xs.size()));
    std::copy(xs.begin(), xs.end(), m.v.begin());
    return m;
  }
  static Mat col_vec(std::span<const double> xs) {
    Mat m(static_cast<int>(xs.size()), 1);
    std::copy(xs.begin(), xs.end(), m.v.begin());
    return m;
  }

  double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  size_t size() const { return v.size(); }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

/// a * b with shape checking.
Mat matmul(const Mat& a, const Mat& b);
Mat transposed(const Mat& a);
bool all_finite(const Mat& a);

}  // namespace fem::nd
