#include "fem/nd/mat.hpp"

#include <Eigen/Core>
#include <cmath>

namespace fem::nd {

namespace {
using EMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ECMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
}  // namespace

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols != b.rows) throw NdError("matmul: inner dimensions disagree");
  Mat out(a.rows, b.cols);
  EMap(out.v.data(), out.rows, out.cols).noalias() =
      ECMap(a.v.data(), a.rows, a.cols) * ECMap(b.v.data(), b.rows, b.cols);
  return out;
}

Mat transposed(const Mat& a) {
  Mat out(a.cols, a.rows);
  EMap(out.v.data(), out.rows, out.cols) = ECMap(a.v.data(), a.rows, a.cols).transpose();
  return out;
}

bool all_finite(const Mat& a) {
  for (double x : a.v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace fem::nd
