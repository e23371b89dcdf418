#pragma once

#include <cmath>
#include <vector>

#include "fem/nd/mat.hpp"

namespace fem::model {

/// Noise levels for score training and annealed sampling, strictly decreasing.
struct SigmaSchedule {
  std::vector<double> levels;

  static SigmaSchedule geometric(double sigma_max, double sigma_min, int n_levels) {
    if (sigma_max <= sigma_min || sigma_min <= 0.0 || n_levels < 2) {
      throw nd::NdError("SigmaSchedule: need sigma_max > sigma_min > 0 and >= 2 levels");
    }
    SigmaSchedule s;
    const double ratio = std::pow(sigma_min / sigma_max, 1.0 / (n_levels - 1));
    double v = sigma_max;
    for (int i = 0; i < n_levels; ++i, v *= ratio) s.levels.push_back(v);
    s.levels.back() = sigma_min;
    return s;
  }

  double min() const { return levels.back(); }
  double max() const { return levels.front(); }
  int count() const { return static_cast<int>(levels.size()); }

  void validate() const {
    if (levels.size() < 2) throw nd::NdError("SigmaSchedule: too few levels");
    for (size_t i = 0; i < levels.size(); ++i) {
      if (levels[i] <= 0.0) throw nd::NdError("SigmaSchedule: non-positive level");
      if (i > 0 && levels[i] >= levels[i - 1]) {
        throw nd::NdError("SigmaSchedule: levels must be strictly decreasing");
      }
    }
  }
};

/// Sinusoidal features of log(sigma) at geometrically spaced frequencies,
/// interleaved (sin, cos) pairs. At sigma = 1 this is (0, 1, 0, 1, ...).
inline std::vector<double> sigma_embedding(double sigma, int dim) {
  if (sigma <= 0.0) throw nd::NdError("sigma_embedding: sigma must be positive");
  if (dim < 2 || dim % 2 != 0) throw nd::NdError("sigma_embedding: dim must be even and >= 2");
  const double u = std::log(sigma);
  const int half = dim / 2;
  std::vector<double> e(dim);
  constexpr double kFreqSpan = 100.0;
  for (int i = 0; i < half; ++i) {
    const double freq = half > 1 ? std::pow(kFreqSpan, static_cast<double>(i) / (half - 1)) : 1.0;
    e[2 * i] = std::sin(freq * u);
    e[2 * i + 1] = std::cos(freq * u);
  }
  return e;
}

}  // namespace fem::model
