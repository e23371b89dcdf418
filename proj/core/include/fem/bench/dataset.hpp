#pragma once

#include <span>
#include <utility>
#include <vector>

#include "fem/nd/mat.hpp"

namespace fem::bench {

/// Labeled continuous observations. `labels` are class indices or flattened
/// parent-configuration ids; `leaf_ids` tag which continuous child a row
/// belongs to (0 unless stated otherwise).
struct Dataset {
  nd::Mat y;                    // [n x dim]
  std::vector<int> labels;      // size n
  std::vector<int> leaf_ids;    // size n
  int num_labels = 0;
  std::vector<std::pair<double, double>> extent;  // per-dim [min, max]

  int size() const { return y.rows; }
  int dim() const { return y.cols; }

  std::span<const double> row(int r) const {
    return {&y.v[static_cast<size_t>(r) * y.cols], static_cast<size_t>(y.cols)};
  }

  void compute_extent() {
    extent.assign(y.cols, {0.0, 0.0});
    for (int c = 0; c < y.cols; ++c) {
      double lo = y.at(0, c), hi = y.at(0, c);
      for (int r = 1; r < y.rows; ++r) {
        lo = std::min(lo, y.at(r, c));
        hi = std::max(hi, y.at(r, c));
      }
      extent[c] = {lo, hi};
    }
  }

  void validate() const {
    if (y.rows != static_cast<int>(labels.size())) throw nd::NdError("Dataset: label count");
    if (!leaf_ids.empty() && y.rows != static_cast<int>(leaf_ids.size())) {
      throw nd::NdError("Dataset: leaf id count");
    }
    for (int k : labels) {
      if (k < 0 || k >= num_labels) throw nd::NdError("Dataset: label out of range");
    }
    for (const auto& [lo, hi] : extent) {
      if (lo > hi) throw nd::NdError("Dataset: bad extent");
    }
  }
};

}  // namespace fem::bench
