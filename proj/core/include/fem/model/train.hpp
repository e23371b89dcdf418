#pragma once

#include <cstdint>
#include <vector>

#include "fem/bench/dataset.hpp"
#include "fem/model/energy_model.hpp"

namespace fem::model {

struct TrainError : nd::NdError {
  using nd::NdError::NdError;
};

struct TrainConfig {
  double lambda_valley = 0.0;
  double lambda_proto = 0.1;
  double lambda_xent = 1.0;
  double learning_rate = 1e-3;
  int batch = 256;
  int epochs = 200;
  uint64_t seed = 42;
  int valley_batch = 0;     // 0: same as batch
  double proto_margin = 0;  // <= 0: auto, 2x mean per-dim half extent
  int xent_negatives = 0;   // 0: softmax over all configurations

  void validate() const {
    if (lambda_valley < 0 || lambda_proto < 0 || lambda_xent < 0) {
      throw TrainError("TrainConfig: loss weights must be non-negative");
    }
    if (batch < 1 || epochs < 0 || learning_rate <= 0) {
      throw TrainError("TrainConfig: bad optimizer settings");
    }
  }
};

struct EpochLosses {
  double dsm = 0;
  double proto = 0;
  double xent = 0;
  double valley = 0;
};

struct TrainHistory {
  std::vector<EpochLosses> epochs;
};

/// Off-data sampling box: each dim of the data extent scaled 1.5x about its
/// center.
std::vector<std::pair<double, double>> valley_box(
    const std::vector<std::pair<double, double>>& extent);

/// Adam training of the composite objective
///   dsm + lambda_proto * proto + lambda_xent * xent + lambda_valley * valley.
/// Per-sample noise levels are drawn uniformly from the schedule. A non-finite
/// loss aborts with a diagnostic. History has one entry per epoch with the
/// per-step means of each component (skipped components recorded as 0).
TrainHistory train(EnergyModel& model, const bench::Dataset& data, const TrainConfig& cfg);

}  // namespace fem::model
