#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fem/model/energy_model.hpp"

namespace fem::model {

struct LangevinConfig {
  int n_per_level = 100;
  double step_scale = 2e-5;  // base step; level i uses step_scale * (sigma_i / sigma_min)^2
  uint64_t seed = 0;
  double divergence_bound = 1e6;
  /// Start box; empty falls back to the model's training extent scaled 1.5x.
  std::vector<std::pair<double, double>> start_box;
};

/// Annealed Langevin sampling of the continuous child given one parent
/// configuration: chains start uniform in the box and follow
///   y <- y - (alpha_i/2) dE/dy + sqrt(alpha_i) * noise
/// through the full schedule. Returns [n_samples x D]. Aborts if any
/// coordinate passes the divergence bound.
nd::Mat sample_langevin(const EnergyModel& model, int config_id, int n_samples,
                        const LangevinConfig& cfg);

}  // namespace fem::model
