#include "fem/model/langevin.hpp"

#include <cmath>

#include "fem/model/train.hpp"
#include "fem/nd/rng.hpp"

namespace fem::model {

nd::Mat sample_langevin(const EnergyModel& model, int config_id, int n_samples,
                        const LangevinConfig& cfg) {
  if (n_samples < 1) throw nd::NdError("sample_langevin: need at least one sample");
  if (config_id < 0 || config_id >= model.num_configs()) {
    throw nd::NdError("sample_langevin: configuration out of range");
  }
  std::vector<std::pair<double, double>> box = cfg.start_box;
  if (box.empty()) {
    if (model.data_extent.empty()) {
      throw nd::NdError("sample_langevin: no start box and model has no training extent");
    }
    box = valley_box(model.data_extent);
  }
  const int dim = model.input_dim();
  if (static_cast<int>(box.size()) != dim) throw nd::NdError("sample_langevin: box width");

  nd::Rng rng(cfg.seed);
  nd::Mat y(n_samples, dim);
  for (int r = 0; r < n_samples; ++r) {
    for (int c = 0; c < dim; ++c) y.at(r, c) = rng.uniform(box[c].first, box[c].second);
  }

  auto ids = std::make_shared<const std::vector<int>>(n_samples, config_id);
  const double sigma_min = model.config().schedule.min();

  for (double sigma : model.config().schedule.levels) {
    const double alpha = cfg.step_scale * (sigma * sigma) / (sigma_min * sigma_min);
    const double noise_scale = std::sqrt(alpha);
    const std::vector<double> sigmas(n_samples, sigma);
    for (int t = 0; t < cfg.n_per_level; ++t) {
      nd::Tape tape;
      EnergyModel::TapeVars vars = model.vars_on(tape, false);
      nd::Tensor yt = tape.leaf(y);
      nd::Tensor e = model.energy_on(tape, vars, ids, yt, sigmas);
      const nd::Mat grad = nd::input_gradient(nd::sum_all(e), yt).value();
      for (size_t j = 0; j < y.size(); ++j) {
        y.v[j] += -0.5 * alpha * grad.v[j] + noise_scale * rng.normal();
        if (!(std::abs(y.v[j]) <= cfg.divergence_bound)) {
          throw nd::NdError("sample_langevin: chain diverged");
        }
      }
    }
  }
  return y;
}

}  // namespace fem::model
