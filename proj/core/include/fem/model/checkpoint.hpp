#pragma once

#include <string>

#include "fem/model/energy_model.hpp"

namespace fem::model {

/// Self-describing single-file checkpoint (JSON): format tag, version,
/// hyperparameters, schedule, training extent and every weight array.
/// Doubles are written with shortest round-trip formatting; load is bit-exact.
void save_checkpoint(const EnergyModel& model, const std::string& path);
EnergyModel load_checkpoint(const std::string& path);

}  // namespace fem::model
