#pragma once

#include <span>
#include <vector>

#include "fem/model/energy_model.hpp"

namespace fem::model {

/// Probability vector over parent configurations; entries in [0,1], sums to 1.
struct Posterior {
  std::vector<double> probs;
};

/// One observed continuous child.
struct EvidenceItem {
  int leaf_id = 0;
  std::vector<double> y;
};

/// Per-configuration logits: -sum over evidence of E(config, y_i, sigma_min).
/// The same energy factor serves every leaf; conditionally independent leaves
/// compose by plain addition.
std::vector<double> evidence_logits(const EnergyModel& model,
                                    std::span<const EvidenceItem> evidence);

/// softmax over configurations of log prior + evidence logits.
Posterior posterior(const EnergyModel& model, std::span<const EvidenceItem> evidence,
                    std::span<const double> prior);

}  // namespace fem::model
