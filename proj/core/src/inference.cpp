#include "fem/model/inference.hpp"

#include <cmath>

#include "fem/util/stats.hpp"

namespace fem::model {

std::vector<double> evidence_logits(const EnergyModel& model,
                                    std::span<const EvidenceItem> evidence) {
  if (evidence.empty()) throw nd::NdError("posterior: empty evidence");
  const int n = model.num_configs();
  const double sigma_min = model.config().schedule.min();

  std::vector<int> ids(n);
  for (int k = 0; k < n; ++k) ids[k] = k;

  std::vector<double> logits(n, 0.0);
  for (const EvidenceItem& item : evidence) {
    if (static_cast<int>(item.y.size()) != model.input_dim()) {
      throw nd::NdError("posterior: evidence width mismatch");
    }
    nd::Mat y(n, model.input_dim());
    for (int k = 0; k < n; ++k) {
      std::copy(item.y.begin(), item.y.end(), &y.v[static_cast<size_t>(k) * y.cols]);
    }
    const std::vector<double> e = model.energies(ids, y, sigma_min);
    for (int k = 0; k < n; ++k) logits[k] -= e[k];
  }
  return logits;
}

Posterior posterior(const EnergyModel& model, std::span<const EvidenceItem> evidence,
                    std::span<const double> prior) {
  std::vector<double> logits = evidence_logits(model, evidence);
  if (static_cast<int>(prior.size()) != model.num_configs()) {
    throw nd::NdError("posterior: prior length mismatch");
  }
  double total = 0.0;
  for (double p : prior) {
    if (p < 0.0) throw nd::NdError("posterior: negative prior entry");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) throw nd::NdError("posterior: prior must sum to 1");
  for (size_t k = 0; k < logits.size(); ++k) {
    logits[k] += std::log(std::max(prior[k], 1e-300));
  }
  return Posterior{util::softmax(logits)};
}

}  // namespace fem::model
