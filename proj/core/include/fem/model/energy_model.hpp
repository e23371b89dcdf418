#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "fem/nd/mlp.hpp"
#include "fem/nd/tape.hpp"
#include "fem/model/sigma.hpp"

namespace fem::model {

struct EnergyModelConfig {
  int input_dim = 0;                  // continuous observation width
  std::vector<int> parent_cards;      // one entry per discrete parent
  int proto_dim = 8;                  // embedding width per parent
  int hidden = 128;
  int sigma_embed_dim = 16;
  SigmaSchedule schedule;
};

/// Conditional energy network over (discrete parent configuration, continuous
/// observation, noise level). Parent values select learned prototype rows,
/// which are concatenated with the observation and the sigma embedding and fed
/// through a small GELU MLP ending in one scalar.
class EnergyModel {
 public:
  EnergyModel() = default;
  EnergyModel(EnergyModelConfig cfg, uint64_t init_seed);

  const EnergyModelConfig& config() const { return cfg_; }
  int input_dim() const { return cfg_.input_dim; }
  int num_parents() const { return static_cast<int>(cfg_.parent_cards.size()); }
  int num_configs() const;
  int proto_total_dim() const { return num_parents() * cfg_.proto_dim; }
  int net_input_dim() const { return proto_total_dim() + cfg_.input_dim + cfg_.sigma_embed_dim; }

  /// Mixed-radix digits of a flat configuration index, one per parent.
  std::vector<int> decode_config(int config_id) const;
  int encode_config(std::span<const int> digits) const;

  // ---- value path (no autodiff) ----
  /// Energies for a batch of rows sharing one sigma; y is [B x D].
  std::vector<double> energies(std::span<const int> config_ids, const nd::Mat& y,
                               double sigma) const;
  double energy(int config_id, std::span<const double> y, double sigma) const;

  // ---- tape path (training / sampling) ----
  struct TapeVars {
    std::vector<nd::Tensor> tables;
    std::vector<nd::LayerVars> layers;
    std::vector<nd::Tensor> params;  // flattened, order matches EnergyModel::params()
  };
  TapeVars vars_on(nd::Tape& tape, bool trainable) const;

  /// Energy column [B x 1] for per-row configs, observation node `y` (which
  /// may be a leaf for input gradients) and per-row sigmas.
  nd::Tensor energy_on(nd::Tape& tape, const TapeVars& vars,
                       std::shared_ptr<const std::vector<int>> config_ids, nd::Tensor y,
                       std::span<const double> sigmas) const;

  std::vector<nd::Mat*> params();
  std::vector<const nd::Mat*> params() const;

  std::vector<nd::Mat>& prototype_tables() { return tables_; }
  const std::vector<nd::Mat>& prototype_tables() const { return tables_; }
  std::vector<nd::LinearLayer>& layers() { return mlp_; }
  const std::vector<nd::LinearLayer>& layers() const { return mlp_; }

  /// Per-dim data range seen at training time; drives the valley box and the
  /// default Langevin start box. Empty before training.
  std::vector<std::pair<double, double>> data_extent;

 private:
  nd::Mat sigma_rows(std::span<const double> sigmas) const;

  EnergyModelConfig cfg_;
  std::vector<nd::Mat> tables_;        // per parent [card x proto_dim]
  std::vector<nd::LinearLayer> mlp_;   // input -> hidden -> hidden -> 1
};

/// Calibrated valley-regularization weight by observation dimension. Values
/// exist for dims 2..11 only; anything else is an error rather than an
/// extrapolation.
double valley_lambda_lookup(int dim);

}  // namespace fem::model
