#include "fem/model/losses.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace fem::model {

namespace {

/// Logits [B x C]: -E(candidate c, row b, sigma_min), via one stacked batch.
nd::Tensor logits_on(nd::Tape& tape, const EnergyModel& model, const EnergyModel::TapeVars& vars,
                     const nd::Mat& y, std::span<const int> candidates) {
  const int batch = y.rows;
  const int n_cand = static_cast<int>(candidates.size());
  if (batch == 0) throw nd::NdError("loss: empty batch");
  if (n_cand == 0) throw nd::NdError("loss: empty candidate set");

  auto ids = std::make_shared<std::vector<int>>();
  ids->reserve(static_cast<size_t>(n_cand) * batch);
  nd::Mat stacked(n_cand * batch, y.cols);
  for (int c = 0; c < n_cand; ++c) {
    for (int b = 0; b < batch; ++b) ids->push_back(candidates[c]);
    std::copy(y.v.begin(), y.v.end(), stacked.v.begin() + static_cast<size_t>(c) * y.v.size());
  }
  const std::vector<double> sigmas(static_cast<size_t>(n_cand) * batch,
                                   model.config().schedule.min());

  nd::Tensor e = model.energy_on(tape, vars, std::move(ids), tape.constant(std::move(stacked)),
                                 sigmas);
  // [C*B x 1] -> [C x B] -> [B x C], negated
  return nd::affine(nd::transpose(nd::reshape(e, n_cand, batch)), -1.0, 0.0);
}

std::vector<int> candidate_positions(std::span<const int> true_ids,
                                     std::span<const int> candidates) {
  std::unordered_map<int, int> pos;
  for (size_t c = 0; c < candidates.size(); ++c) pos[candidates[c]] = static_cast<int>(c);
  std::vector<int> cols(true_ids.size());
  for (size_t b = 0; b < true_ids.size(); ++b) {
    auto it = pos.find(true_ids[b]);
    if (it == pos.end()) throw nd::NdError("xent: true configuration missing from candidates");
    cols[b] = it->second;
  }
  return cols;
}

std::vector<int> all_configs(const EnergyModel& model) {
  std::vector<int> ids(model.num_configs());
  for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
  return ids;
}

}  // namespace

nd::Tensor dsm_loss_on(nd::Tape& tape, const EnergyModel& model, const EnergyModel::TapeVars& vars,
                       std::shared_ptr<const std::vector<int>> config_ids, const nd::Mat& y,
                       std::span<const double> sigmas, const nd::Mat& noise) {
  const int batch = y.rows;
  if (batch == 0) throw nd::NdError("dsm_loss: empty batch");
  if (!y.same_shape(noise)) throw nd::NdError("dsm_loss: noise shape mismatch");

  nd::Mat perturbed = y;
  nd::Mat sigma_wide(batch, y.cols);
  for (int r = 0; r < batch; ++r) {
    for (int c = 0; c < y.cols; ++c) {
      sigma_wide.at(r, c) = sigmas[r];
      perturbed.at(r, c) += sigmas[r] * noise.at(r, c);
    }
  }

  nd::Tensor noisy = tape.leaf(std::move(perturbed));
  nd::Tensor e = model.energy_on(tape, vars, std::move(config_ids), noisy, sigmas);
  nd::Tensor score = nd::affine(nd::input_gradient(nd::sum_all(e), noisy), -1.0, 0.0);

  // sigma^2 * ||score - (clean - noisy)/sigma^2||^2  ==  ||sigma*score + eps||^2
  nd::Tensor resid = nd::add(nd::mul(score, tape.constant(std::move(sigma_wide))),
                             tape.constant(noise));
  return nd::affine(nd::squared_norm(resid), 1.0 / batch, 0.0);
}

nd::Tensor xent_anchor_loss_on(nd::Tape& tape, const EnergyModel& model,
                               const EnergyModel::TapeVars& vars, std::span<const int> true_ids,
                               const nd::Mat& y, std::span<const int> candidates) {
  std::vector<int> cand(candidates.begin(), candidates.end());
  if (cand.empty()) cand = all_configs(model);
  nd::Tensor logits = logits_on(tape, model, vars, y, cand);
  auto cols = std::make_shared<const std::vector<int>>(candidate_positions(true_ids, cand));
  nd::Tensor nll = nd::sub(nd::lse_rows(logits), nd::gather_cols(logits, std::move(cols)));
  return nd::affine(nd::sum_all(nll), 1.0 / y.rows, 0.0);
}

nd::Tensor valley_loss_on(nd::Tape& tape, const EnergyModel& model,
                          const EnergyModel::TapeVars& vars, const nd::Mat& y_rand,
                          std::span<const int> candidates) {
  if (y_rand.rows == 0) throw nd::NdError("valley_loss: no off-data samples");
  std::vector<int> cand(candidates.begin(), candidates.end());
  if (cand.empty()) cand = all_configs(model);
  const int n_cand = static_cast<int>(cand.size());
  nd::Tensor logits = logits_on(tape, model, vars, y_rand, cand);
  nd::Tensor log_probs = nd::sub(logits, nd::repeat_cols(nd::lse_rows(logits), n_cand));
  nd::Tensor floored = nd::clip_min(log_probs, std::log(kProbFloor));
  return nd::affine(nd::sum_all(floored), -1.0 / (static_cast<double>(y_rand.rows) * n_cand), 0.0);
}

nd::Tensor proto_repulsion_loss_on(nd::Tape& tape, const EnergyModel& model,
                                   const EnergyModel::TapeVars& vars, double margin) {
  (void)model;
  nd::Tensor acc;
  int n_pairs = 0;
  for (const nd::Tensor& table : vars.tables) {
    const int rows = table.rows();
    for (int i = 0; i < rows; ++i) {
      for (int j = i + 1; j < rows; ++j) {
        nd::Tensor a = nd::rows_select(table, std::make_shared<const std::vector<int>>(1, i));
        nd::Tensor b = nd::rows_select(table, std::make_shared<const std::vector<int>>(1, j));
        nd::Tensor d = nd::sub(a, b);
        nd::Tensor sq = nd::clip_max(nd::row_sum(nd::mul(d, d)), margin * margin);
        acc = n_pairs == 0 ? sq : nd::add(acc, sq);
        ++n_pairs;
      }
    }
  }
  if (n_pairs == 0) throw nd::NdError("proto_repulsion: need at least two prototypes");
  return nd::affine(acc, -1.0 / n_pairs, 0.0);
}

// ---- value-path mirrors -----------------------------------------------------

namespace {

nd::Mat logits_value(const EnergyModel& model, const nd::Mat& y, std::span<const int> candidates) {
  const int batch = y.rows;
  const int n_cand = static_cast<int>(candidates.size());
  nd::Mat logits(batch, n_cand);
  for (int c = 0; c < n_cand; ++c) {
    std::vector<int> ids(batch, candidates[c]);
    const std::vector<double> e = model.energies(ids, y, model.config().schedule.min());
    for (int b = 0; b < batch; ++b) logits.at(b, c) = -e[b];
  }
  return logits;
}

}  // namespace

double valley_loss_value(const EnergyModel& model, const nd::Mat& y_rand,
                         std::span<const int> candidates) {
  if (y_rand.rows == 0) throw nd::NdError("valley_loss: no off-data samples");
  std::vector<int> cand(candidates.begin(), candidates.end());
  if (cand.empty()) cand = all_configs(model);
  const nd::Mat logits = logits_value(model, y_rand, cand);
  double acc = 0.0;
  for (int b = 0; b < logits.rows; ++b) {
    double m = logits.at(b, 0);
    for (int c = 1; c < logits.cols; ++c) m = std::max(m, logits.at(b, c));
    double z = 0.0;
    for (int c = 0; c < logits.cols; ++c) z += std::exp(logits.at(b, c) - m);
    const double lse = m + std::log(z);
    for (int c = 0; c < logits.cols; ++c) {
      acc += std::max(logits.at(b, c) - lse, std::log(kProbFloor));
    }
  }
  return -acc / (static_cast<double>(logits.rows) * logits.cols);
}

double xent_anchor_loss_value(const EnergyModel& model, std::span<const int> true_ids,
                              const nd::Mat& y) {
  if (y.rows == 0) throw nd::NdError("xent: empty batch");
  const std::vector<int> cand = all_configs(model);
  const nd::Mat logits = logits_value(model, y, cand);
  double acc = 0.0;
  for (int b = 0; b < logits.rows; ++b) {
    double m = logits.at(b, 0);
    for (int c = 1; c < logits.cols; ++c) m = std::max(m, logits.at(b, c));
    double z = 0.0;
    for (int c = 0; c < logits.cols; ++c) z += std::exp(logits.at(b, c) - m);
    acc += m + std::log(z) - logits.at(b, true_ids[b]);
  }
  return acc / logits.rows;
}

double proto_repulsion_loss_value(const EnergyModel& model, double margin) {
  double acc = 0.0;
  int n_pairs = 0;
  for (const nd::Mat& table : model.prototype_tables()) {
    for (int i = 0; i < table.rows; ++i) {
      for (int j = i + 1; j < table.rows; ++j) {
        double sq = 0.0;
        for (int c = 0; c < table.cols; ++c) {
          const double d = table.at(i, c) - table.at(j, c);
          sq += d * d;
        }
        acc += std::min(sq, margin * margin);
        ++n_pairs;
      }
    }
  }
  if (n_pairs == 0) throw nd::NdError("proto_repulsion: need at least two prototypes");
  return -acc / n_pairs;
}

}  // namespace fem::model
