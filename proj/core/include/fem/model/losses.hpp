#pragma once

#include <memory>
#include <span>
#include <vector>

#include "fem/model/energy_model.hpp"

namespace fem::model {

constexpr double kProbFloor = 1e-12;

/// Denoising score-matching loss over one batch. `y` holds clean rows, each
/// perturbed by sigmas[r] * noise_row; the target score is recovered from the
/// noise. The returned scalar is differentiable w.r.t. the model parameters
/// through the input-gradient graph (mixed second order).
nd::Tensor dsm_loss_on(nd::Tape& tape, const EnergyModel& model, const EnergyModel::TapeVars& vars,
                       std::shared_ptr<const std::vector<int>> config_ids, const nd::Mat& y,
                       std::span<const double> sigmas, const nd::Mat& noise);

/// Mean cross entropy of softmax(-E(candidate, y, sigma_min)) against the true
/// configuration, evaluated on clean rows. `candidates` lists the
/// configurations forming the softmax; it must contain every row's true id.
nd::Tensor xent_anchor_loss_on(nd::Tape& tape, const EnergyModel& model,
                               const EnergyModel::TapeVars& vars, std::span<const int> true_ids,
                               const nd::Mat& y, std::span<const int> candidates);

/// Uniformity pressure at off-data points: mean over rows of
/// -(1/C) sum_c log softmax(-E)_c with probabilities floored at kProbFloor.
/// Bounded below by log C, attained at uniform softmax.
nd::Tensor valley_loss_on(nd::Tape& tape, const EnergyModel& model,
                          const EnergyModel::TapeVars& vars, const nd::Mat& y_rand,
                          std::span<const int> candidates);

/// Pairwise prototype repulsion, -mean of squared distances clipped at
/// margin^2, averaged over parent tables with >= 2 rows.
nd::Tensor proto_repulsion_loss_on(nd::Tape& tape, const EnergyModel& model,
                                   const EnergyModel::TapeVars& vars, double margin);

// Value-path equivalents used by tests and diagnostics.
double valley_loss_value(const EnergyModel& model, const nd::Mat& y_rand,
                         std::span<const int> candidates);
double xent_anchor_loss_value(const EnergyModel& model, std::span<const int> true_ids,
                              const nd::Mat& y);
double proto_repulsion_loss_value(const EnergyModel& model, double margin);

}  // namespace fem::model
