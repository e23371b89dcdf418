#include "fem/model/train.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "fem/model/losses.hpp"
#include "fem/nd/rng.hpp"
#include "fem/opt/adam.hpp"

namespace fem::model {

std::vector<std::pair<double, double>> valley_box(
    const std::vector<std::pair<double, double>>& extent) {
  std::vector<std::pair<double, double>> box;
  box.reserve(extent.size());
  for (const auto& [lo, hi] : extent) {
    const double center = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo) * 1.5;
    box.emplace_back(center - half, center + half);
  }
  return box;
}

namespace {

double auto_margin(const std::vector<std::pair<double, double>>& extent) {
  double acc = 0.0;
  for (const auto& [lo, hi] : extent) acc += 0.5 * (hi - lo);
  return extent.empty() ? 1.0 : 2.0 * acc / static_cast<double>(extent.size());
}

// Candidate configurations for one step's softmax: every true id in the batch
// plus uniform negatives up to `budget`. Exact softmax when budget covers the
// whole configuration space.
std::vector<int> step_candidates(std::span<const int> true_ids, int num_configs, int budget,
                                 nd::Rng& rng) {
  if (budget <= 0 || budget >= num_configs) {
    std::vector<int> all(num_configs);
    for (int i = 0; i < num_configs; ++i) all[i] = i;
    return all;
  }
  std::set<int> chosen(true_ids.begin(), true_ids.end());
  while (static_cast<int>(chosen.size()) < budget) chosen.insert(rng.uniform_int(num_configs));
  return {chosen.begin(), chosen.end()};
}

}  // namespace

TrainHistory train(EnergyModel& model, const bench::Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) throw TrainError("train: empty dataset");
  if (data.extent.empty()) throw TrainError("train: dataset extent missing");
  if (data.dim() != model.input_dim()) throw TrainError("train: observation width mismatch");
  for (int k : data.labels) {
    if (k < 0 || k >= model.num_configs()) throw TrainError("train: label out of range");
  }

  model.data_extent = data.extent;
  const auto box = valley_box(data.extent);
  const double margin = cfg.proto_margin > 0 ? cfg.proto_margin : auto_margin(data.extent);
  const int valley_batch = cfg.valley_batch > 0 ? cfg.valley_batch : cfg.batch;
  const int total_protos = [&] {
    int n = 0;
    for (const nd::Mat& t : model.prototype_tables()) n += t.rows * (t.rows - 1) / 2;
    return n;
  }();
  const bool use_proto = cfg.lambda_proto > 0 && total_protos > 0;
  const bool use_xent = cfg.lambda_xent > 0;
  const bool use_valley = cfg.lambda_valley > 0;

  nd::Rng rng(cfg.seed);
  opt::Adam adam(cfg.learning_rate);
  const std::vector<double>& levels = model.config().schedule.levels;

  std::vector<int> order(data.size());
  for (int i = 0; i < data.size(); ++i) order[i] = i;

  TrainHistory history;
  history.epochs.reserve(cfg.epochs);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    EpochLosses sums;
    int steps = 0;

    for (int start = 0; start < data.size(); start += cfg.batch) {
      const int b = std::min(cfg.batch, data.size() - start);

      nd::Mat y(b, data.dim());
      auto ids = std::make_shared<std::vector<int>>(b);
      std::vector<double> sigmas(b);
      nd::Mat noise(b, data.dim());
      for (int r = 0; r < b; ++r) {
        const int src = order[start + r];
        const auto row = data.row(src);
        std::copy(row.begin(), row.end(), &y.v[static_cast<size_t>(r) * y.cols]);
        (*ids)[r] = data.labels[src];
        sigmas[r] = levels[rng.uniform_int(static_cast<int>(levels.size()))];
        for (int c = 0; c < data.dim(); ++c) noise.at(r, c) = rng.normal();
      }

      std::vector<int> cands =
          step_candidates(*ids, model.num_configs(), cfg.xent_negatives, rng);

      try {
        nd::Tape tape;
        EnergyModel::TapeVars vars = model.vars_on(tape, true);

        nd::Tensor dsm = dsm_loss_on(tape, model, vars, ids, y, sigmas, noise);
        nd::Tensor total = dsm;
        sums.dsm += dsm.value().at(0, 0);

        if (use_proto) {
          nd::Tensor proto = proto_repulsion_loss_on(tape, model, vars, margin);
          sums.proto += proto.value().at(0, 0);
          total = nd::add(total, nd::affine(proto, cfg.lambda_proto, 0.0));
        }
        if (use_xent) {
          nd::Tensor xent = xent_anchor_loss_on(tape, model, vars, *ids, y, cands);
          sums.xent += xent.value().at(0, 0);
          total = nd::add(total, nd::affine(xent, cfg.lambda_xent, 0.0));
        }
        if (use_valley) {
          nd::Mat y_rand(valley_batch, data.dim());
          for (int r = 0; r < valley_batch; ++r) {
            for (int c = 0; c < data.dim(); ++c) {
              y_rand.at(r, c) = rng.uniform(box[c].first, box[c].second);
            }
          }
          nd::Tensor valley = valley_loss_on(tape, model, vars, y_rand, cands);
          sums.valley += valley.value().at(0, 0);
          total = nd::add(total, nd::affine(valley, cfg.lambda_valley, 0.0));
        }

        if (!std::isfinite(total.value().at(0, 0))) {
          throw nd::NdError("total loss is not finite");
        }
        std::vector<nd::Mat> grads = nd::param_gradients(total, vars.params);
        adam.step(model.params(), grads);
      } catch (const nd::NdError& e) {
        throw TrainError("training aborted at epoch " + std::to_string(epoch) + ", step " +
                         std::to_string(steps) + ": " + e.what());
      }
      ++steps;
    }

    if (steps > 0) {
      sums.dsm /= steps;
      sums.proto /= steps;
      sums.xent /= steps;
      sums.valley /= steps;
    }
    history.epochs.push_back(sums);
  }
  return history;
}

}  // namespace fem::model
