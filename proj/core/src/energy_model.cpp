#include "fem/model/energy_model.hpp"

#include <Eigen/Core>
#include <cmath>

#include "fem/nd/rng.hpp"

namespace fem::model {

namespace {
using ERow = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<ERow>;
using ECMap = Eigen::Map<const ERow>;
}  // namespace

EnergyModel::EnergyModel(EnergyModelConfig cfg, uint64_t init_seed) : cfg_(std::move(cfg)) {
  if (cfg_.input_dim < 1) throw nd::NdError("EnergyModel: input_dim must be positive");
  if (cfg_.parent_cards.empty()) throw nd::NdError("EnergyModel: needs at least one parent");
  for (int c : cfg_.parent_cards) {
    if (c < 1) throw nd::NdError("EnergyModel: parent cardinality must be positive");
  }
  cfg_.schedule.validate();

  nd::Rng rng(init_seed);
  for (int card : cfg_.parent_cards) {
    nd::Mat table(card, cfg_.proto_dim);
    for (double& x : table.v) x = rng.normal();
    tables_.push_back(std::move(table));
  }
  const int in = net_input_dim();
  mlp_.push_back(nd::LinearLayer::glorot(in, cfg_.hidden, rng));
  mlp_.push_back(nd::LinearLayer::glorot(cfg_.hidden, cfg_.hidden, rng));
  mlp_.push_back(nd::LinearLayer::glorot(cfg_.hidden, 1, rng));
}

int EnergyModel::num_configs() const {
  long long n = 1;
  for (int c : cfg_.parent_cards) {
    n *= c;
    if (n > (1LL << 31)) throw nd::NdError("EnergyModel: configuration space overflow");
  }
  return static_cast<int>(n);
}

std::vector<int> EnergyModel::decode_config(int config_id) const {
  if (config_id < 0 || config_id >= num_configs()) {
    throw nd::NdError("EnergyModel: configuration index out of range");
  }
  std::vector<int> digits(cfg_.parent_cards.size());
  int rest = config_id;
  for (int p = num_parents() - 1; p >= 0; --p) {
    digits[p] = rest % cfg_.parent_cards[p];
    rest /= cfg_.parent_cards[p];
  }
  return digits;
}

int EnergyModel::encode_config(std::span<const int> digits) const {
  if (static_cast<int>(digits.size()) != num_parents()) {
    throw nd::NdError("EnergyModel: wrong number of parent values");
  }
  int id = 0;
  for (int p = 0; p < num_parents(); ++p) {
    if (digits[p] < 0 || digits[p] >= cfg_.parent_cards[p]) {
      throw nd::NdError("EnergyModel: parent value out of range");
    }
    id = id * cfg_.parent_cards[p] + digits[p];
  }
  return id;
}

nd::Mat EnergyModel::sigma_rows(std::span<const double> sigmas) const {
  nd::Mat phi(static_cast<int>(sigmas.size()), cfg_.sigma_embed_dim);
  for (size_t r = 0; r < sigmas.size(); ++r) {
    const std::vector<double> e = sigma_embedding(sigmas[r], cfg_.sigma_embed_dim);
    std::copy(e.begin(), e.end(), &phi.v[r * static_cast<size_t>(cfg_.sigma_embed_dim)]);
  }
  return phi;
}

std::vector<double> EnergyModel::energies(std::span<const int> config_ids, const nd::Mat& y,
                                          double sigma) const {
  const int batch = y.rows;
  if (static_cast<int>(config_ids.size()) != batch) {
    throw nd::NdError("EnergyModel::energies: batch size mismatch");
  }
  if (y.cols != cfg_.input_dim) throw nd::NdError("EnergyModel::energies: observation width");

  nd::Mat x(batch, net_input_dim());
  const std::vector<double> phi = sigma_embedding(sigma, cfg_.sigma_embed_dim);
  const int pd = cfg_.proto_dim;
  for (int r = 0; r < batch; ++r) {
    const std::vector<int> digits = decode_config(config_ids[r]);
    double* row = &x.v[static_cast<size_t>(r) * x.cols];
    for (int p = 0; p < num_parents(); ++p) {
      const nd::Mat& tab = tables_[p];
      std::copy_n(&tab.v[static_cast<size_t>(digits[p]) * pd], pd, row + p * pd);
    }
    std::copy_n(&y.v[static_cast<size_t>(r) * y.cols], y.cols, row + proto_total_dim());
    std::copy(phi.begin(), phi.end(), row + proto_total_dim() + y.cols);
  }

  // h = gelu(x W + b) twice, then the linear head
  ERow h = ECMap(x.v.data(), x.rows, x.cols) * ECMap(mlp_[0].w.v.data(), mlp_[0].w.rows, mlp_[0].w.cols);
  for (size_t l = 0;; ++l) {
    h.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(mlp_[l].b.v.data(), mlp_[l].b.cols);
    if (l + 1 == mlp_.size()) break;
    for (int i = 0; i < h.rows(); ++i) {
      for (int j = 0; j < h.cols(); ++j) h(i, j) = nd::gelu_scalar(h(i, j));
    }
    h = (h * ECMap(mlp_[l + 1].w.v.data(), mlp_[l + 1].w.rows, mlp_[l + 1].w.cols)).eval();
  }

  std::vector<double> out(batch);
  for (int r = 0; r < batch; ++r) {
    out[r] = h(r, 0);
    if (!std::isfinite(out[r])) throw nd::NdError("EnergyModel::energies: non-finite energy");
  }
  return out;
}

double EnergyModel::energy(int config_id, std::span<const double> y, double sigma) const {
  nd::Mat ym(1, static_cast<int>(y.size()));
  std::copy(y.begin(), y.end(), ym.v.begin());
  const int ids[] = {config_id};
  return energies(ids, ym, sigma)[0];
}

EnergyModel::TapeVars EnergyModel::vars_on(nd::Tape& tape, bool trainable) const {
  TapeVars v;
  for (const nd::Mat& t : tables_) {
    v.tables.push_back(trainable ? tape.leaf(t) : tape.constant(t));
    v.params.push_back(v.tables.back());
  }
  for (const nd::LinearLayer& l : mlp_) {
    v.layers.push_back(nd::layer_on(tape, l, trainable));
    v.params.push_back(v.layers.back().w);
    v.params.push_back(v.layers.back().b);
  }
  return v;
}

nd::Tensor EnergyModel::energy_on(nd::Tape& tape, const TapeVars& vars,
                                  std::shared_ptr<const std::vector<int>> config_ids, nd::Tensor y,
                                  std::span<const double> sigmas) const {
  const int batch = y.rows();
  if (static_cast<int>(config_ids->size()) != batch || static_cast<int>(sigmas.size()) != batch) {
    throw nd::NdError("EnergyModel::energy_on: batch size mismatch");
  }

  nd::Tensor proto;
  if (num_parents() == 1) {
    proto = nd::rows_select(vars.tables[0], config_ids);
  } else {
    std::vector<std::vector<int>> digit_cols(num_parents(), std::vector<int>(batch));
    for (int r = 0; r < batch; ++r) {
      const std::vector<int> digits = decode_config((*config_ids)[r]);
      for (int p = 0; p < num_parents(); ++p) digit_cols[p][r] = digits[p];
    }
    for (int p = 0; p < num_parents(); ++p) {
      nd::Tensor part = nd::rows_select(
          vars.tables[p], std::make_shared<const std::vector<int>>(std::move(digit_cols[p])));
      proto = p == 0 ? part : nd::concat_cols(proto, part);
    }
  }

  nd::Tensor phi = tape.constant(sigma_rows(sigmas));
  nd::Tensor x = nd::concat_cols(nd::concat_cols(proto, y), phi);
  return nd::forward_mlp(vars.layers, x);
}

std::vector<nd::Mat*> EnergyModel::params() {
  std::vector<nd::Mat*> ps;
  for (nd::Mat& t : tables_) ps.push_back(&t);
  for (nd::LinearLayer& l : mlp_) {
    ps.push_back(&l.w);
    ps.push_back(&l.b);
  }
  return ps;
}

std::vector<const nd::Mat*> EnergyModel::params() const {
  std::vector<const nd::Mat*> ps;
  for (const nd::Mat& t : tables_) ps.push_back(&t);
  for (const nd::LinearLayer& l : mlp_) {
    ps.push_back(&l.w);
    ps.push_back(&l.b);
  }
  return ps;
}

double valley_lambda_lookup(int dim) {
  static const double table[] = {0.3, 0.3, 0.3, 1.5, 2.0, 5.0, 5.0, 15.0, 25.0, 55.0};
  if (dim < 2 || dim > 11) {
    throw nd::NdError("valley_lambda_lookup: calibrated for dims 2..11 only");
  }
  return table[dim - 2];
}

}  // namespace fem::model
