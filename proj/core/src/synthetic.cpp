#include "fem/bench/synthetic.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "fem/util/stats.hpp"

namespace fem::bench {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;

int popcount_signs(const std::vector<int>& signs) {
  int plus = 0;
  for (int s : signs) plus += s > 0;
  return plus;
}
}  // namespace

double GaussComponent::log_density(std::span<const double> y) const {
  const int dim = static_cast<int>(mean.size());
  if (static_cast<int>(y.size()) != dim) throw nd::NdError("GaussComponent: width mismatch");
  double sq = 0.0;
  for (int i = 0; i < dim; ++i) {
    const double d = y[i] - mean[i];
    sq += d * d;
  }
  const double v_noise = sigma * sigma;
  if (basis.size() == 0) {
    return -0.5 * (dim * (kLog2Pi + std::log(v_noise)) + sq / v_noise);
  }
  // sigma^2 I + sigma_signal^2 Q Q^T with orthonormal Q: split the quadratic
  // form into the signal subspace and its complement.
  const int rank = basis.cols;
  const double v_sig = v_noise + sigma_signal * sigma_signal;
  double sq_proj = 0.0;
  for (int c = 0; c < rank; ++c) {
    double dot = 0.0;
    for (int i = 0; i < dim; ++i) dot += basis.at(i, c) * (y[i] - mean[i]);
    sq_proj += dot * dot;
  }
  const double quad = (sq - sq_proj) / v_noise + sq_proj / v_sig;
  const double log_det = (dim - rank) * std::log(v_noise) + rank * std::log(v_sig);
  return -0.5 * (dim * kLog2Pi + log_det + quad);
}

double GroundTruth::log_likelihood(int k, std::span<const double> y) const {
  if (k < 0 || k >= num_classes()) throw nd::NdError("GroundTruth: class out of range");
  std::vector<double> terms;
  terms.reserve(classes[k].size());
  for (const GaussComponent& c : classes[k]) {
    terms.push_back(std::log(c.weight) + c.log_density(y));
  }
  return util::log_sum_exp(terms);
}

void GroundTruth::validate() const {
  if (classes.empty() || static_cast<int>(prior.size()) != num_classes()) {
    throw nd::NdError("GroundTruth: prior/class mismatch");
  }
  double ptotal = 0.0;
  for (double p : prior) ptotal += p;
  if (std::abs(ptotal - 1.0) > 1e-9) throw nd::NdError("GroundTruth: prior must sum to 1");
  for (const auto& comps : classes) {
    double w = 0.0;
    for (const GaussComponent& c : comps) w += c.weight;
    if (std::abs(w - 1.0) > 1e-9) throw nd::NdError("GroundTruth: weights must sum to 1");
  }
}

std::pair<int, std::vector<double>> GroundTruth::sample(nd::Rng& rng) const {
  double u = rng.uniform();
  int k = 0;
  for (; k + 1 < num_classes(); ++k) {
    if (u < prior[k]) break;
    u -= prior[k];
  }
  const auto& comps = classes[k];
  double w = rng.uniform();
  size_t c = 0;
  for (; c + 1 < comps.size(); ++c) {
    if (w < comps[c].weight) break;
    w -= comps[c].weight;
  }
  const GaussComponent& comp = comps[c];
  std::vector<double> y(comp.mean);
  if (comp.basis.size() == 0) {
    for (double& v : y) v += comp.sigma * rng.normal();
  } else {
    for (int r = 0; r < comp.basis.cols; ++r) {
      const double z = comp.sigma_signal * rng.normal();
      for (int i = 0; i < dim; ++i) y[i] += comp.basis.at(i, r) * z;
    }
    for (double& v : y) v += comp.sigma * rng.normal();
  }
  return {k, std::move(y)};
}

std::vector<double> true_posterior(const GroundTruth& truth, std::span<const double> y) {
  std::vector<double> logits(truth.num_classes());
  for (int k = 0; k < truth.num_classes(); ++k) {
    logits[k] = std::log(std::max(truth.prior[k], 1e-300)) + truth.log_likelihood(k, y);
  }
  return util::softmax(logits);
}

std::vector<double> true_posterior(const GroundTruth& truth,
                                   std::span<const std::vector<double>> evidence) {
  if (evidence.empty()) throw nd::NdError("true_posterior: empty evidence");
  std::vector<double> logits(truth.num_classes());
  for (int k = 0; k < truth.num_classes(); ++k) {
    logits[k] = std::log(std::max(truth.prior[k], 1e-300));
    for (const std::vector<double>& y : evidence) logits[k] += truth.log_likelihood(k, y);
  }
  return util::softmax(logits);
}

std::vector<std::vector<int>> balanced_sign_patterns(int dim, int count) {
  if (dim < 1) throw nd::NdError("balanced_sign_patterns: bad dim");
  const long long available = dim > 62 ? (1LL << 62) : (1LL << (dim - 1));
  if (count > available) {
    throw nd::NdError("balanced_sign_patterns: not enough distinct sign patterns");
  }
  std::vector<std::vector<int>> all;
  for (long long m = 0; m < available; ++m) {
    std::vector<int> signs(dim, 1);
    for (int j = 1; j < dim; ++j) {
      if ((m >> (j - 1)) & 1) signs[j] = -1;
    }
    all.push_back(std::move(signs));
  }
  std::stable_sort(all.begin(), all.end(), [&](const auto& a, const auto& b) {
    const int ia = std::abs(2 * popcount_signs(a) - static_cast<int>(a.size()));
    const int ib = std::abs(2 * popcount_signs(b) - static_cast<int>(b.size()));
    return ia < ib;
  });
  all.resize(count);
  return all;
}

SyntheticData gen_anticorr_bimodal(const SyntheticSpec& spec) {
  spec.validate();
  const int dim = spec.dim;
  const int k_total = spec.num_classes;
  const double s = spec.mode_scale;

  GroundTruth truth;
  truth.dim = dim;
  truth.prior.assign(k_total, 1.0 / k_total);
  truth.classes.resize(k_total);

  auto corner = [&](double sign) {
    GaussComponent c;
    c.weight = 1.0;
    c.mean.assign(dim, sign * s);
    c.sigma = spec.noise_std;
    return c;
  };
  truth.classes[0] = {corner(-1.0)};
  truth.classes[k_total - 1] = {corner(+1.0)};

  const auto patterns = balanced_sign_patterns(dim, k_total - 2);
  for (int j = 0; j < k_total - 2; ++j) {
    for (double sign : {+1.0, -1.0}) {
      GaussComponent c;
      c.weight = 0.5;
      c.mean.resize(dim);
      for (int i = 0; i < dim; ++i) c.mean[i] = sign * s * patterns[j][i];
      c.sigma = spec.noise_std;
      truth.classes[1 + j].push_back(std::move(c));
    }
  }
  truth.validate();

  SyntheticData out;
  out.truth = truth;
  out.data.y = nd::Mat(spec.n_train, dim);
  out.data.labels.resize(spec.n_train);
  out.data.leaf_ids.assign(spec.n_train, 0);
  out.data.num_labels = k_total;
  nd::Rng rng(spec.seed);
  for (int r = 0; r < spec.n_train; ++r) {
    auto [k, y] = truth.sample(rng);
    out.data.labels[r] = k;
    std::copy(y.begin(), y.end(), &out.data.y.v[static_cast<size_t>(r) * dim]);
  }
  out.data.compute_extent();
  return out;
}

MultiLeafData gen_multileaf(const SyntheticSpec& spec, int n_leaves) {
  if (n_leaves < 2) throw nd::NdError("gen_multileaf: need at least two leaves");
  SyntheticSpec conditional = spec;
  conditional.n_train = 1;  // truth only
  SyntheticData proto = gen_anticorr_bimodal(conditional);

  MultiLeafData out;
  out.truth = proto.truth;
  out.leaves.assign(n_leaves, Dataset{});
  for (Dataset& leaf : out.leaves) {
    leaf.y = nd::Mat(spec.n_train, spec.dim);
    leaf.labels.resize(spec.n_train);
    leaf.num_labels = spec.num_classes;
  }
  nd::Rng rng(spec.seed);
  for (int r = 0; r < spec.n_train; ++r) {
    const int k = rng.uniform_int(spec.num_classes);
    for (int l = 0; l < n_leaves; ++l) {
      const auto& comps = out.truth.classes[k];
      size_t ci = 0;
      if (comps.size() > 1) {
        double w = rng.uniform();
        for (; ci + 1 < comps.size(); ++ci) {
          if (w < comps[ci].weight) break;
          w -= comps[ci].weight;
        }
      }
      for (int c = 0; c < spec.dim; ++c) {
        out.leaves[l].y.at(r, c) = comps[ci].mean[c] + comps[ci].sigma * rng.normal();
      }
      out.leaves[l].labels[r] = k;
    }
  }
  for (Dataset& leaf : out.leaves) {
    leaf.leaf_ids.assign(spec.n_train, static_cast<int>(&leaf - out.leaves.data()));
    leaf.compute_extent();
  }
  return out;
}

double ConfoundedData::leaf_log_likelihood(int k, std::span<const double> y) const {
  // marginal over the confounder: 0.5 p0(y) + 0.5 p0(y - delta*1)
  std::vector<double> shifted(y.begin(), y.end());
  for (double& v : shifted) v -= delta;
  const double a = base.log_likelihood(k, y);
  const double b = base.log_likelihood(k, shifted);
  const double terms[] = {std::log(0.5) + a, std::log(0.5) + b};
  return util::log_sum_exp(terms);
}

std::vector<double> ConfoundedData::joint_posterior(std::span<const double> y1,
                                                    std::span<const double> y2) const {
  std::vector<double> s1(y1.begin(), y1.end()), s2(y2.begin(), y2.end());
  for (double& v : s1) v -= delta;
  for (double& v : s2) v -= delta;
  std::vector<double> logits(base.num_classes());
  for (int k = 0; k < base.num_classes(); ++k) {
    const double z0 = base.log_likelihood(k, y1) + base.log_likelihood(k, y2);
    const double z1 = base.log_likelihood(k, s1) + base.log_likelihood(k, s2);
    const double terms[] = {std::log(0.5) + z0, std::log(0.5) + z1};
    logits[k] = std::log(std::max(base.prior[k], 1e-300)) + util::log_sum_exp(terms);
  }
  return util::softmax(logits);
}

std::vector<double> ConfoundedData::per_leaf_product_posterior(
    std::span<const double> y1, std::span<const double> y2) const {
  std::vector<double> logits(base.num_classes());
  for (int k = 0; k < base.num_classes(); ++k) {
    logits[k] = std::log(std::max(base.prior[k], 1e-300)) + leaf_log_likelihood(k, y1) +
                leaf_log_likelihood(k, y2);
  }
  return util::softmax(logits);
}

ConfoundedData gen_confounded(const SyntheticSpec& spec, double delta) {
  SyntheticSpec conditional = spec;
  conditional.n_train = 1;
  SyntheticData proto = gen_anticorr_bimodal(conditional);

  ConfoundedData out;
  out.base = proto.truth;
  out.delta = delta;
  out.leaves.assign(2, Dataset{});
  for (Dataset& leaf : out.leaves) {
    leaf.y = nd::Mat(spec.n_train, spec.dim);
    leaf.labels.resize(spec.n_train);
    leaf.num_labels = spec.num_classes;
  }
  nd::Rng rng(spec.seed);
  for (int r = 0; r < spec.n_train; ++r) {
    const int k = rng.uniform_int(spec.num_classes);
    const bool z = rng.uniform() < 0.5;
    for (int l = 0; l < 2; ++l) {
      const auto& comps = out.base.classes[k];
      size_t ci = 0;
      if (comps.size() > 1) {
        double w = rng.uniform();
        for (; ci + 1 < comps.size(); ++ci) {
          if (w < comps[ci].weight) break;
          w -= comps[ci].weight;
        }
      }
      for (int c = 0; c < spec.dim; ++c) {
        out.leaves[l].y.at(r, c) =
            comps[ci].mean[c] + (z ? delta : 0.0) + comps[ci].sigma * rng.normal();
      }
      out.leaves[l].labels[r] = k;
    }
  }
  for (int l = 0; l < 2; ++l) {
    out.leaves[l].leaf_ids.assign(spec.n_train, l);
    out.leaves[l].compute_extent();
  }
  return out;
}

int HighcardData::num_configs() const {
  long long n = 1;
  for (int p = 0; p < num_parents; ++p) n *= card;
  return static_cast<int>(n);
}

std::vector<int> HighcardData::decode(int config_id) const {
  std::vector<int> digits(num_parents);
  int rest = config_id;
  for (int p = num_parents - 1; p >= 0; --p) {
    digits[p] = rest % card;
    rest /= card;
  }
  return digits;
}

std::vector<double> HighcardData::mean_of(int config_id) const {
  const std::vector<int> digits = decode(config_id);
  std::vector<double> mean(w.rows, 0.0);
  for (int p = 0; p < num_parents; ++p) {
    const int col = p * card + digits[p];
    for (int d = 0; d < w.rows; ++d) mean[d] += w.at(d, col);
  }
  return mean;
}

double HighcardData::log_likelihood(int config_id, std::span<const double> y) const {
  const std::vector<double> mean = mean_of(config_id);
  double sq = 0.0;
  for (size_t i = 0; i < mean.size(); ++i) {
    const double d = y[i] - mean[i];
    sq += d * d;
  }
  const double v = noise_std * noise_std;
  return -0.5 * (w.rows * (kLog2Pi + std::log(v)) + sq / v);
}

std::vector<double> HighcardData::posterior(std::span<const double> y) const {
  const int n = num_configs();
  std::vector<double> logits(n);
  for (int c = 0; c < n; ++c) logits[c] = log_likelihood(c, y);
  return util::softmax(logits);
}

HighcardData gen_highcard_parents(int num_parents, int card, int n, uint64_t seed, int dim,
                                  double mode_scale, double noise_std) {
  if (num_parents < 1 || card < 2 || n < 1) throw nd::NdError("gen_highcard: bad shape");
  long long configs = 1;
  for (int p = 0; p < num_parents; ++p) {
    configs *= card;
    if (configs > (1LL << 31)) throw nd::NdError("gen_highcard: configuration space overflow");
  }

  HighcardData out;
  out.num_parents = num_parents;
  out.card = card;
  out.noise_std = noise_std;
  nd::Rng rng(seed);
  out.w = nd::Mat(dim, num_parents * card);
  const double scale = mode_scale / std::sqrt(static_cast<double>(num_parents));
  for (double& x : out.w.v) x = scale * rng.normal();

  out.data.y = nd::Mat(n, dim);
  out.data.labels.resize(n);
  out.data.leaf_ids.assign(n, 0);
  out.data.num_labels = static_cast<int>(configs);
  for (int r = 0; r < n; ++r) {
    const int cfg = rng.uniform_int(static_cast<int>(configs));
    out.data.labels[r] = cfg;
    const std::vector<double> mean = out.mean_of(cfg);
    for (int c = 0; c < dim; ++c) out.data.y.at(r, c) = mean[c] + noise_std * rng.normal();
  }
  out.data.compute_extent();
  return out;
}

LowRankData gen_lowrank(int dim_ambient, int rank, const SyntheticSpec& spec) {
  if (rank >= dim_ambient) throw nd::NdError("gen_lowrank: rank must be below ambient dim");
  SyntheticSpec latent = spec;
  latent.dim = rank;
  latent.n_train = 1;
  const GroundTruth latent_truth = gen_anticorr_bimodal(latent).truth;

  nd::Rng rng(spec.seed);
  Eigen::MatrixXd g(dim_ambient, rank);
  for (int i = 0; i < dim_ambient; ++i) {
    for (int j = 0; j < rank; ++j) g(i, j) = rng.normal();
  }
  const Eigen::MatrixXd thin_q =
      Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ() *
      Eigen::MatrixXd::Identity(dim_ambient, rank);

  LowRankData out;
  out.q = nd::Mat(dim_ambient, rank);
  for (int i = 0; i < dim_ambient; ++i) {
    for (int j = 0; j < rank; ++j) out.q.at(i, j) = thin_q(i, j);
  }

  const double sigma_noise = spec.noise_std / 10.0;
  out.truth.dim = dim_ambient;
  out.truth.prior = latent_truth.prior;
  out.truth.classes.resize(latent_truth.num_classes());
  for (int k = 0; k < latent_truth.num_classes(); ++k) {
    for (const GaussComponent& zc : latent_truth.classes[k]) {
      GaussComponent c;
      c.weight = zc.weight;
      c.mean.assign(dim_ambient, 0.0);
      for (int i = 0; i < dim_ambient; ++i) {
        for (int j = 0; j < rank; ++j) c.mean[i] += out.q.at(i, j) * zc.mean[j];
      }
      c.sigma = sigma_noise;
      c.basis = out.q;
      c.sigma_signal = spec.noise_std;
      out.truth.classes[k].push_back(std::move(c));
    }
  }
  out.truth.validate();

  out.data.y = nd::Mat(spec.n_train, dim_ambient);
  out.data.labels.resize(spec.n_train);
  out.data.leaf_ids.assign(spec.n_train, 0);
  out.data.num_labels = spec.num_classes;
  for (int r = 0; r < spec.n_train; ++r) {
    auto [k, y] = out.truth.sample(rng);
    out.data.labels[r] = k;
    std::copy(y.begin(), y.end(), &out.data.y.v[static_cast<size_t>(r) * dim_ambient]);
  }
  out.data.compute_extent();
  return out;
}

}  // namespace fem::bench
