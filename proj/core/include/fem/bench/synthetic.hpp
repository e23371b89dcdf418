#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fem/bench/dataset.hpp"
#include "fem/nd/rng.hpp"

namespace fem::bench {

enum class Layout {
  kAnticorrBimodal,
  kMultiLeaf,
  kConfounded,
  kHighcardParents,
  kLowRank,
};

struct SyntheticSpec {
  int dim = 5;
  int num_classes = 3;
  double mode_scale = 2.0;
  double noise_std = 0.4;
  int n_train = 30000;
  uint64_t seed = 42;
  Layout layout = Layout::kAnticorrBimodal;

  void validate() const {
    if (dim < 1 || n_train < 1) throw nd::NdError("SyntheticSpec: bad dim or n_train");
    if (mode_scale <= 0 || noise_std <= 0) throw nd::NdError("SyntheticSpec: scales positive");
    if (layout == Layout::kAnticorrBimodal && num_classes < 3) {
      throw nd::NdError("SyntheticSpec: anticorr layouts need at least 3 classes");
    }
  }
};

/// One Gaussian mixture component. Isotropic unless `basis` is set, in which
/// case the covariance is sigma^2 I + sigma_signal^2 basis basis^T
/// (degenerate signal directions plus ambient noise).
struct GaussComponent {
  double weight = 1.0;
  std::vector<double> mean;
  double sigma = 1.0;
  nd::Mat basis;              // [dim x r], orthonormal columns, may be empty
  double sigma_signal = 0.0;

  double log_density(std::span<const double> y) const;
};

/// Exact per-class mixture parameters; the reference every divergence in the
/// experiments is measured against.
struct GroundTruth {
  int dim = 0;
  std::vector<std::vector<GaussComponent>> classes;
  std::vector<double> prior;

  int num_classes() const { return static_cast<int>(classes.size()); }
  double log_likelihood(int k, std::span<const double> y) const;
  void validate() const;

  /// Draw one (class, observation) pair from the joint.
  std::pair<int, std::vector<double>> sample(nd::Rng& rng) const;
};

/// Bayes rule over the exact mixtures, in log space.
std::vector<double> true_posterior(const GroundTruth& truth, std::span<const double> y);

/// Multi-evidence variant: leaves share the class-conditional, likelihoods
/// multiply.
std::vector<double> true_posterior(const GroundTruth& truth,
                                   std::span<const std::vector<double>> evidence);

/// Distinct sign patterns in {-1,+1}^dim with the first component fixed at +1
/// (patterns equal up to global sign are the same mode pair), most balanced
/// first, ties by enumeration order. Throws if count > 2^(dim-1).
std::vector<std::vector<int>> balanced_sign_patterns(int dim, int count);

struct SyntheticData {
  Dataset data;
  GroundTruth truth;
};

/// Corner classes at -s*1 and +s*1 plus bimodal classes at +-s*r_j for
/// distinct balanced sign patterns r_j; every mode has norm s*sqrt(dim), so
/// the truth at y = 0 is exactly uniform.
SyntheticData gen_anticorr_bimodal(const SyntheticSpec& spec);

struct MultiLeafData {
  std::vector<Dataset> leaves;  // shared class per row across leaves
  GroundTruth truth;            // the common per-leaf conditional
};
MultiLeafData gen_multileaf(const SyntheticSpec& spec, int n_leaves);

/// Hidden binary confounder shifting both leaves by +delta*1 when active.
struct ConfoundedData {
  std::vector<Dataset> leaves;  // 2 leaves, aligned rows
  GroundTruth base;             // conditional with the confounder inactive
  double delta = 0.0;

  double leaf_log_likelihood(int k, std::span<const double> y) const;
  /// Exact joint posterior marginalizing the confounder (2-term sum).
  std::vector<double> joint_posterior(std::span<const double> y1,
                                      std::span<const double> y2) const;
  /// Product-of-marginals posterior; differs from the joint when delta > 0.
  std::vector<double> per_leaf_product_posterior(std::span<const double> y1,
                                                 std::span<const double> y2) const;
};
ConfoundedData gen_confounded(const SyntheticSpec& spec, double delta);

/// M discrete parents of cardinality `card`; the emission mean of a
/// configuration is a fixed random linear read-out of its one-hot digits, so
/// structure is shared across configurations.
struct HighcardData {
  Dataset data;  // labels are flat configuration ids
  nd::Mat w;     // [dim x (m * card)]
  int num_parents = 0;
  int card = 0;
  double noise_std = 0.0;

  int num_configs() const;
  std::vector<int> decode(int config_id) const;
  std::vector<double> mean_of(int config_id) const;
  double log_likelihood(int config_id, std::span<const double> y) const;
  std::vector<double> posterior(std::span<const double> y) const;  // uniform prior
};
HighcardData gen_highcard_parents(int num_parents, int card, int n, uint64_t seed, int dim,
                                  double mode_scale, double noise_std);

struct LowRankData {
  Dataset data;
  GroundTruth truth;  // ambient, degenerate-plus-noise components
  nd::Mat q;          // [dim_ambient x rank], orthonormal columns
};
/// Latent anticorr-bimodal draws in `rank` dims embedded through a random
/// orthonormal map plus small ambient noise (noise_std / 10).
LowRankData gen_lowrank(int dim_ambient, int rank, const SyntheticSpec& spec);

}  // namespace fem::bench
