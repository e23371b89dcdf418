#pragma once

// Monte-Carlo Bayes oracle: posteriors computed from likelihoods estimated by
// sampling the generative latents (mixture component, confounder state, or
// low-rank latent coordinate), never from the library's closed-form density
// path. Importance proposals keep the low-rank estimator's variance bounded.

#include <cmath>
#include <vector>

#include "fem/bench/synthetic.hpp"
#include "fem/util/stats.hpp"

namespace fem::test {

inline double log_iso_gauss(std::span<const double> y, std::span<const double> mean,
                            double sigma) {
  constexpr double kLog2Pi = 1.8378770664093454836;
  double sq = 0.0;
  for (size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - mean[i];
    sq += d * d;
  }
  const double v = sigma * sigma;
  return -0.5 * (static_cast<double>(y.size()) * (kLog2Pi + std::log(v)) + sq / v);
}

/// Likelihood of y under class k by averaging component densities over
/// component draws; for low-rank components the latent coordinate is
/// importance-sampled around the projection of y.
inline double mc_log_likelihood(const bench::GroundTruth& truth, int k, std::span<const double> y,
                                int n_samples, nd::Rng& rng) {
  std::vector<double> log_terms;
  log_terms.reserve(n_samples);
  const auto& comps = truth.classes[k];
  for (int s = 0; s < n_samples; ++s) {
    double w = rng.uniform();
    size_t ci = 0;
    for (; ci + 1 < comps.size(); ++ci) {
      if (w < comps[ci].weight) break;
      w -= comps[ci].weight;
    }
    const bench::GaussComponent& c = comps[ci];
    if (c.basis.size() == 0) {
      log_terms.push_back(log_iso_gauss(y, c.mean, c.sigma));
      continue;
    }
    // y = mean + Q z + eta. Propose z ~ N(Q^T (y - mean), sigma^2 I) and weight
    // by p(z) p(y | z) / q(z); || y - mean - Q z ||^2 splits into the
    // projection residual (z-independent) plus the in-plane mismatch.
    const int rank = c.basis.cols;
    std::vector<double> centered(y.size());
    for (size_t i = 0; i < y.size(); ++i) centered[i] = y[i] - c.mean[i];
    std::vector<double> proj(rank, 0.0);
    double sq_full = 0.0;
    for (double v : centered) sq_full += v * v;
    for (int j = 0; j < rank; ++j) {
      for (size_t i = 0; i < y.size(); ++i) proj[j] += c.basis.at(i, j) * centered[i];
    }
    double sq_proj = 0.0;
    for (double v : proj) sq_proj += v * v;
    const double resid = sq_full - sq_proj;

    const double sn = c.sigma;           // ambient noise
    const double sz = c.sigma_signal;    // latent scale
    constexpr double kLog2Pi = 1.8378770664093454836;
    // The in-plane likelihood factor cancels against the proposal density,
    // leaving the out-of-plane residual and the prior weight of the drawn z.
    double log_term = -0.5 * ((static_cast<double>(y.size()) - rank) * (kLog2Pi + 2 * std::log(sn)) +
                              resid / (sn * sn));
    for (int j = 0; j < rank; ++j) {
      const double zj = proj[j] + sn * rng.normal();
      log_term += -0.5 * (kLog2Pi + 2 * std::log(sz) + zj * zj / (sz * sz));
    }
    log_terms.push_back(log_term);
  }
  return util::log_sum_exp(log_terms) - std::log(static_cast<double>(n_samples));
}

inline std::vector<double> mc_posterior(const bench::GroundTruth& truth,
                                        std::span<const double> y, int n_samples, nd::Rng& rng) {
  std::vector<double> logits(truth.num_classes());
  for (int k = 0; k < truth.num_classes(); ++k) {
    logits[k] = std::log(std::max(truth.prior[k], 1e-300)) +
                mc_log_likelihood(truth, k, y, n_samples, rng);
  }
  return util::softmax(logits);
}

inline double total_variation(std::span<const double> p, std::span<const double> q) {
  double acc = 0.0;
  for (size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
  return 0.5 * acc;
}

}  // namespace fem::test
