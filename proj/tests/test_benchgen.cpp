#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "fem/bench/synthetic.hpp"
#include "fem/bench/tabular.hpp"
#include "support/mc_oracle.hpp"

using namespace fem;
using bench::SyntheticSpec;

TEST_SUITE_BEGIN("benchgen");

TEST_CASE("anticorr layout: uniform truth at zero, mode norms, label balance") {
  SyntheticSpec spec;
  spec.dim = 5;
  spec.num_classes = 3;
  spec.mode_scale = 2.0;
  spec.noise_std = 0.4;
  spec.n_train = 30000;
  spec.seed = 42;
  const bench::SyntheticData gen = bench::gen_anticorr_bimodal(spec);

  const std::vector<double> zero(5, 0.0);
  const std::vector<double> at0 = bench::true_posterior(gen.truth, zero);
  for (double p : at0) CHECK(std::abs(p - 1.0 / 3.0) <= 1e-12);

  // bimodal class modes at +-s*r, norm s*sqrt(dim)
  REQUIRE(gen.truth.classes[1].size() == 2);
  for (const auto& comp : gen.truth.classes[1]) {
    double norm = 0.0;
    for (double m : comp.mean) norm += m * m;
    CHECK(std::sqrt(norm) == doctest::Approx(2.0 * std::sqrt(5.0)).epsilon(1e-12));
  }
  // opposite modes
  for (int c = 0; c < 5; ++c) {
    CHECK(gen.truth.classes[1][0].mean[c] == -gen.truth.classes[1][1].mean[c]);
  }
  CHECK(gen.truth.classes[0][0].mean == std::vector<double>(5, -2.0));
  CHECK(gen.truth.classes[2][0].mean == std::vector<double>(5, 2.0));

  // label balance, chi-square against uniform with 2 dof (99.9% ~ 13.8)
  std::vector<int> counts(3, 0);
  for (int k : gen.data.labels) counts[k]++;
  const double expect = spec.n_train / 3.0;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
  CHECK(chi2 < 13.8);

  // determinism
  const bench::SyntheticData again = bench::gen_anticorr_bimodal(spec);
  CHECK(again.data.y.v == gen.data.y.v);
  CHECK(again.data.labels == gen.data.labels);
}

TEST_CASE("sign patterns are distinct, canonical and balance-ordered") {
  const auto pats = bench::balanced_sign_patterns(5, 8);
  CHECK(pats.size() == 8);
  for (const auto& p : pats) CHECK(p[0] == 1);
  for (size_t i = 0; i < pats.size(); ++i) {
    for (size_t j = i + 1; j < pats.size(); ++j) CHECK(pats[i] != pats[j]);
  }
  // D=2: the anticorrelated diagonal comes first
  const auto d2 = bench::balanced_sign_patterns(2, 2);
  CHECK(d2[0] == std::vector<int>{1, -1});
  CHECK(d2[1] == std::vector<int>{1, 1});
  CHECK_THROWS_AS(bench::balanced_sign_patterns(3, 5), nd::NdError);
}

TEST_CASE("true posterior: on-mode confidence and normalization") {
  SyntheticSpec spec;
  spec.dim = 5;
  spec.mode_scale = 2.0;
  spec.noise_std = 0.4;  // separation s/sigma = 5
  spec.n_train = 10;
  const bench::SyntheticData gen = bench::gen_anticorr_bimodal(spec);

  const std::vector<double>& corner = gen.truth.classes[2][0].mean;
  const std::vector<double> post = bench::true_posterior(gen.truth, corner);
  CHECK(post[2] > 0.999);
  double total = 0.0;
  for (double p : post) total += p;
  CHECK(std::abs(total - 1.0) <= 1e-12);
}

TEST_CASE("multi-leaf generator: shared labels, CI, composed oracle") {
  SyntheticSpec spec;
  spec.dim = 2;
  spec.num_classes = 3;
  spec.mode_scale = 2.0;
  spec.noise_std = 0.4;
  spec.n_train = 20000;
  spec.seed = 7;
  const bench::MultiLeafData ml = bench::gen_multileaf(spec, 3);
  REQUIRE(ml.leaves.size() == 3);
  CHECK(ml.leaves[0].labels == ml.leaves[1].labels);
  CHECK(ml.leaves[0].labels == ml.leaves[2].labels);

  // truth at all-zero evidence is uniform for every subset size
  const std::vector<double> zero(2, 0.0);
  for (int subset = 1; subset <= 3; ++subset) {
    const std::vector<std::vector<double>> ev(subset, zero);
    for (double p : bench::true_posterior(ml.truth, ev)) {
      CHECK(std::abs(p - 1.0 / 3.0) <= 1e-12);
    }
  }

  // conditional independence: cov(Y1_d, Y2_d | class 0) ~ 0
  for (int d = 0; d < 2; ++d) {
    double n = 0, m1 = 0, m2 = 0, cov = 0;
    for (int r = 0; r < ml.leaves[0].size(); ++r) {
      if (ml.leaves[0].labels[r] != 0) continue;
      ++n;
      m1 += ml.leaves[0].y.at(r, d);
      m2 += ml.leaves[1].y.at(r, d);
    }
    m1 /= n;
    m2 /= n;
    for (int r = 0; r < ml.leaves[0].size(); ++r) {
      if (ml.leaves[0].labels[r] != 0) continue;
      cov += (ml.leaves[0].y.at(r, d) - m1) * (ml.leaves[1].y.at(r, d) - m2);
    }
    cov /= n - 1;
    CHECK(std::abs(cov) < 0.03);  // sigma_y^2 = 0.16, sampling noise ~ 0.16/sqrt(n)
  }

  // exact multi-leaf posterior equals product-of-likelihoods Bayes
  nd::Rng rng(3);
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<std::vector<double>> ev;
    for (int l = 0; l < 3; ++l) {
      ev.push_back({rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5)});
    }
    const std::vector<double> got = bench::true_posterior(ml.truth, ev);
    std::vector<double> logits(3);
    for (int k = 0; k < 3; ++k) {
      logits[k] = std::log(1.0 / 3.0);
      for (const auto& y : ev) logits[k] += ml.truth.log_likelihood(k, y);
    }
    const std::vector<double> want = util::softmax(logits);
    for (int k = 0; k < 3; ++k) CHECK(got[k] == doctest::Approx(want[k]).epsilon(1e-12));
  }
}

TEST_CASE("confounded generator: joint truth vs per-leaf product") {
  SyntheticSpec spec;
  spec.dim = 2;
  spec.num_classes = 3;
  spec.mode_scale = 2.0;
  spec.noise_std = 0.4;
  spec.n_train = 1000;
  spec.seed = 11;
  const double delta = spec.mode_scale / 2.0;
  const bench::ConfoundedData cd = bench::gen_confounded(spec, delta);

  // anti-aligned query: leaf 1 at a bare mode (confounder off), leaf 2 at the
  // same mode shifted (confounder on) - exact truth by the 2-term sum
  const std::vector<double>& mode = cd.base.classes[0][0].mean;
  std::vector<double> shifted(mode);
  for (double& v : shifted) v += delta;
  const std::vector<double> joint = cd.joint_posterior(mode, shifted);
  const std::vector<double> prod = cd.per_leaf_product_posterior(mode, shifted);
  CHECK(fem::test::total_variation(joint, prod) > 0.1);

  // delta = 0 restores conditional independence exactly
  const bench::ConfoundedData ci = bench::gen_confounded(spec, 0.0);
  const std::vector<double> joint0 = ci.joint_posterior(mode, mode);
  const std::vector<double> prod0 = ci.per_leaf_product_posterior(mode, mode);
  CHECK(fem::test::total_variation(joint0, prod0) < 1e-12);
}

TEST_CASE("highcard generator: samples per config, linear structure, small-M oracle") {
  const bench::HighcardData hc = bench::gen_highcard_parents(8, 3, 30000, 5, 3, 2.0, 0.4);
  CHECK(hc.num_configs() == 6561);
  CHECK(30000.0 / hc.num_configs() == doctest::Approx(4.57).epsilon(0.01));

  // configs differing in one parent differ by one column contribution
  const std::vector<int> d0 = hc.decode(100);
  std::vector<int> d1 = d0;
  d1[3] = (d1[3] + 1) % 3;
  int id1 = 0;
  for (int p = 0; p < 8; ++p) id1 = id1 * 3 + d1[p];
  const std::vector<double> m0 = hc.mean_of(100);
  const std::vector<double> m1 = hc.mean_of(id1);
  for (int d = 0; d < 3; ++d) {
    const double want = hc.w.at(d, 3 * 3 + d1[3]) - hc.w.at(d, 3 * 3 + d0[3]);
    CHECK(m1[d] - m0[d] == doctest::Approx(want).epsilon(1e-12));
  }

  // M=2: posterior concentrates around the config whose mean we query
  const bench::HighcardData small = bench::gen_highcard_parents(2, 3, 2000, 9, 3, 2.0, 0.25);
  const std::vector<double> q = small.mean_of(4);
  const std::vector<double> post = small.posterior(q);
  CHECK(post[4] == *std::max_element(post.begin(), post.end()));
}

TEST_CASE("low-rank generator: orthonormal basis, spectrum, uniform midpoint") {
  SyntheticSpec spec;
  spec.dim = 2;  // latent rank set by the call
  spec.num_classes = 3;
  spec.mode_scale = 2.0;
  spec.noise_std = 0.4;
  spec.n_train = 8000;
  spec.seed = 13;
  const bench::LowRankData lr = bench::gen_lowrank(8, 2, spec);

  // Q columns orthonormal
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      double dot = 0.0;
      for (int i = 0; i < 8; ++i) dot += lr.q.at(i, a) * lr.q.at(i, b);
      CHECK(dot == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-10));
    }
  }

  // sample covariance spectrum: top-2 eigenvalues dominate the rest by >= 50x
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(8);
  for (int r = 0; r < lr.data.size(); ++r) {
    for (int c = 0; c < 8; ++c) mean(c) += lr.data.y.at(r, c);
  }
  mean /= lr.data.size();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(8, 8);
  for (int r = 0; r < lr.data.size(); ++r) {
    Eigen::VectorXd d(8);
    for (int c = 0; c < 8; ++c) d(c) = lr.data.y.at(r, c) - mean(c);
    cov += d * d.transpose();
  }
  cov /= lr.data.size();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::VectorXd evals = eig.eigenvalues();  // ascending
  CHECK(evals(6) / evals(5) >= 50.0);

  // truth at the embedded midpoint (zero) is uniform
  const std::vector<double> zero(8, 0.0);
  for (double p : bench::true_posterior(lr.truth, zero)) {
    CHECK(std::abs(p - 1.0 / 3.0) <= 1e-12);
  }

  CHECK_THROWS_AS(bench::gen_lowrank(2, 2, spec), nd::NdError);
}

TEST_CASE("true_posterior matches the Monte-Carlo Bayes oracle on every layout") {
  // 20 in-data query points per layout, 0.01 total-variation budget
  nd::Rng qrng(777);
  const int kMcSamples = 1000000;

  auto check_layout = [&](const bench::GroundTruth& truth, const char* name) {
    INFO("layout: " << name);
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
      auto [k, y] = truth.sample(qrng);
      (void)k;
      const std::vector<double> exact = bench::true_posterior(truth, y);
      nd::Rng mc(nd::Rng::mix(31, rep));
      const std::vector<double> est = fem::test::mc_posterior(truth, y, kMcSamples, mc);
      worst = std::max(worst, fem::test::total_variation(exact, est));
    }
    CHECK(worst <= 0.01);
  };

  SyntheticSpec spec;
  spec.dim = 3;
  spec.num_classes = 4;
  spec.mode_scale = 1.5;
  spec.noise_std = 0.5;
  spec.n_train = 10;
  check_layout(bench::gen_anticorr_bimodal(spec).truth, "anticorr-bimodal");

  SyntheticSpec ml = spec;
  ml.dim = 2;
  ml.num_classes = 3;
  check_layout(bench::gen_multileaf(ml, 2).truth, "multi-leaf conditional");

  SyntheticSpec lrs = spec;
  lrs.num_classes = 3;
  check_layout(bench::gen_lowrank(6, 2, lrs).truth, "low-rank");
}

TEST_CASE("confounded joint truth matches a confounder-sampling estimate") {
  SyntheticSpec spec;
  spec.dim = 2;
  spec.num_classes = 3;
  spec.mode_scale = 2.0;
  spec.noise_std = 0.4;
  spec.n_train = 10;
  const bench::ConfoundedData cd = bench::gen_confounded(spec, 1.0);

  nd::Rng rng(55);
  for (int rep = 0; rep < 6; ++rep) {
    std::vector<double> y1{rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5)};
    std::vector<double> y2{rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5)};
    const std::vector<double> exact = cd.joint_posterior(y1, y2);

    // estimate per-class joint likelihood by sampling (z, component) latents
    std::vector<double> logits(3);
    for (int k = 0; k < 3; ++k) {
      std::vector<double> terms;
      for (int s = 0; s < 200000; ++s) {
        const bool z = rng.uniform() < 0.5;
        std::vector<double> s1(y1), s2(y2);
        if (z) {
          for (double& v : s1) v -= cd.delta;
          for (double& v : s2) v -= cd.delta;
        }
        const auto& comps = cd.base.classes[k];
        auto draw = [&]() -> const bench::GaussComponent& {
          if (comps.size() == 1) return comps[0];
          return comps[rng.uniform() < comps[0].weight ? 0 : 1];
        };
        const auto& c1 = draw();
        const auto& c2 = draw();
        terms.push_back(fem::test::log_iso_gauss(s1, c1.mean, c1.sigma) +
                        fem::test::log_iso_gauss(s2, c2.mean, c2.sigma));
      }
      logits[k] = std::log(1.0 / 3.0) + util::log_sum_exp(terms) - std::log(200000.0);
    }
    const std::vector<double> est = util::softmax(logits);
    CHECK(fem::test::total_variation(exact, est) <= 0.02);
  }
}

TEST_CASE("tabular loader: breast cancer shape, standardization, stratification") {
  const bench::TabularSplit split = bench::load_tabular(FEM_DATA_DIR "/breast_cancer.csv",
                                                        "target");
  CHECK(split.train.size() + split.test.size() == 569);
  CHECK(split.train.dim() == 30);
  CHECK(split.class_names.size() == 2);

  // train features standardized to zero mean, unit variance
  for (int c = 0; c < 30; ++c) {
    double m = 0.0;
    for (int r = 0; r < split.train.size(); ++r) m += split.train.y.at(r, c);
    m /= split.train.size();
    double v = 0.0;
    for (int r = 0; r < split.train.size(); ++r) {
      v += (split.train.y.at(r, c) - m) * (split.train.y.at(r, c) - m);
    }
    v /= split.train.size();
    CHECK(std::abs(m) <= 1e-10);
    CHECK(std::abs(std::sqrt(v) - 1.0) <= 1e-10);
  }

  // split proportions per class within one row of 80/20
  for (int k = 0; k < 2; ++k) {
    int n_train = 0, n_test = 0;
    for (int r = 0; r < split.train.size(); ++r) n_train += split.train.labels[r] == k;
    for (int r = 0; r < split.test.size(); ++r) n_test += split.test.labels[r] == k;
    const double want_test = 0.2 * (n_train + n_test);
    CHECK(std::abs(n_test - want_test) <= 1.0);
  }

  // empirical priors sum to one and reflect train counts
  CHECK(std::abs(split.prior[0] + split.prior[1] - 1.0) <= 1e-12);

  // deterministic given the seed
  const bench::TabularSplit again = bench::load_tabular(FEM_DATA_DIR "/breast_cancer.csv",
                                                        "target");
  CHECK(again.train.labels == split.train.labels);
  CHECK(again.train.y.v == split.train.y.v);

  CHECK_THROWS_WITH_AS(bench::load_tabular(FEM_DATA_DIR "/breast_cancer.csv", "nope"),
                       doctest::Contains("missing label"), nd::NdError);
}

TEST_SUITE_END();
