#include <doctest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "fem/nd/mlp.hpp"
#include "fem/nd/rng.hpp"
#include "fem/nd/tape.hpp"
#include "support/oracles.hpp"

using namespace fem;
using fem::nd::Mat;
using fem::nd::Tape;
using fem::nd::Tensor;

namespace {

std::shared_ptr<const std::vector<int>> make_idx(std::vector<int> xs) {
  return std::make_shared<const std::vector<int>>(std::move(xs));
}

}  // namespace

TEST_SUITE_BEGIN("nd");

TEST_CASE("gelu fixed points and asymptote") {
  Tape t;
  Tensor x = t.constant(Mat::row_vec(std::vector<double>{0.0, 10.0, 1.0}));
  Tensor y = nd::gelu(x);
  CHECK(y.value().at(0, 0) == 0.0);
  CHECK(std::abs(y.value().at(0, 1) - 10.0) < 1e-9);
  // against a quadrature CDF, independent of erfc
  const double want = 1.0 * test::normal_cdf_quadrature(1.0);
  CHECK(std::abs(y.value().at(0, 2) - want) < 1e-7);
  CHECK(y.value().at(0, 2) == doctest::Approx(0.84134).epsilon(1e-5));
}

TEST_CASE("forward_mlp zero weights give zero energy") {
  Tape t;
  std::vector<nd::LinearLayer> layers;
  layers.emplace_back(3, 4);
  layers.emplace_back(4, 1);
  std::vector<nd::LayerVars> vars;
  for (const auto& l : layers) vars.push_back(nd::layer_on(t, l, false));
  Tensor x = t.constant(Mat::row_vec(std::vector<double>{0.3, -1.2, 2.0}));
  Tensor e = nd::forward_mlp(vars, x);
  CHECK(e.rows() == 1);
  CHECK(e.cols() == 1);
  CHECK(e.value().at(0, 0) == 0.0);
}

TEST_CASE("forward_mlp matches a hand-computed 1x1 chain") {
  // two hidden 1x1 identity layers + identity head: x -> gelu(x) -> gelu -> out
  Tape t;
  std::vector<nd::LinearLayer> layers;
  for (int i = 0; i < 3; ++i) {
    nd::LinearLayer l(1, 1);
    l.w.at(0, 0) = 1.0;
    layers.push_back(l);
  }
  std::vector<nd::LayerVars> vars;
  for (const auto& l : layers) vars.push_back(nd::layer_on(t, l, false));
  Tensor x = t.constant(Mat::scalar(2.0));
  Tensor e = nd::forward_mlp(vars, x);
  const double want = nd::gelu_scalar(nd::gelu_scalar(2.0));
  CHECK(e.value().at(0, 0) == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("forward_mlp is deterministic and rejects shape mismatch") {
  nd::Rng rng(7);
  nd::LinearLayer l1 = nd::LinearLayer::glorot(5, 8, rng);
  nd::LinearLayer l2 = nd::LinearLayer::glorot(8, 1, rng);
  std::vector<double> xv;
  for (int i = 0; i < 5; ++i) xv.push_back(rng.uniform(-2, 2));

  auto run = [&]() {
    Tape t;
    std::vector<nd::LayerVars> vars{nd::layer_on(t, l1, false), nd::layer_on(t, l2, false)};
    return nd::forward_mlp(vars, t.constant(Mat::row_vec(xv))).value().at(0, 0);
  };
  const double a = run();
  const double b = run();
  CHECK(a == b);  // bit-identical

  Tape t;
  std::vector<nd::LayerVars> vars{nd::layer_on(t, l2, false)};
  CHECK_THROWS_AS(nd::forward_mlp(vars, t.constant(Mat::row_vec(xv))), nd::NdError);
}

TEST_CASE("input_gradient of sum of squares") {
  Tape t;
  Tensor x = t.leaf(Mat::row_vec(std::vector<double>{1.0, 2.0}));
  Tensor f = nd::squared_norm(x);
  Tensor g = nd::input_gradient(f, x);
  CHECK(g.rows() == 1);
  CHECK(g.cols() == 2);
  CHECK(g.value().at(0, 0) == doctest::Approx(2.0));
  CHECK(g.value().at(0, 1) == doctest::Approx(4.0));
}

TEST_CASE("input_gradient of a gelu MLP matches finite differences") {
  nd::Rng rng(11);
  nd::LinearLayer l1 = nd::LinearLayer::glorot(4, 16, rng);
  nd::LinearLayer l2 = nd::LinearLayer::glorot(16, 16, rng);
  nd::LinearLayer l3 = nd::LinearLayer::glorot(16, 1, rng);

  auto energy = [&](std::span<const double> xs) {
    Tape t;
    std::vector<nd::LayerVars> vars{nd::layer_on(t, l1, false), nd::layer_on(t, l2, false),
                                    nd::layer_on(t, l3, false)};
    return nd::forward_mlp(vars, t.constant(Mat::row_vec(xs))).value().at(0, 0);
  };

  for (int rep = 0; rep < 5; ++rep) {
    std::vector<double> xs;
    for (int i = 0; i < 4; ++i) xs.push_back(rng.uniform(-2, 2));
    Tape t;
    std::vector<nd::LayerVars> vars{nd::layer_on(t, l1, false), nd::layer_on(t, l2, false),
                                    nd::layer_on(t, l3, false)};
    Tensor x = t.leaf(Mat::row_vec(xs));
    Tensor g = nd::input_gradient(nd::forward_mlp(vars, x), x);
    const std::vector<double> fd = test::numerical_gradient(energy, xs);
    CHECK(test::max_rel_err(g.value().v, fd) < 1e-5);
  }
}

TEST_CASE("input_gradient: constant f gives zero vector, foreign leaf throws") {
  Tape t;
  Tensor x = t.leaf(Mat::row_vec(std::vector<double>{0.5, -0.5}));
  Tensor y = t.leaf(Mat::scalar(3.0));
  Tensor f = nd::sum_all(nd::mul(y, y));
  Tensor g = nd::input_gradient(f, x);
  for (double v : g.value().v) CHECK(v == 0.0);

  Tape other;
  Tensor z = other.leaf(Mat::scalar(1.0));
  CHECK_THROWS_AS(nd::input_gradient(f, z), nd::NdError);
}

TEST_CASE("second-order toy: d/dtheta of (dE/dx)^2 with E = theta * x^2") {
  Tape t;
  Tensor theta = t.leaf(Mat::scalar(1.0));
  Tensor x = t.leaf(Mat::scalar(1.0));
  Tensor e = nd::mul(theta, nd::mul(x, x));
  Tensor dedx = nd::input_gradient(e, x);  // 2 theta x
  Tensor loss = nd::squared_norm(dedx);    // (2 theta x)^2
  const Tensor wrt[] = {theta};
  std::vector<Mat> g = nd::param_gradients(loss, wrt);
  CHECK(g[0].at(0, 0) == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("second-order reduces to first order when loss ignores the input gradient") {
  Tape t;
  Tensor theta = t.leaf(Mat::scalar(0.7));
  Tensor x = t.leaf(Mat::scalar(1.3));
  Tensor e = nd::mul(theta, nd::mul(x, x));
  const Tensor wrt[] = {theta};
  std::vector<Mat> g = nd::param_gradients(nd::mul(e, e), wrt);
  // d(e^2)/dtheta = 2 e x^2
  const double ev = 0.7 * 1.3 * 1.3;
  CHECK(g[0].at(0, 0) == doctest::Approx(2.0 * ev * 1.3 * 1.3).epsilon(1e-12));
}

namespace {

// Score-matching style composite loss on a small gelu MLP: the parameter
// gradient passes through the input-gradient graph (mixed second order).
double composite_loss_value(const std::vector<nd::LinearLayer>& layers,
                            const std::vector<double>& xs, const std::vector<double>& target) {
  Tape t;
  std::vector<nd::LayerVars> vars;
  for (const auto& l : layers) vars.push_back(nd::layer_on(t, l, false));
  Tensor x = t.leaf(Mat::row_vec(xs));
  Tensor e = nd::forward_mlp(vars, x);
  Tensor score = nd::input_gradient(e, x);
  Tensor r = nd::sub(score, t.constant(Mat::row_vec(target)));
  return nd::squared_norm(r).value().at(0, 0);
}

}  // namespace

TEST_CASE("second-order parameter gradients match finite differences on 2x16 nets") {
  nd::Rng rng(1234);
  for (int rep = 0; rep < 3; ++rep) {
    std::vector<nd::LinearLayer> layers;
    layers.push_back(nd::LinearLayer::glorot(3, 16, rng));
    layers.push_back(nd::LinearLayer::glorot(16, 16, rng));
    layers.push_back(nd::LinearLayer::glorot(16, 1, rng));
    std::vector<double> xs, target;
    for (int i = 0; i < 3; ++i) {
      xs.push_back(rng.uniform(-2, 2));
      target.push_back(rng.uniform(-1, 1));
    }

    Tape t;
    std::vector<nd::LayerVars> vars;
    std::vector<Tensor> params;
    for (const auto& l : layers) {
      vars.push_back(nd::layer_on(t, l, true));
      params.push_back(vars.back().w);
      params.push_back(vars.back().b);
    }
    Tensor x = t.leaf(Mat::row_vec(xs));
    Tensor e = nd::forward_mlp(vars, x);
    Tensor score = nd::input_gradient(e, x);
    Tensor loss = nd::squared_norm(nd::sub(score, t.constant(Mat::row_vec(target))));
    std::vector<Mat> got = nd::param_gradients(loss, params);

    // finite differences over every parameter of every layer
    for (size_t li = 0; li < layers.size(); ++li) {
      for (int part = 0; part < 2; ++part) {
        Mat& m = part == 0 ? layers[li].w : layers[li].b;
        const Mat& g = got[2 * li + part];
        auto f = [&](std::span<const double> p) {
          std::vector<nd::LinearLayer> mutated = layers;
          Mat& mm = part == 0 ? mutated[li].w : mutated[li].b;
          std::copy(p.begin(), p.end(), mm.v.begin());
          return composite_loss_value(mutated, xs, target);
        };
        const std::vector<double> fd = test::numerical_gradient(f, m.v);
        CHECK(test::max_rel_err(g.v, fd, 1e-3) < 1e-4);
      }
    }
  }
}

namespace {

// A graph that routes through the whole op set, as a scalar function of a
// single 2x4 leaf living on the caller's tape.
std::pair<Tensor, Tensor> op_zoo(Tape& t, std::span<const double> p) {
  Mat m(2, 4);
  std::copy(p.begin(), p.end(), m.v.begin());
  Tensor x = t.leaf(std::move(m));
  Tensor a = nd::slice_cols(x, 0, 2);
  Tensor b = nd::slice_cols(x, 2, 2);
  Tensor mm = nd::matmul(a, nd::transpose(b));
  Tensor cat = nd::concat_cols(mm, nd::gelu(a));
  Tensor soft = nd::softplus(nd::sigmoid(cat));
  Tensor clipped = nd::clip_max(nd::clip_min(soft, -5.0), 5.0);
  Tensor lse = nd::lse_rows(nd::affine(clipped, 1.5, -0.25));
  Tensor rep = nd::mul(nd::repeat_cols(lse, 3), t.constant(Mat::full(2, 3, 0.5)));
  Tensor rr = nd::repeat_rows(nd::col_sum(rep), 2);
  Tensor rs = nd::row_sum(nd::exp(nd::affine(rr, 0.05, 0.0)));
  Tensor picked = nd::rows_select(rs, make_idx({1, 0, 1}));
  Tensor scat = nd::rows_scatter(picked, make_idx({0, 1, 1}), 2);
  Tensor resh = nd::reshape(nd::scatter_cols(scat, make_idx({0, 1}), 3), 1, 6);
  Tensor gath = nd::gather_cols(nd::pad_cols(resh, 1, 8), make_idx({4}));
  Tensor lg = nd::log(nd::add(nd::mul(gath, gath), t.constant(Mat::scalar(1.0))));
  Tensor rcp = nd::reciprocal(nd::add(lg, t.constant(Mat::scalar(2.0))));
  Tensor f = nd::sum_all(nd::concat_cols(rcp, nd::mean_all(nd::sub(rep, rr))));
  return {f, x};
}

}  // namespace

TEST_CASE("every op passes a first-order finite-difference check") {
  nd::Rng rng(99);
  auto value = [&](std::span<const double> p) {
    Tape t;
    return op_zoo(t, p).first.value().at(0, 0);
  };
  for (int rep = 0; rep < 4; ++rep) {
    std::vector<double> p;
    for (int i = 0; i < 8; ++i) p.push_back(rng.uniform(-2, 2));
    Tape t;
    auto [f, x] = op_zoo(t, p);
    Tensor g = nd::input_gradient(f, x);
    const std::vector<double> fd = test::numerical_gradient(value, p);
    CHECK(test::max_rel_err(g.value().v, fd, 1e-4) < 1e-5);
  }
}

TEST_CASE("third-order differentiation is rejected") {
  Tape t;
  Tensor x = t.leaf(Mat::scalar(0.4));
  Tensor f = nd::sum_all(nd::gelu(x));
  Tensor g1 = nd::input_gradient(f, x);
  Tensor g2 = nd::input_gradient(nd::sum_all(g1), x);
  CHECK_THROWS_WITH_AS(nd::input_gradient(nd::sum_all(g2), x),
                       doctest::Contains("unsupported op"), nd::NdError);
}

TEST_CASE("non-finite results are rejected with the op name") {
  Tape t;
  Tensor x = t.constant(Mat::scalar(-1.0));
  CHECK_THROWS_WITH_AS(nd::log(x), doctest::Contains("log"), nd::NdError);
  Tensor zero = t.constant(Mat::scalar(0.0));
  CHECK_THROWS_AS(nd::reciprocal(zero), nd::NdError);
}

TEST_CASE("matmul shape errors and rng determinism") {
  Tape t;
  Tensor a = t.constant(Mat(2, 3));
  Tensor b = t.constant(Mat(2, 3));
  CHECK_THROWS_AS(nd::matmul(a, b), nd::NdError);

  nd::Rng r1(5), r2(5);
  for (int i = 0; i < 100; ++i) CHECK(r1.normal() == r2.normal());
  nd::Rng r3(5);
  int counts[4] = {0, 0, 0, 0};
  for (int i = 0; i < 4000; ++i) counts[r3.uniform_int(4)]++;
  for (int c : counts) CHECK(c > 800);
}

TEST_SUITE_END();
