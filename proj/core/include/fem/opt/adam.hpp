#pragma once

#include <cmath>
#include <vector>

#include "fem/nd/mat.hpp"

namespace fem::opt {

/// Adam with bias correction. Parameter order must be stable across steps.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<nd::Mat*>& params, const std::vector<nd::Mat>& grads) {
    if (params.size() != grads.size()) throw nd::NdError("Adam: param/grad count mismatch");
    if (m_.empty()) {
      for (const nd::Mat* p : params) {
        m_.emplace_back(p->rows, p->cols);
        v_.emplace_back(p->rows, p->cols);
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    for (size_t i = 0; i < params.size(); ++i) {
      nd::Mat& p = *params[i];
      const nd::Mat& g = grads[i];
      if (!p.same_shape(g)) throw nd::NdError("Adam: grad shape mismatch");
      for (size_t j = 0; j < p.size(); ++j) {
        m_[i].v[j] = beta1_ * m_[i].v[j] + (1.0 - beta1_) * g.v[j];
        v_[i].v[j] = beta2_ * v_[i].v[j] + (1.0 - beta2_) * g.v[j] * g.v[j];
        const double mh = m_[i].v[j] / c1;
        const double vh = v_[i].v[j] / c2;
        p.v[j] -= lr_ * mh / (std::sqrt(vh) + eps_);
      }
    }
  }

  double learning_rate() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<nd::Mat> m_, v_;
};

}  // namespace fem::opt
