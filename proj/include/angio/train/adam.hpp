#pragma once

#include "angio/nn.hpp"

namespace angio {

/// Adam over one parameter group. Parameters without a gradient this step are skipped.
template <typename Scalar>
class Adam {
 public:
  Adam() = default;
  Adam(ParameterList<Scalar>* params, double lr, double beta1, double beta2, double eps)
      : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params->items()) {
      m_.emplace_back(p.var.shape());
      v_.emplace_back(p.var.shape());
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto& items = params_->items();
    for (size_t i = 0; i < items.size(); ++i) {
      auto& var = items[i].var;
      if (!var.has_grad()) continue;
      const auto& g = var.grad().array();
      auto& m = m_[i].array();
      auto& v = v_[i].array();
      m = Scalar(beta1_) * m + Scalar(1 - beta1_) * g;
      v = Scalar(beta2_) * v + Scalar(1 - beta2_) * g.square();
      var.mutable_value().array() -=
          Scalar(lr_) * (m / Scalar(c1)) / ((v / Scalar(c2)).sqrt() + Scalar(eps_));
    }
  }

  long long t() const { return t_; }
  void set_t(long long t) { t_ = t; }
  std::vector<Tensor<Scalar>>& first_moments() { return m_; }
  std::vector<Tensor<Scalar>>& second_moments() { return v_; }

 private:
  ParameterList<Scalar>* params_ = nullptr;
  double lr_ = 2e-4, beta1_ = 0.5, beta2_ = 0.999, eps_ = 1e-8;
  long long t_ = 0;
  std::vector<Tensor<Scalar>> m_, v_;
};

}  // namespace angio
