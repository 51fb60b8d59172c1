#pragma once

#include "angio/ops.hpp"
#include "angio/random.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace angio::testing {

using LossFn = std::function<Var<double>()>;

/// Worst norm-relative error ||g_analytic - g_numeric|| / max(||g_numeric||, floor) over the leaves.
inline double gradcheck(const LossFn& loss, std::vector<Var<double>> leaves, double h = 1e-6,
                        double floor = 1e-8) {
  for (auto& v : leaves) v.zero_grad();
  loss().backward();
  double worst = 0.0;
  for (auto& v : leaves) {
    Tensor<double> analytic = v.has_grad() ? v.grad() : Tensor<double>(v.shape());
    Tensor<double> numeric(v.shape());
    auto& data = v.mutable_value();
    for (Index i = 0; i < data.size(); ++i) {
      const double keep = data.data()[i];
      data.data()[i] = keep + h;
      const double up = loss().item();
      data.data()[i] = keep - h;
      const double down = loss().item();
      data.data()[i] = keep;
      numeric.data()[i] = (up - down) / (2 * h);
    }
    const double err = (analytic.array() - numeric.array()).matrix().norm();
    const double scale = std::max(numeric.array().matrix().norm(), floor);
    worst = std::max(worst, err / scale);
  }
  return worst;
}

inline Var<double> random_leaf(const Shape& s, std::uint64_t seed, double sd = 1.0) {
  Rng rng(seed);
  Tensor<double> t(s);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = rng.normal(0.0, sd);
  return Var<double>(std::move(t), true);
}

/// Fixed random weighting so that a vector-valued op reduces to a scalar with a generic gradient.
inline Var<double> project(const Var<double>& y, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<double> w(y.shape());
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal(0.0, 1.0);
  return sum(mul(y, constant(std::move(w))));
}

}  // namespace angio::testing
