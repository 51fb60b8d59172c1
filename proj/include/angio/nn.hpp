#pragma once

#include "angio/ops.hpp"
#include "angio/random.hpp"

#include <functional>
#include <string>
#include <vector>

namespace angio {

constexpr double kLeakySlope = 0.2;

enum class Init { kNormal002, kHe, kZero };

template <typename Scalar>
struct NamedParam {
  std::string name;
  Var<Scalar> var;
};

/// Ordered, named set of trainable leaves belonging to one network.
///
/// Each parameter is initialised from a stream derived from (seed, name), so
/// toggling an optional branch never perturbs the weights of the others.
template <typename Scalar>
class ParameterList {
 public:
  explicit ParameterList(std::uint64_t seed = 0) : seed_(seed) {}

  Var<Scalar> add(const std::string& name, const Shape& shape, Init init, Index fan_in) {
    Tensor<Scalar> t(shape);
    Rng rng = Rng::derive(seed_, name_key(name));
    switch (init) {
      case Init::kNormal002:
        for (Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<Scalar>(rng.normal(0.0, 0.02));
        break;
      case Init::kHe: {
        const double std = std::sqrt(2.0 / static_cast<double>(std::max<Index>(fan_in, 1)));
        for (Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<Scalar>(rng.normal(0.0, std));
        break;
      }
      case Init::kZero:
        break;
    }
    Var<Scalar> v(std::move(t), trainable_);
    params_.push_back({name, v});
    return v;
  }

  const std::vector<NamedParam<Scalar>>& items() const { return params_; }
  std::vector<NamedParam<Scalar>>& items() { return params_; }
  std::size_t size() const { return params_.size(); }

  Index numel() const {
    Index n = 0;
    for (const auto& p : params_) n += p.var.value().size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
  }

  /// Frozen parameters still participate in forward passes but never receive gradients.
  void set_trainable(bool trainable) {
    trainable_ = trainable;
    for (auto& p : params_) p.var.node()->requires_grad = trainable;
  }

  Var<Scalar> find(const std::string& name) const {
    for (const auto& p : params_)
      if (p.name == name) return p.var;
    return {};
  }

 private:
  // FNV-1a; std::hash is not stable across standard libraries.
  static std::uint64_t name_key(const std::string& name) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : name) {
      h ^= ch;
      h *= 1099511628211ull;
    }
    return h;
  }

  std::uint64_t seed_;
  bool trainable_ = true;
  std::vector<NamedParam<Scalar>> params_;
};

template <typename Scalar>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterList<Scalar>& params, const std::string& name, Index in, Index out, ConvGeometry g,
         bool with_bias = true, Init init = Init::kNormal002)
      : geometry_(g) {
    const Index fan_in = in * g.kernel * g.kernel;
    weight_ = params.add(name + ".weight", Shape{out, in, g.kernel, g.kernel}, init, fan_in);
    if (with_bias) bias_ = params.add(name + ".bias", Shape{1, out, 1, 1}, Init::kZero, fan_in);
  }

  Var<Scalar> operator()(const Var<Scalar>& x) const { return conv2d(x, weight_, bias_, geometry_); }

  const Var<Scalar>& weight() const { return weight_; }
  const Var<Scalar>& bias() const { return bias_; }
  const ConvGeometry& geometry() const { return geometry_; }
  Index out_channels() const { return weight_.shape().n; }

 private:
  ConvGeometry geometry_;
  Var<Scalar> weight_;
  Var<Scalar> bias_;
};

template <typename Scalar>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(ParameterList<Scalar>& params, const std::string& name, Index in, Index out, ConvGeometry g,
                  Index output_padding, bool with_bias = true, Init init = Init::kNormal002)
      : geometry_(g), output_padding_(output_padding) {
    const Index fan_in = in * g.kernel * g.kernel;
    weight_ = params.add(name + ".weight", Shape{in, out, g.kernel, g.kernel}, init, fan_in);
    if (with_bias) bias_ = params.add(name + ".bias", Shape{1, out, 1, 1}, Init::kZero, fan_in);
  }

  Var<Scalar> operator()(const Var<Scalar>& x) const {
    return conv_transpose2d(x, weight_, bias_, geometry_, output_padding_);
  }

 private:
  ConvGeometry geometry_;
  Index output_padding_ = 0;
  Var<Scalar> weight_;
  Var<Scalar> bias_;
};

}  // namespace angio
