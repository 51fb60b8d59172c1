#pragma once

#include "angio/nn.hpp"

#include <vector>

namespace angio {

struct RegistrationConfig {
  int stages = 5;  // stem + enc_blocks; kept for config parity, implied by enc_blocks
  int enc_blocks = 4;
  int dec_blocks = 4;
  Index base_channels = 16;
  Index channel_cap = 4;  // multiple of base_channels
  double smoothness_weight = 0.0;

  Index channels_at(int level) const { return std::min(base_channels << level, base_channels * channel_cap); }
  Index required_divisor() const { return Index{1} << enc_blocks; }
  void validate() const;
};

/// Registration network: (generated, target) -> displacement field (N,2,H,W) in pixels, (dy, dx) order.
///
/// Stem 3x3 conv, then enc_blocks of [stride-2 conv, residual block], a mirrored
/// decoder of [transposed conv, additive skip, residual block], and a 3x3 head to
/// two channels. The head starts at zero so the initial field is the identity.
template <typename Scalar>
class RegistrationNet {
 public:
  RegistrationNet(const RegistrationConfig& cfg, std::uint64_t seed);
  RegistrationNet(const RegistrationNet&) = delete;
  RegistrationNet& operator=(const RegistrationNet&) = delete;

  Var<Scalar> forward(const Var<Scalar>& generated, const Var<Scalar>& target) const;

  const RegistrationConfig& config() const { return cfg_; }
  ParameterList<Scalar>& params() { return params_; }
  const ParameterList<Scalar>& params() const { return params_; }

 private:
  struct Res {
    Conv2d<Scalar> a;
    Conv2d<Scalar> b;
  };
  Var<Scalar> res(const Res& r, const Var<Scalar>& x) const;

  RegistrationConfig cfg_;
  ParameterList<Scalar> params_;
  Conv2d<Scalar> stem_;
  std::vector<Conv2d<Scalar>> enc_down_;
  std::vector<Res> enc_res_;
  std::vector<ConvTranspose2d<Scalar>> dec_up_;  // dec_up_[i] maps level i+1 -> i
  std::vector<Res> dec_res_;
  Conv2d<Scalar> head_;
};

/// Mean squared norm of the displacement difference over all vertically and
/// horizontally adjacent pixel pairs. A unit ramp along x scores the fraction of
/// pairs that are horizontal, H(W-1) / ((H-1)W + H(W-1)).
template <typename Scalar>
Var<Scalar> smoothness_penalty(const Var<Scalar>& field);

extern template class RegistrationNet<float>;
extern template class RegistrationNet<double>;

}  // namespace angio
