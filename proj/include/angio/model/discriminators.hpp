#pragma once

#include "angio/nn.hpp"

#include <vector>

namespace angio {

struct DiscriminatorConfig {
  int n_layers = 4;
  Index base_channels = 64;
  int scales_fine = 2;
  int scales_coarse = 1;
  Index channel_cap = 8;
  Index in_channels = 4;  // condition (3) + candidate (1)

  void validate() const;
  /// Spatial extent of the patch logits for an input extent.
  Index logits_extent(Index in) const;
  /// Receptive field (pixels) of one logit, from the layer recurrence.
  Index receptive_field() const;
};

/// Per-layer activations plus the patch logit map of one discriminator.
template <typename Scalar>
struct FeaturePyramid {
  std::vector<Var<Scalar>> layer_features;
  Var<Scalar> patch_logits;
};

/// Conditional patch discriminator.
///
/// n_layers blocks of 4x4 stride-2 convolutions (padding 1), instance norm from
/// the second block on, leaky rectifiers; then a 3x3 stride-1 head to one
/// logit channel, which keeps the last block's extent.
template <typename Scalar>
class PatchDiscriminator {
 public:
  PatchDiscriminator(const DiscriminatorConfig& cfg, ParameterList<Scalar>& params);

  FeaturePyramid<Scalar> forward(const Var<Scalar>& condition, const Var<Scalar>& candidate) const;

 private:
  DiscriminatorConfig cfg_;
  std::vector<Conv2d<Scalar>> layers_;
  Conv2d<Scalar> head_;
};

/// A stack of patch discriminators; scale k sees inputs mean-pooled k times.
template <typename Scalar>
class MultiScaleDiscriminator {
 public:
  MultiScaleDiscriminator(const DiscriminatorConfig& cfg, int scales, const std::string& group_prefix,
                          std::uint64_t seed);
  MultiScaleDiscriminator(const MultiScaleDiscriminator&) = delete;
  MultiScaleDiscriminator& operator=(const MultiScaleDiscriminator&) = delete;
  MultiScaleDiscriminator(MultiScaleDiscriminator&&) = default;

  std::vector<FeaturePyramid<Scalar>> forward(const Var<Scalar>& condition, const Var<Scalar>& candidate) const;

  int scales() const { return static_cast<int>(discs_.size()); }
  /// One parameter group per scale (e.g. disc_f1, disc_f2).
  std::vector<ParameterList<Scalar>>& params() { return params_; }
  const std::vector<ParameterList<Scalar>>& params() const { return params_; }
  const std::vector<std::string>& group_names() const { return names_; }

 private:
  DiscriminatorConfig cfg_;
  std::vector<ParameterList<Scalar>> params_;
  std::vector<std::string> names_;
  std::vector<PatchDiscriminator<Scalar>> discs_;
};

extern template class PatchDiscriminator<float>;
extern template class PatchDiscriminator<double>;
extern template class MultiScaleDiscriminator<float>;
extern template class MultiScaleDiscriminator<double>;

}  // namespace angio
