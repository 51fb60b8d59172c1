#include "angio/model/discriminators.hpp"

namespace angio {

namespace {
constexpr ConvGeometry kDownGeometry{4, 2, 1};
constexpr ConvGeometry kHeadGeometry{3, 1, 1};
}  // namespace

void DiscriminatorConfig::validate() const {
  if (n_layers < 1) throw ShapeError("discriminator needs at least one layer");
  if (base_channels < 1) throw ShapeError("discriminator base_channels must be >= 1");
  if (scales_fine < 1 || scales_coarse < 1) throw ShapeError("discriminator scale counts must be >= 1");
}

Index DiscriminatorConfig::logits_extent(Index in) const {
  Index e = in;
  for (int i = 0; i < n_layers; ++i) e = kDownGeometry.output_extent(e);
  return kHeadGeometry.output_extent(e);
}

Index DiscriminatorConfig::receptive_field() const {
  // Walk back from one logit: r_prev = (r - 1) * stride + kernel.
  Index r = kHeadGeometry.kernel;
  for (int i = 0; i < n_layers; ++i) r = (r - 1) * kDownGeometry.stride + kDownGeometry.kernel;
  return r;
}

template <typename Scalar>
PatchDiscriminator<Scalar>::PatchDiscriminator(const DiscriminatorConfig& cfg, ParameterList<Scalar>& params)
    : cfg_(cfg) {
  cfg_.validate();
  Index in = cfg.in_channels;
  for (int i = 0; i < cfg.n_layers; ++i) {
    const Index out = std::min(cfg.base_channels << i, cfg.base_channels * cfg.channel_cap);
    // Instance norm cancels a bias, so only the first (unnormalised) layer keeps one.
    layers_.emplace_back(params, "layer" + std::to_string(i), in, out, kDownGeometry, i == 0);
    in = out;
  }
  head_ = Conv2d<Scalar>(params, "head", in, 1, kHeadGeometry);
}

template <typename Scalar>
FeaturePyramid<Scalar> PatchDiscriminator<Scalar>::forward(const Var<Scalar>& condition,
                                                           const Var<Scalar>& candidate) const {
  const Shape cs = condition.shape();
  const Shape ys = candidate.shape();
  if (cs.n != ys.n || cs.h != ys.h || cs.w != ys.w) {
    throw ShapeError("discriminator: condition " + cs.str() + " and candidate " + ys.str() + " differ");
  }
  if (cs.c + ys.c != cfg_.in_channels) throw ShapeError("discriminator: expected " + std::to_string(cfg_.in_channels) +
                                                        " input channels in total");
  FeaturePyramid<Scalar> out;
  auto h = concat_channels(condition, candidate);
  for (size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i](h);
    if (i > 0) h = instance_norm(h);
    h = leaky_relu(h, Scalar(kLeakySlope));
    out.layer_features.push_back(h);
  }
  out.patch_logits = head_(h);
  return out;
}

template <typename Scalar>
MultiScaleDiscriminator<Scalar>::MultiScaleDiscriminator(const DiscriminatorConfig& cfg, int scales,
                                                         const std::string& group_prefix, std::uint64_t seed)
    : cfg_(cfg) {
  cfg_.validate();
  if (scales < 1) throw ShapeError("multi-scale discriminator needs at least one scale");
  params_.reserve(static_cast<size_t>(scales));
  for (int k = 0; k < scales; ++k) {
    const std::string name = scales == 1 ? group_prefix : group_prefix + std::to_string(k + 1);
    names_.push_back(name);
    std::uint64_t key = seed;
    for (unsigned char ch : name) key = Rng::mix(key ^ ch);
    params_.emplace_back(key);
  }
  for (int k = 0; k < scales; ++k) discs_.emplace_back(cfg_, params_[static_cast<size_t>(k)]);
}

template <typename Scalar>
std::vector<FeaturePyramid<Scalar>> MultiScaleDiscriminator<Scalar>::forward(const Var<Scalar>& condition,
                                                                             const Var<Scalar>& candidate) const {
  const Index divisor = Index{1} << (discs_.size() - 1);
  if (condition.shape().h % divisor != 0 || condition.shape().w % divisor != 0) {
    throw ShapeError("multi-scale discriminator: dims must be divisible by " + std::to_string(divisor));
  }
  std::vector<FeaturePyramid<Scalar>> out;
  Var<Scalar> c = condition;
  Var<Scalar> y = candidate;
  for (size_t k = 0; k < discs_.size(); ++k) {
    if (k > 0) {
      c = avg_pool2(c);
      y = avg_pool2(y);
    }
    out.push_back(discs_[k].forward(c, y));
  }
  return out;
}

template class PatchDiscriminator<float>;
template class PatchDiscriminator<double>;
template class MultiScaleDiscriminator<float>;
template class MultiScaleDiscriminator<double>;

}  // namespace angio
