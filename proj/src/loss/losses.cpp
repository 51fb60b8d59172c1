#include "angio/loss/losses.hpp"

#include <stdexcept>

namespace angio {

void LossWeights::validate() const {
  if (lambda_fm_fine < 0 || lambda_fm_coarse < 0 || lambda_vgg_fine < 0 || lambda_vgg_coarse < 0) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
}

template <typename Scalar>
Var<Scalar> adv_loss_disc(const FeaturePyramid<Scalar>& real, const FeaturePyramid<Scalar>& fake) {
  return add(mean(softplus(scale(real.patch_logits, Scalar(-1)))), mean(softplus(fake.patch_logits)));
}

template <typename Scalar>
Var<Scalar> adv_loss_gen(const FeaturePyramid<Scalar>& fake, bool literal) {
  if (literal) return scale(mean(softplus(fake.patch_logits)), Scalar(-1));
  return mean(softplus(scale(fake.patch_logits, Scalar(-1))));
}

template <typename Scalar>
Var<Scalar> fm_loss(const FeaturePyramid<Scalar>& real, const FeaturePyramid<Scalar>& fake) {
  if (real.layer_features.size() != fake.layer_features.size() || real.layer_features.empty()) {
    throw std::logic_error("fm_loss: pyramids have " + std::to_string(real.layer_features.size()) + " and " +
                           std::to_string(fake.layer_features.size()) + " layers");
  }
  Var<Scalar> total;
  for (size_t i = 0; i < real.layer_features.size(); ++i) {
    auto term = l1_mean(fake.layer_features[i], real.layer_features[i].detach());
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

template <typename Scalar>
Var<Scalar> perceptual_loss(const Var<Scalar>& a, const Var<Scalar>& b, const FeatureExtractor<Scalar>& extractor) {
  if (a.shape() != b.shape()) throw ShapeError("perceptual_loss: " + a.shape().str() + " vs " + b.shape().str());
  const auto ta = extractor.taps(a);
  const auto tb = extractor.taps(b);
  Var<Scalar> total;
  for (size_t i = 0; i < ta.size(); ++i) {
    auto term = l1_mean(ta[i], tb[i]);
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

template <typename Scalar>
Var<Scalar> corr_loss(const Var<Scalar>& fine, const Var<Scalar>& target, const RegistrationNet<Scalar>& psi,
                      const FeatureExtractor<Scalar>& extractor, Var<Scalar>* field_out) {
  auto field = psi.forward(fine, target);
  if (field_out) *field_out = field;
  return perceptual_loss(warp(fine, field), target, extractor);
}

template <typename Scalar>
double LossBreakdown<Scalar>::value(const std::string& name) const {
  for (const auto& [n, v] : terms)
    if (n == name) return static_cast<double>(v.item());
  throw std::out_of_range("loss breakdown has no term '" + name + "'");
}

template <typename Scalar>
bool LossBreakdown<Scalar>::has(const std::string& name) const {
  for (const auto& [n, v] : terms)
    if (n == name) return true;
  return false;
}

template <typename Scalar>
std::map<std::string, double> LossBreakdown<Scalar>::values() const {
  std::map<std::string, double> out;
  for (const auto& [n, v] : terms) out[n] = static_cast<double>(v.item());
  out["total"] = static_cast<double>(total.item());
  return out;
}

namespace {

template <typename Scalar>
void push(LossBreakdown<Scalar>& b, const std::string& name, const Var<Scalar>& v, double weight) {
  auto term = weight == 1.0 ? v : scale(v, static_cast<Scalar>(weight));
  b.terms.emplace_back(name, term);
  b.total = b.total.defined() ? add(b.total, term) : term;
}

template <typename Scalar>
const Var<Scalar>& need(const std::optional<Var<Scalar>>& v, const char* name) {
  if (!v) throw std::logic_error(std::string("composite_loss: missing required component ") + name);
  return *v;
}

}  // namespace

template <typename Scalar>
LossBreakdown<Scalar> composite_loss(const CompositeTerms<Scalar>& t, const LossWeights& w,
                                     const CompositeRequirements& req) {
  w.validate();
  LossBreakdown<Scalar> b;
  if (req.adversarial) {
    push(b, "adv_fine", need(t.adv_fine, "adv_fine"), 1.0);
    push(b, "adv_coarse", need(t.adv_coarse, "adv_coarse"), 1.0);
  }
  if (req.fm) {
    push(b, "fm_fine", need(t.fm_fine, "fm_fine"), w.lambda_fm_fine);
    push(b, "fm_coarse", need(t.fm_coarse, "fm_coarse"), w.lambda_fm_coarse);
  }
  if (req.vgg || t.corrected) {
    push(b, t.corrected ? "corr_fine" : "perceptual_fine", need(t.perceptual_fine, "perceptual_fine"),
         w.lambda_vgg_fine);
  }
  if (req.vgg) push(b, "perceptual_coarse", need(t.perceptual_coarse, "perceptual_coarse"), w.lambda_vgg_coarse);
  if (!b.total.defined()) b.total = constant(Tensor<Scalar>::scalar(Scalar(0)));
  return b;
}

template <typename Scalar>
LossBreakdown<Scalar> warmup_loss(const Var<Scalar>& fine, const Var<Scalar>& fine_target, const Var<Scalar>& coarse,
                                  const Var<Scalar>& coarse_target, const FeatureExtractor<Scalar>* extractor,
                                  const LossWeights& w) {
  w.validate();
  LossBreakdown<Scalar> b;
  push(b, "l1_fine", l1_mean(fine, fine_target), 1.0);
  push(b, "l1_coarse", l1_mean(coarse, coarse_target), 1.0);
  if (extractor) {
    push(b, "perceptual_fine", perceptual_loss(fine, fine_target, *extractor), w.lambda_vgg_fine);
    push(b, "perceptual_coarse", perceptual_loss(coarse, coarse_target, *extractor), w.lambda_vgg_coarse);
  }
  return b;
}

#define ANGIO_INSTANTIATE_LOSSES(S)                                                                         \
  template Var<S> adv_loss_disc(const FeaturePyramid<S>&, const FeaturePyramid<S>&);                        \
  template Var<S> adv_loss_gen(const FeaturePyramid<S>&, bool);                                             \
  template Var<S> fm_loss(const FeaturePyramid<S>&, const FeaturePyramid<S>&);                              \
  template Var<S> perceptual_loss(const Var<S>&, const Var<S>&, const FeatureExtractor<S>&);                \
  template Var<S> corr_loss(const Var<S>&, const Var<S>&, const RegistrationNet<S>&,                        \
                            const FeatureExtractor<S>&, Var<S>*);                                           \
  template struct LossBreakdown<S>;                                                                         \
  template LossBreakdown<S> composite_loss(const CompositeTerms<S>&, const LossWeights&,                    \
                                           const CompositeRequirements&);                                   \
  template LossBreakdown<S> warmup_loss(const Var<S>&, const Var<S>&, const Var<S>&, const Var<S>&,         \
                                        const FeatureExtractor<S>*, const LossWeights&);

ANGIO_INSTANTIATE_LOSSES(float)
ANGIO_INSTANTIATE_LOSSES(double)

}  // namespace angio
