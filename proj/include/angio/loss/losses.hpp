#pragma once

#include "angio/loss/extractors.hpp"
#include "angio/model/discriminators.hpp"
#include "angio/model/registration.hpp"

#include <map>
#include <optional>
#include <string>

namespace angio {

struct LossWeights {
  double lambda_fm_fine = 10;
  double lambda_fm_coarse = 10;
  double lambda_vgg_fine = 5;
  double lambda_vgg_coarse = 5;

  void validate() const;
};

/// Discriminator objective: mean softplus(-real) + mean softplus(fake) over patch logits,
/// i.e. -log sigmoid(real) - log(1 - sigmoid(fake)). The fake pyramid should come from a detached candidate.
template <typename Scalar>
Var<Scalar> adv_loss_disc(const FeaturePyramid<Scalar>& real, const FeaturePyramid<Scalar>& fake);

/// Generator objective on fake logits. Non-saturating mean softplus(-fake) by default;
/// `literal` gives the minimax form mean log(1 - sigmoid(fake)) = -mean softplus(fake).
template <typename Scalar>
Var<Scalar> adv_loss_gen(const FeaturePyramid<Scalar>& fake, bool literal = false);

/// Sum over layers of mean |real_i - fake_i|; real features are detached.
template <typename Scalar>
Var<Scalar> fm_loss(const FeaturePyramid<Scalar>& real, const FeaturePyramid<Scalar>& fake);

/// Sum over extractor taps of mean |V_i(a) - V_i(b)|.
template <typename Scalar>
Var<Scalar> perceptual_loss(const Var<Scalar>& a, const Var<Scalar>& b, const FeatureExtractor<Scalar>& extractor);

/// Perceptual loss after warping `fine` onto `target` with the field predicted by `psi`.
template <typename Scalar>
Var<Scalar> corr_loss(const Var<Scalar>& fine, const Var<Scalar>& target, const RegistrationNet<Scalar>& psi,
                      const FeatureExtractor<Scalar>& extractor, Var<Scalar>* field_out = nullptr);

/// Named scalar terms of a generator objective, in insertion order of the weighted sum.
template <typename Scalar>
struct LossBreakdown {
  std::vector<std::pair<std::string, Var<Scalar>>> terms;  // already weighted
  Var<Scalar> total;

  double value(const std::string& name) const;
  bool has(const std::string& name) const;
  std::map<std::string, double> values() const;
};

/// Unweighted components of the adversarial-phase generator objective.
///
/// `perceptual_fine` holds the corrected loss when registration is active.
template <typename Scalar>
struct CompositeTerms {
  std::optional<Var<Scalar>> adv_fine;   // summed over the fine-path scales
  std::optional<Var<Scalar>> adv_coarse;
  std::optional<Var<Scalar>> fm_fine;    // summed over the fine-path scales
  std::optional<Var<Scalar>> fm_coarse;
  std::optional<Var<Scalar>> perceptual_fine;
  std::optional<Var<Scalar>> perceptual_coarse;
  bool corrected = false;  // perceptual_fine came from corr_loss
};

/// Which components the active phase and ablation flags require.
struct CompositeRequirements {
  bool adversarial = true;
  bool fm = true;
  bool vgg = true;
};

/// adv_f + adv_c + lambda_FMF*fm_f + lambda_FMC*fm_c + lambda_VGGF*perc_f + lambda_VGGC*perc_c.
/// Throws std::logic_error when a required component is missing.
template <typename Scalar>
LossBreakdown<Scalar> composite_loss(const CompositeTerms<Scalar>& terms, const LossWeights& w,
                                     const CompositeRequirements& req = {});

/// Warmup objective on both paths: L1 + lambda_VGG * perceptual (perceptual omitted when vgg is off).
template <typename Scalar>
LossBreakdown<Scalar> warmup_loss(const Var<Scalar>& fine, const Var<Scalar>& fine_target, const Var<Scalar>& coarse,
                                  const Var<Scalar>& coarse_target, const FeatureExtractor<Scalar>* extractor,
                                  const LossWeights& w);

}  // namespace angio
