#pragma once

#include "angio/nn.hpp"

#include <memory>
#include <string>
#include <vector>

namespace angio {

/// Raised when a pretrained asset is required but absent.
class DependencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Environment variable naming the directory holding pretrained extractor weights.
inline constexpr const char* kAssetDirEnv = "ANGIO_ASSET_DIR";
inline constexpr const char* kVgg19AssetName = "vgg19.tensors";

/// Frozen feature extractor for perceptual losses and embeddings.
///
/// Inputs are single-channel images in the generator range [-1, 1]; extractors
/// that want three channels replicate internally.
template <typename Scalar>
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<Var<Scalar>> taps(const Var<Scalar>& image) const = 0;
  virtual std::string name() const = 0;
};

/// Single tap returning the input; reduces the perceptual loss to plain L1.
template <typename Scalar>
class IdentityExtractor final : public FeatureExtractor<Scalar> {
 public:
  std::vector<Var<Scalar>> taps(const Var<Scalar>& image) const override { return {image}; }
  std::string name() const override { return "identity"; }
};

/// Small fixed-seed random conv stack: conv3-lrelu (tap), pool, conv3-lrelu (tap), pool, conv3-lrelu (tap).
template <typename Scalar>
class SurrogateExtractor final : public FeatureExtractor<Scalar> {
 public:
  explicit SurrogateExtractor(std::uint64_t seed = 1234, std::vector<Index> widths = {8, 16, 16});
  std::vector<Var<Scalar>> taps(const Var<Scalar>& image) const override;
  std::string name() const override { return "surrogate"; }
  Index pooled_width() const { return widths_.back(); }

 private:
  std::vector<Index> widths_;
  ParameterList<Scalar> params_;
  std::vector<Conv2d<Scalar>> convs_;
};

/// Pretrained 19-layer VGG feature stack (relu1_1 .. relu5_1 taps), ImageNet input normalization.
template <typename Scalar>
class Vgg19Extractor final : public FeatureExtractor<Scalar> {
 public:
  /// Loads `<asset_dir>/vgg19.tensors`; throws DependencyError when missing.
  explicit Vgg19Extractor(const std::string& asset_dir);
  std::vector<Var<Scalar>> taps(const Var<Scalar>& image) const override;
  std::string name() const override { return "vgg19"; }

  /// Penultimate pooled features (relu5_4, global mean) and, when the classifier is present, class probabilities.
  Var<Scalar> pooled(const Var<Scalar>& image) const;
  bool has_classifier() const { return !fc_.empty(); }
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> class_probs(const Var<Scalar>& image) const;

 private:
  Var<Scalar> normalize(const Var<Scalar>& image) const;
  ParameterList<Scalar> params_;
  std::vector<Conv2d<Scalar>> convs_;
  std::vector<int> block_of_;  // conv index -> block
  std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> fc_;
  std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> fc_bias_;
};

/// Reads ANGIO_ASSET_DIR; empty when unset.
std::string asset_dir_from_env();

/// "surrogate", "identity" or "vgg19" (the last loads assets from ANGIO_ASSET_DIR).
template <typename Scalar>
std::shared_ptr<FeatureExtractor<Scalar>> make_extractor(const std::string& kind, std::uint64_t seed = 1234);

extern template class SurrogateExtractor<float>;
extern template class SurrogateExtractor<double>;
extern template class Vgg19Extractor<float>;
extern template class Vgg19Extractor<double>;

}  // namespace angio
