#pragma once

#include "angio/data/preprocess.hpp"
#include "angio/loss/extractors.hpp"

#include <array>
#include <memory>

namespace angio {

inline constexpr double kPsnrCapDb = 100.0;

/// 10 log10(1 / MSE) on the [0,1] scale, capped at cap_db.
double psnr(const Image& a, const Image& b, double cap_db = kPsnrCapDb);

/// Scale weights of the five-scale MS-SSIM (used as is). With fewer scales the leading weights are renormalized to sum 1.
inline constexpr std::array<double, 5> kMsSsimWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

/// Largest scale count (<= 5) for which every scale still fits an 11-pixel window.
int max_ms_ssim_scales(Index h, Index w);

/// Multi-scale SSIM, data range 1, Gaussian window 11 / sigma 1.5 (valid filtering), K1 = 0.01, K2 = 0.03.
/// Contrast-structure at every scale, luminance at the coarsest only, 2x2 mean pooling between
/// scales, negative factors clamped to 0. Channels are averaged.
double ms_ssim(const Image& a, const Image& b, int scales = 5);

/// Single-scale SSIM mean, same constants.
double ssim(const Image& a, const Image& b);

/// Frechet distance between Gaussian fits of two feature sets (rows are samples).
/// Covariances are unbiased and regularized by eps on the diagonal; clamped at 0.
inline constexpr double kFidEps = 1e-6;
double fid(const Eigen::MatrixXd& feats_a, const Eigen::MatrixXd& feats_b, double eps = kFidEps);

/// exp(mean_i KL(p_i || mean_j p_j)); rows must be probability vectors.
double inception_score(const Eigen::MatrixXd& probs);

/// Image embedding used by FID and IS.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::string name() const = 0;
  virtual Index dim() const = 0;
  /// Image (1,1,H,W) in [0,1].
  virtual Eigen::VectorXd features(const Image& img) const = 0;
  virtual Eigen::VectorXd class_probs(const Image& img) const = 0;
};

/// "surrogate": spatial means of every surrogate tap (8+16+16 = 40 dims); class
/// probabilities are the softmax of the last tap's means (16 classes).
/// "vgg19": relu5_4 global mean (512 dims) and the ImageNet classifier; needs ANGIO_ASSET_DIR.
std::unique_ptr<Embedder> make_embedder(const std::string& kind);

inline constexpr Index kSurrogateEmbeddingDim = 40;

/// One row per image.
Eigen::MatrixXd embed_features(const std::vector<Image>& images, const Embedder& embedder);
Eigen::MatrixXd embed_probs(const std::vector<Image>& images, const Embedder& embedder);

}  // namespace angio
