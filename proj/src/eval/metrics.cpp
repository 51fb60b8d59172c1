#include "angio/eval/metrics.hpp"

#include "angio/ops.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace angio {

namespace {

using Plane = Eigen::ArrayXXd;

void check_pair(const Image& a, const Image& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shapes differ, " + a.shape().str() + " vs " + b.shape().str());
  }
  if (a.size() == 0) throw ShapeError(std::string(what) + ": empty image");
}

Plane plane(const Image& img, Index n, Index c) {
  return img.plane(n, c).cast<double>().array();
}

Eigen::ArrayXd gaussian_window() {
  Eigen::ArrayXd g(kSsimWindow);
  const double mid = (kSsimWindow - 1) / 2.0;
  for (int i = 0; i < kSsimWindow; ++i) g(i) = std::exp(-(i - mid) * (i - mid) / (2 * kSsimSigma * kSsimSigma));
  return g / g.sum();
}

// Separable 'valid' filtering.
Plane filter_valid(const Plane& p) {
  static const Eigen::ArrayXd g = gaussian_window();
  const Index k = kSsimWindow;
  const Index oh = p.rows() - k + 1, ow = p.cols() - k + 1;
  Plane rows(oh, p.cols());
  for (Index y = 0; y < oh; ++y) rows.row(y) = (p.middleRows(y, k).colwise() * g).colwise().sum();
  Plane out(oh, ow);
  for (Index x = 0; x < ow; ++x) out.col(x) = (rows.middleCols(x, k).rowwise() * g.transpose()).rowwise().sum();
  return out;
}

struct SsimParts {
  double ssim;  // mean of l * cs
  double cs;    // mean of cs
};

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

SsimParts ssim_parts(const Plane& x, const Plane& y) {
  const Plane mx = filter_valid(x), my = filter_valid(y);
  const Plane sxx = filter_valid(x * x) - mx * mx;
  const Plane syy = filter_valid(y * y) - my * my;
  const Plane sxy = filter_valid(x * y) - mx * my;
  const Plane cs = (2 * sxy + kC2) / (sxx + syy + kC2);
  const Plane l = (2 * mx * my + kC1) / (mx * mx + my * my + kC1);
  return {(l * cs).mean(), cs.mean()};
}

Plane pool2(const Plane& p) {
  const Index h = p.rows() / 2, w = p.cols() / 2;
  Plane out(h, w);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      out(y, x) = 0.25 * (p(2 * y, 2 * x) + p(2 * y + 1, 2 * x) + p(2 * y, 2 * x + 1) + p(2 * y + 1, 2 * x + 1));
  return out;
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  return centered.transpose() * centered / static_cast<double>(x.rows() - 1);
}

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
  const Eigen::ArrayXd e = (z.array() - z.maxCoeff()).exp();
  return (e / e.sum()).matrix();
}

}  // namespace

double psnr(const Image& a, const Image& b, double cap_db) {
  check_pair(a, b, "psnr");
  double se = 0;
  for (Index i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse < std::pow(10.0, -cap_db / 10.0)) return cap_db;
  return std::min(cap_db, 10.0 * std::log10(1.0 / mse));
}

int max_ms_ssim_scales(Index h, Index w) {
  int s = 0;
  while (s < static_cast<int>(kMsSsimWeights.size()) && std::min(h, w) >= (Index{1} << s) * kSsimWindow) ++s;
  return s;
}

double ms_ssim(const Image& a, const Image& b, int scales) {
  check_pair(a, b, "ms_ssim");
  if (scales < 1 || scales > static_cast<int>(kMsSsimWeights.size())) {
    throw std::invalid_argument("ms_ssim: scales must be in [1, 5]");
  }
  const Index need = (Index{1} << (scales - 1)) * kSsimWindow;
  if (a.h() < need || a.w() < need) {
    throw ShapeError("ms_ssim: " + std::to_string(a.h()) + "x" + std::to_string(a.w()) + " is too small for " +
                     std::to_string(scales) + " scales (needs " + std::to_string(need) + " per axis); use scales=" +
                     std::to_string(std::max(1, max_ms_ssim_scales(a.h(), a.w()))) + " or fewer");
  }
  // The canonical weights sum to 1.0001 and are used as is; truncated sets are renormalized.
  double wsum = 1;
  if (scales < static_cast<int>(kMsSsimWeights.size())) {
    wsum = 0;
    for (int s = 0; s < scales; ++s) wsum += kMsSsimWeights[static_cast<size_t>(s)];
  }

  double total = 0;
  for (Index n = 0; n < a.n(); ++n) {
    for (Index c = 0; c < a.c(); ++c) {
      Plane x = plane(a, n, c), y = plane(b, n, c);
      double v = 1;
      for (int s = 0; s < scales; ++s) {
        const SsimParts p = ssim_parts(x, y);
        const double factor = s + 1 == scales ? p.ssim : p.cs;
        v *= std::pow(std::max(factor, 0.0), kMsSsimWeights[static_cast<size_t>(s)] / wsum);
        if (s + 1 < scales) {
          x = pool2(x);
          y = pool2(y);
        }
      }
      total += v;
    }
  }
  return total / static_cast<double>(a.n() * a.c());
}

double ssim(const Image& a, const Image& b) {
  check_pair(a, b, "ssim");
  if (a.h() < kSsimWindow || a.w() < kSsimWindow) throw ShapeError("ssim: image smaller than the 11-pixel window");
  double total = 0;
  for (Index n = 0; n < a.n(); ++n)
    for (Index c = 0; c < a.c(); ++c) total += ssim_parts(plane(a, n, c), plane(b, n, c)).ssim;
  return total / static_cast<double>(a.n() * a.c());
}

double fid(const Eigen::MatrixXd& feats_a, const Eigen::MatrixXd& feats_b, double eps) {
  if (feats_a.cols() != feats_b.cols()) throw ShapeError("fid: feature dimensions differ");
  if (feats_a.rows() < 2 || feats_b.rows() < 2) throw std::invalid_argument("fid: each set needs at least 2 vectors");
  if (!feats_a.allFinite() || !feats_b.allFinite()) throw InputError("fid: non-finite features");
  const Index d = feats_a.cols();
  const Eigen::VectorXd dmu = (feats_a.colwise().mean() - feats_b.colwise().mean()).transpose();
  const Eigen::MatrixXd ca = covariance(feats_a) + eps * Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd cb = covariance(feats_b) + eps * Eigen::MatrixXd::Identity(d, d);
  // Tr((Ca Cb)^1/2) = Tr((Ca^1/2 Cb Ca^1/2)^1/2), the latter symmetric.
  const Eigen::MatrixXd ra = sqrt_psd(ca);
  const Eigen::MatrixXd m = ra * cb * ra;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return std::max(0.0, dmu.squaredNorm() + ca.trace() + cb.trace() - 2 * tr_sqrt);
}

double inception_score(const Eigen::MatrixXd& probs) {
  if (probs.rows() < 1 || probs.cols() < 1) throw std::invalid_argument("inception_score: empty probability set");
  for (Index i = 0; i < probs.rows(); ++i) {
    if (!probs.row(i).allFinite() || (probs.row(i).array() < 0).any() || std::abs(probs.row(i).sum() - 1.0) > 1e-4) {
      throw std::invalid_argument("inception_score: row " + std::to_string(i) + " is not a probability vector");
    }
  }
  const Eigen::RowVectorXd marginal = probs.colwise().mean();
  double kl_sum = 0;
  for (Index i = 0; i < probs.rows(); ++i) {
    for (Index k = 0; k < probs.cols(); ++k) {
      const double p = probs(i, k);
      if (p > 0) kl_sum += p * std::log(p / marginal(k));
    }
  }
  return std::exp(kl_sum / static_cast<double>(probs.rows()));
}

namespace {

Var<float> to_network_range(const Image& img) {
  if (img.c() != 1 || img.n() != 1) throw ShapeError("embedding expects a (1,1,H,W) image, got " + img.shape().str());
  check_unit_range(img, "embedding input");
  Tensor<float> t = img;
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = 2 * t.data()[i] - 1;
  return Var<float>(std::move(t));
}

class SurrogateEmbedder final : public Embedder {
 public:
  std::string name() const override { return "surrogate"; }
  Index dim() const override { return kSurrogateEmbeddingDim; }

  Eigen::VectorXd features(const Image& img) const override {
    const auto taps = run(img);
    Eigen::VectorXd f(kSurrogateEmbeddingDim);
    Index k = 0;
    for (const auto& t : taps) {
      const Eigen::VectorXd m = means(t);
      f.segment(k, m.size()) = m;
      k += m.size();
    }
    return f;
  }

  Eigen::VectorXd class_probs(const Image& img) const override { return softmax(means(run(img).back())); }

 private:
  // Edge padding to a multiple of 4 keeps all three taps for any size.
  std::vector<Var<float>> run(const Image& img) const {
    const Index h = (img.h() + 3) / 4 * 4, w = (img.w() + 3) / 4 * 4;
    const Image padded = h == img.h() && w == img.w() ? img : pad_edge(img, h, w);
    auto taps = ext_.taps(to_network_range(padded));
    if (taps.size() != 3) throw ShapeError("surrogate embedding: image too small");
    return taps;
  }

  static Eigen::VectorXd means(const Var<float>& tap) {
    const Tensor<float>& v = tap.value();
    Eigen::VectorXd m(v.c());
    const Index hw = v.h() * v.w();
    for (Index c = 0; c < v.c(); ++c) {
      double s = 0;
      for (Index i = 0; i < hw; ++i) s += v.data()[c * hw + i];
      m(c) = s / static_cast<double>(hw);
    }
    return m;
  }

  SurrogateExtractor<float> ext_;
};

class Vgg19Embedder final : public Embedder {
 public:
  Vgg19Embedder() : ext_(asset_dir_from_env()) {}
  std::string name() const override { return "vgg19"; }
  Index dim() const override { return 512; }
  Eigen::VectorXd features(const Image& img) const override {
    const auto p = ext_.pooled(to_network_range(img));
    return Eigen::Map<const Eigen::VectorXf>(p.value().data(), p.value().size()).cast<double>();
  }
  Eigen::VectorXd class_probs(const Image& img) const override {
    return ext_.class_probs(to_network_range(img)).cast<double>();
  }

 private:
  Vgg19Extractor<float> ext_;
};

}  // namespace

std::unique_ptr<Embedder> make_embedder(const std::string& kind) {
  if (kind == "surrogate") return std::make_unique<SurrogateEmbedder>();
  if (kind == "vgg19") return std::make_unique<Vgg19Embedder>();
  throw std::invalid_argument("unknown embedder '" + kind + "' (expected surrogate or vgg19)");
}

Eigen::MatrixXd embed_features(const std::vector<Image>& images, const Embedder& embedder) {
  Eigen::MatrixXd out(static_cast<Index>(images.size()), embedder.dim());
  for (size_t i = 0; i < images.size(); ++i) out.row(static_cast<Index>(i)) = embedder.features(images[i]).transpose();
  return out;
}

Eigen::MatrixXd embed_probs(const std::vector<Image>& images, const Embedder& embedder) {
  Eigen::MatrixXd out;
  for (size_t i = 0; i < images.size(); ++i) {
    const Eigen::VectorXd p = embedder.class_probs(images[i]);
    if (i == 0) out.resize(static_cast<Index>(images.size()), p.size());
    out.row(static_cast<Index>(i)) = p.transpose();
  }
  return out;
}

}  // namespace angio
