#include "angio/data/synth.hpp"
#include "angio/io/container.hpp"
#include "angio/io/png.hpp"
#include "angio/ops.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

namespace angio {

void SynthConfig::validate() const {
  if (n_pairs < 1) throw ConfigError("synth: n_pairs must be > 0");
  if (height < 16 || width < 16 || height % 8 != 0 || width % 8 != 0) {
    throw ConfigError("synth: image dims must be >= 16 and divisible by 8, got " + std::to_string(height) + "x" +
                      std::to_string(width));
  }
  if (vessel_branches.lo < 1 || vessel_branches.hi < vessel_branches.lo) throw ConfigError("synth: bad vessel_branches range");
  if (lesion_count.lo < 0 || lesion_count.hi < lesion_count.lo) throw ConfigError("synth: bad lesion_count range");
}

void MisalignmentSpec::validate() const {
  if (max_translation_px < 0 || max_rotation_deg < 0 || elastic_sigma_px < 0) {
    throw ConfigError("misalignment magnitudes must be non-negative");
  }
}

namespace {

using Plane = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Plane gaussian_blur(const Plane& in, double sigma) {
  if (sigma <= 0) return in;
  const int r = static_cast<int>(std::ceil(3 * sigma));
  Eigen::ArrayXf k(2 * r + 1);
  for (int i = -r; i <= r; ++i) k[i + r] = static_cast<float>(std::exp(-0.5 * i * i / (sigma * sigma)));
  k /= k.sum();
  const Index h = in.rows(), w = in.cols();
  Plane tmp(h, w), out(h, w);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      float acc = 0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * in(y, std::clamp<Index>(x + i, 0, w - 1));
      tmp(y, x) = acc;
    }
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      float acc = 0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp(std::clamp<Index>(y + i, 0, h - 1), x);
      out(y, x) = acc;
    }
  return out;
}

Plane smooth_noise(Index h, Index w, double sigma, Rng& rng) {
  Plane p(h, w);
  for (Index i = 0; i < p.size(); ++i) p.data()[i] = static_cast<float>(rng.normal(0.0, 1.0));
  p = gaussian_blur(p, sigma);
  const float mu = p.mean();
  const float sd = std::sqrt((p - mu).square().mean());
  return sd > 0 ? Plane((p - mu) / sd) : Plane(Plane::Zero(h, w));
}

struct Segment {
  double y0, x0, y1, x1, width;
};

struct Lesion {
  double y, x, radius;
  bool hyper;
};

struct Geometry {
  Index h, w;
  double cy, cx, ry, rx;        // fundus ellipse
  double dy, dx, dr;            // optic disc
  std::vector<Segment> vessels;
  std::vector<Lesion> lesions;
  Plane background;             // low-frequency texture, unit std
};

bool inside_ellipse(const Geometry& g, double y, double x, double margin = 1.0) {
  const double a = (y - g.cy) / (g.ry * margin), b = (x - g.cx) / (g.rx * margin);
  return a * a + b * b <= 1.0;
}

void grow_vessel(Geometry& g, double y, double x, double heading, double width, int depth, Rng& rng) {
  const double s = static_cast<double>(std::min(g.h, g.w));
  const double step = 0.03 * s;
  const double min_width = std::max(0.8, 0.012 * s);
  for (int k = 0; k < 60 && width >= min_width; ++k) {
    heading += rng.normal(0.0, 0.22);
    const double ny = y + step * std::sin(heading), nx = x + step * std::cos(heading);
    if (!inside_ellipse(g, ny, nx, 0.97)) break;
    g.vessels.push_back({y, x, ny, nx, width});
    y = ny;
    x = nx;
    width *= 0.985;
    if (depth < 4 && rng.bernoulli(0.12)) {
      const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
      grow_vessel(g, y, x, heading + side * (0.4 + 0.3 * rng.uniform()), width * 0.7, depth + 1, rng);
      width *= 0.85;
      heading -= side * 0.15;
    }
  }
}

Geometry sample_geometry(const SynthConfig& cfg, Rng& rng) {
  Geometry g;
  g.h = cfg.height;
  g.w = cfg.width;
  const double s = static_cast<double>(std::min(g.h, g.w));
  g.cy = 0.5 * (g.h - 1) + rng.normal(0.0, 0.02 * g.h);
  g.cx = 0.5 * (g.w - 1) + rng.normal(0.0, 0.02 * g.w);
  g.ry = 0.46 * g.h * (0.95 + 0.1 * rng.uniform());
  g.rx = 0.46 * g.w * (0.95 + 0.1 * rng.uniform());
  const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
  g.dy = g.cy + rng.normal(0.0, 0.04 * g.h);
  g.dx = g.cx + side * 0.18 * g.w;
  g.dr = 0.06 * s;

  const int roots = static_cast<int>(rng.uniform_int(cfg.vessel_branches.lo, cfg.vessel_branches.hi));
  const double phase = 2 * std::numbers::pi * rng.uniform();
  for (int i = 0; i < roots; ++i) {
    const double heading = phase + 2 * std::numbers::pi * (i + 0.3 * rng.uniform()) / roots;
    grow_vessel(g, g.dy, g.dx, heading, 0.035 * s * (0.8 + 0.4 * rng.uniform()), 0, rng);
  }

  const int lesions = static_cast<int>(rng.uniform_int(cfg.lesion_count.lo, cfg.lesion_count.hi));
  for (int i = 0; i < lesions; ++i) {
    double y = 0, x = 0;
    for (int tries = 0; tries < 100; ++tries) {
      y = g.h * rng.uniform();
      x = g.w * rng.uniform();
      if (inside_ellipse(g, y, x, 0.8)) break;
    }
    g.lesions.push_back({y, x, s * (0.02 + 0.03 * rng.uniform()), rng.bernoulli(0.6)});
  }
  g.background = smooth_noise(g.h, g.w, s / 8.0, rng);
  return g;
}

// Anti-aliased vessel coverage in [0,1].
Plane rasterize_vessels(const Geometry& g) {
  Plane cov = Plane::Zero(g.h, g.w);
  for (const auto& seg : g.vessels) {
    const double r = 0.5 * seg.width + 1.0;
    const Index y0 = std::max<Index>(0, static_cast<Index>(std::floor(std::min(seg.y0, seg.y1) - r)));
    const Index y1 = std::min<Index>(g.h - 1, static_cast<Index>(std::ceil(std::max(seg.y0, seg.y1) + r)));
    const Index x0 = std::max<Index>(0, static_cast<Index>(std::floor(std::min(seg.x0, seg.x1) - r)));
    const Index x1 = std::min<Index>(g.w - 1, static_cast<Index>(std::ceil(std::max(seg.x0, seg.x1) + r)));
    const double vy = seg.y1 - seg.y0, vx = seg.x1 - seg.x0;
    const double len2 = std::max(vy * vy + vx * vx, 1e-12);
    for (Index y = y0; y <= y1; ++y)
      for (Index x = x0; x <= x1; ++x) {
        const double t = std::clamp(((y - seg.y0) * vy + (x - seg.x0) * vx) / len2, 0.0, 1.0);
        const double ey = y - (seg.y0 + t * vy), ex = x - (seg.x0 + t * vx);
        const double c = std::clamp(0.5 * seg.width + 0.5 - std::sqrt(ey * ey + ex * ex), 0.0, 1.0);
        cov(y, x) = std::max(cov(y, x), static_cast<float>(c));
      }
  }
  return cov;
}

Plane ellipse_mask(const Geometry& g) {
  Plane m(g.h, g.w);
  for (Index y = 0; y < g.h; ++y)
    for (Index x = 0; x < g.w; ++x) {
      const double a = (y - g.cy) / g.ry, b = (x - g.cx) / g.rx;
      // Signed distance approximation scaled to pixels, two-pixel soft rim.
      const double d = (1.0 - std::sqrt(a * a + b * b)) * std::min(g.ry, g.rx);
      m(y, x) = static_cast<float>(std::clamp(0.5 + 0.5 * d, 0.0, 1.0));
    }
  return m;
}

Plane blob(const Geometry& g, double cy, double cx, double r) {
  Plane p(g.h, g.w);
  for (Index y = 0; y < g.h; ++y)
    for (Index x = 0; x < g.w; ++x) {
      const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
      p(y, x) = static_cast<float>(std::exp(-0.5 * d2 / (r * r)));
    }
  return p;
}

Image vessel_mask_image(const Plane& cov) {
  Image m(Shape{1, 1, cov.rows(), cov.cols()});
  m.plane(0, 0) = (cov > 0.5f).cast<float>().matrix();
  return m;
}

constexpr double kImageBlurSigma = 0.6;

std::pair<Image, Image> render_slo(const Geometry& g, Rng& rng) {
  const Plane cov = rasterize_vessels(g);
  const Plane eye = ellipse_mask(g);
  const Plane disc = blob(g, g.dy, g.dx, g.dr);
  Plane hyper = Plane::Zero(g.h, g.w), hypo = Plane::Zero(g.h, g.w);
  for (const auto& l : g.lesions) (l.hyper ? hyper : hypo) += blob(g, l.y, l.x, l.radius);

  const double base[3] = {0.62, 0.38, 0.20};
  const double vessel_dark[3] = {0.35, 0.5, 0.45};
  const double disc_gain[3] = {0.25, 0.3, 0.2};
  Image out(Shape{1, 3, g.h, g.w});
  for (Index c = 0; c < 3; ++c) {
    Plane p = base[c] + 0.05f * g.background + static_cast<float>(disc_gain[c]) * disc;
    p += 0.06f * hyper - 0.06f * hypo;
    p *= 1.0f - static_cast<float>(vessel_dark[c]) * cov;
    for (Index i = 0; i < p.size(); ++i) p.data()[i] *= static_cast<float>(1.0 + 0.04 * rng.normal(0.0, 1.0));
    p = eye * p + (1.0f - eye) * 0.03f;
    out.plane(0, c) = gaussian_blur(p, kImageBlurSigma).max(0.0f).min(1.0f).matrix();
  }
  return {out, vessel_mask_image(cov)};
}

std::pair<Image, Image> render_fa(const Geometry& g) {
  const Plane cov = rasterize_vessels(g);
  const Plane eye = ellipse_mask(g);
  Plane p = 0.18f + 0.04f * g.background + 0.6f * cov + 0.3f * blob(g, g.dy, g.dx, g.dr);
  for (const auto& l : g.lesions) p += (l.hyper ? 0.35f : -0.12f) * blob(g, l.y, l.x, l.radius);
  p = eye * p + (1.0f - eye) * 0.02f;
  Image out(Shape{1, 1, g.h, g.w});
  out.plane(0, 0) = gaussian_blur(p, kImageBlurSigma).max(0.0f).min(1.0f).matrix();
  return {out, vessel_mask_image(cov)};
}

std::string pair_id(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "pair_%04d", i);
  return buf;
}

}  // namespace

std::vector<SynthPair> synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<SynthPair> out;
  out.reserve(static_cast<size_t>(cfg.n_pairs));
  for (int i = 0; i < cfg.n_pairs; ++i) {
    Rng rng = Rng::derive(cfg.seed, static_cast<std::uint64_t>(i));
    const Geometry g = sample_geometry(cfg, rng);
    auto [slo, slo_mask] = render_slo(g, rng);
    auto [fa, fa_mask] = render_fa(g);
    SynthPair sp;
    sp.pair = RawPair{pair_id(i), std::move(slo), std::move(fa), PairSource::kSynthetic};
    sp.slo_vessel_mask = std::move(slo_mask);
    sp.fa_vessel_mask = std::move(fa_mask);
    out.push_back(std::move(sp));
  }
  return out;
}

Tensor<float> translation_field(Index h, Index w, double dy, double dx) {
  Tensor<float> f(Shape{1, 2, h, w});
  f.plane(0, 0).setConstant(static_cast<float>(dy));
  f.plane(0, 1).setConstant(static_cast<float>(dx));
  return f;
}

Tensor<float> sample_misalignment(const MisalignmentSpec& spec, Index h, Index w, Rng& rng) {
  spec.validate();
  const double theta = spec.max_rotation_deg * std::numbers::pi / 180.0 * (2 * rng.uniform() - 1);
  const double phi = 2 * std::numbers::pi * rng.uniform();
  const double r = spec.max_translation_px * rng.uniform();
  const double ty = r * std::sin(phi), tx = r * std::cos(phi);
  const double cy = 0.5 * (h - 1), cx = 0.5 * (w - 1);
  const double c = std::cos(theta), s = std::sin(theta);
  Tensor<float> f(Shape{1, 2, h, w});
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      const double py = y - cy, px = x - cx;
      f(0, 0, y, x) = static_cast<float>(c * py + s * px - py + ty);
      f(0, 1, y, x) = static_cast<float>(-s * py + c * px - px + tx);
    }
  if (spec.elastic_sigma_px > 0) {
    for (Index k = 0; k < 2; ++k) {
      const Plane n = smooth_noise(h, w, kElasticSmoothingPx, rng);
      f.plane(0, k).array() += static_cast<float>(spec.elastic_sigma_px) * n;
    }
  }
  return f;
}

Image apply_field(const Image& img, const Tensor<float>& field) {
  return warp(constant(img), constant(field)).value();
}

Tensor<float> invert_field(const Tensor<float>& field, int iterations) {
  Tensor<float> e = field;
  e.array() = -e.array();
  for (int k = 0; k < iterations; ++k) {
    Tensor<float> next = warp(constant(field), constant(e)).value();
    next.array() = -next.array();
    e = std::move(next);
  }
  return e;
}

MisalignedPair inject_misalignment(const RawPair& pair, const MisalignmentSpec& spec, Rng& rng) {
  pair.validate();
  MisalignedPair out{pair, sample_misalignment(spec, pair.fa.h(), pair.fa.w(), rng)};
  out.pair.fa = apply_field(pair.fa, out.field);
  out.pair.fa.array() = out.pair.fa.array().max(0.0f).min(1.0f);
  return out;
}

DatasetManifest write_synth_dataset(const std::string& root, const SynthConfig& cfg, double train_fraction,
                                    const MisalignmentSpec& misalignment) {
  misalignment.validate();
  const bool noisy = misalignment.max_translation_px > 0 || misalignment.max_rotation_deg > 0 ||
                     misalignment.elastic_sigma_px > 0;
  const auto pairs = synth_generate(cfg);
  DatasetManifest m;
  for (size_t i = 0; i < pairs.size(); ++i) {
    const auto& sp = pairs[i];
    const std::string& id = sp.pair.id;
    ManifestEntry e{id, "slo/" + id + ".png", "fa/" + id + ".png", "", "masks/" + id + ".png", ""};
    write_png(root + "/" + e.slo, sp.pair.slo);
    write_png(root + "/" + e.mask, sp.fa_vessel_mask);
    if (noisy) {
      Rng rng = Rng::derive(cfg.seed ^ 0x6d15a11full, i);
      const auto mis = inject_misalignment(sp.pair, misalignment, rng);
      e.fa_aligned = "fa_aligned/" + id + ".png";
      e.field = "fields/" + id + ".f32";
      write_png(root + "/" + e.fa, mis.pair.fa);
      write_png(root + "/" + e.fa_aligned, sp.pair.fa);
      write_field(root + "/" + e.field, mis.field);
    } else {
      write_png(root + "/" + e.fa, sp.pair.fa);
    }
    m.pairs.push_back(std::move(e));
  }
  m = split_dataset(m, train_fraction, cfg.seed);
  save_manifest(root, m);
  return m;
}

}  // namespace angio
