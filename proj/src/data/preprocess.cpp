#include "angio/data/preprocess.hpp"

#include <array>
#include <cmath>

namespace angio {

namespace {

constexpr int kBins = 256;

Index bin_of(float v) { return std::clamp<Index>(std::lround(v * 255.0f), 0, kBins - 1); }

// Rows [lo(i), lo(i+1)) belong to tile i.
Index tile_edge(Index i, Index tiles, Index extent) { return i * extent / tiles; }

// Bilinear neighbours along one axis: the two tile indices and the weight of the second.
struct AxisBlend {
  Index t0, t1;
  double a;
};

AxisBlend blend_axis(Index p, Index tiles, Index extent) {
  // Centre of tile i in pixel coordinates.
  auto centre = [&](Index i) { return 0.5 * (tile_edge(i, tiles, extent) + tile_edge(i + 1, tiles, extent)) - 0.5; };
  if (tiles == 1 || p <= centre(0)) return {0, 0, 0.0};
  if (p >= centre(tiles - 1)) return {tiles - 1, tiles - 1, 0.0};
  Index i = 0;
  while (i + 1 < tiles && centre(i + 1) <= p) ++i;
  const double c0 = centre(i), c1 = centre(i + 1);
  return {i, i + 1, (p - c0) / (c1 - c0)};
}

Image clahe_gray(const Image& gray, TileGrid grid, double clip_limit) {
  const Index h = gray.h(), w = gray.w();
  const Index rows = std::min(grid.rows, h), cols = std::min(grid.cols, w);
  std::vector<Eigen::ArrayXd> luts(static_cast<size_t>(rows * cols));
  for (Index ty = 0; ty < rows; ++ty)
    for (Index tx = 0; tx < cols; ++tx) {
      const Index y0 = tile_edge(ty, rows, h), y1 = tile_edge(ty + 1, rows, h);
      const Index x0 = tile_edge(tx, cols, w), x1 = tile_edge(tx + 1, cols, w);
      Eigen::ArrayXf vals((y1 - y0) * (x1 - x0));
      Index k = 0;
      for (Index y = y0; y < y1; ++y)
        for (Index x = x0; x < x1; ++x) vals[k++] = gray(0, 0, y, x);
      luts[static_cast<size_t>(ty * cols + tx)] = clahe_tile_lut(vals, clip_limit);
    }

  Image out(gray.shape());
  for (Index y = 0; y < h; ++y) {
    const AxisBlend by = blend_axis(y, rows, h);
    for (Index x = 0; x < w; ++x) {
      const AxisBlend bx = blend_axis(x, cols, w);
      const float v = gray(0, 0, y, x);
      const Index b = bin_of(v);
      // Degenerate tiles carry an empty LUT meaning identity.
      auto map = [&](Index ty, Index tx) {
        const auto& lut = luts[static_cast<size_t>(ty * cols + tx)];
        return lut.size() == 0 ? static_cast<double>(v) : lut[b];
      };
      // lerp(a, b, t) = a + (b - a) t is exact when a == b.
      const double top = map(by.t0, bx.t0) + (map(by.t0, bx.t1) - map(by.t0, bx.t0)) * bx.a;
      const double bot = map(by.t1, bx.t0) + (map(by.t1, bx.t1) - map(by.t1, bx.t0)) * bx.a;
      out(0, 0, y, x) = static_cast<float>(std::clamp(top + (bot - top) * by.a, 0.0, 1.0));
    }
  }
  return out;
}

}  // namespace

void check_unit_range(const Image& img, const char* what) {
  if (!img.all_finite()) throw InputError(std::string(what) + ": non-finite pixel values");
  if (img.size() > 0 && (img.array().minCoeff() < 0.0f || img.array().maxCoeff() > 1.0f)) {
    throw InputError(std::string(what) + ": pixel values outside [0,1]");
  }
}

Eigen::ArrayXd clahe_tile_lut(const Eigen::ArrayXf& values, double clip_limit) {
  std::array<double, kBins> hist{};
  for (Index i = 0; i < values.size(); ++i) hist[static_cast<size_t>(bin_of(values[i]))] += 1.0;
  int occupied = 0;
  for (double c : hist) occupied += c > 0;
  if (occupied <= 1) return {};

  const double n = static_cast<double>(values.size());
  const double limit = std::max(1.0, clip_limit * n / kBins);
  double excess = 0;
  for (double& c : hist) {
    if (c > limit) {
      excess += c - limit;
      c = limit;
    }
  }
  const double share = excess / kBins;
  for (double& c : hist) c += share;

  Eigen::ArrayXd cdf(kBins);
  double acc = 0;
  for (int b = 0; b < kBins; ++b) cdf[b] = acc += hist[static_cast<size_t>(b)];
  int bmin = 0;
  while (hist[static_cast<size_t>(bmin)] <= 0) ++bmin;
  const double base = cdf[bmin];
  return ((cdf - base) / (n - base)).max(0.0).min(1.0);
}

Image clahe_sharpen(const Image& img, TileGrid grid, double clip_limit) {
  if (grid.rows < 1 || grid.cols < 1) throw ConfigError("clahe: tile grid dims must be >= 1");
  if (!(clip_limit > 0)) throw ConfigError("clahe: clip_limit must be > 0");
  if (img.n() != 1 || (img.c() != 1 && img.c() != 3)) throw ShapeError("clahe: expected (1,1|3,H,W), got " + img.shape().str());
  check_unit_range(img, "clahe");
  if (img.c() == 1) return clahe_gray(img, grid, clip_limit);

  // YCbCr (full-range BT.601); only Y is equalized.
  const Index h = img.h(), w = img.w();
  Image y(Shape{1, 1, h, w}), cb(Shape{1, 1, h, w}), cr(Shape{1, 1, h, w});
  for (Index i = 0; i < h; ++i)
    for (Index j = 0; j < w; ++j) {
      const double r = img(0, 0, i, j), g = img(0, 1, i, j), b = img(0, 2, i, j);
      y(0, 0, i, j) = static_cast<float>(0.299 * r + 0.587 * g + 0.114 * b);
      cb(0, 0, i, j) = static_cast<float>(-0.168736 * r - 0.331264 * g + 0.5 * b);
      cr(0, 0, i, j) = static_cast<float>(0.5 * r - 0.418688 * g - 0.081312 * b);
    }
  y.array() = y.array().max(0.0f).min(1.0f);
  const Image ye = clahe_gray(y, grid, clip_limit);
  Image out(img.shape());
  for (Index i = 0; i < h; ++i)
    for (Index j = 0; j < w; ++j) {
      const double yy = ye(0, 0, i, j), u = cb(0, 0, i, j), v = cr(0, 0, i, j);
      out(0, 0, i, j) = static_cast<float>(std::clamp(yy + 1.402 * v, 0.0, 1.0));
      out(0, 1, i, j) = static_cast<float>(std::clamp(yy - 0.344136 * u - 0.714136 * v, 0.0, 1.0));
      out(0, 2, i, j) = static_cast<float>(std::clamp(yy + 1.772 * u, 0.0, 1.0));
    }
  return out;
}

Image downsample_half(const Image& img) {
  if (img.h() % 2 != 0 || img.w() % 2 != 0) {
    throw ShapeError("downsample_half needs even dims, got " + img.shape().str());
  }
  Image out(Shape{img.n(), img.c(), img.h() / 2, img.w() / 2});
  for (Index n = 0; n < img.n(); ++n)
    for (Index c = 0; c < img.c(); ++c)
      for (Index y = 0; y < out.h(); ++y)
        for (Index x = 0; x < out.w(); ++x) {
          out(n, c, y, x) = 0.25f * (img(n, c, 2 * y, 2 * x) + img(n, c, 2 * y, 2 * x + 1) +
                                     img(n, c, 2 * y + 1, 2 * x) + img(n, c, 2 * y + 1, 2 * x + 1));
        }
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out(img.shape());
  for (Index n = 0; n < img.n(); ++n)
    for (Index c = 0; c < img.c(); ++c) out.plane(n, c) = img.plane(n, c).rowwise().reverse();
  return out;
}

Image crop(const Image& img, Index row, Index col, Index h, Index w) {
  if (row < 0 || col < 0 || h < 1 || w < 1 || row + h > img.h() || col + w > img.w()) {
    throw ShapeError("crop [" + std::to_string(row) + "," + std::to_string(col) + "]+" + std::to_string(h) + "x" +
                     std::to_string(w) + " outside " + img.shape().str());
  }
  Image out(Shape{img.n(), img.c(), h, w});
  for (Index n = 0; n < img.n(); ++n)
    for (Index c = 0; c < img.c(); ++c) out.plane(n, c) = img.plane(n, c).block(row, col, h, w);
  return out;
}

Image pad_edge(const Image& img, Index h, Index w) {
  if (h < img.h() || w < img.w()) throw ShapeError("pad_edge target smaller than image");
  Image out(Shape{img.n(), img.c(), h, w});
  for (Index n = 0; n < img.n(); ++n)
    for (Index c = 0; c < img.c(); ++c)
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) out(n, c, y, x) = img(n, c, std::min(y, img.h() - 1), std::min(x, img.w() - 1));
  return out;
}

}  // namespace angio
