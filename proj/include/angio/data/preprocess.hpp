#pragma once

#include "angio/tensor.hpp"

#include <stdexcept>

namespace angio {

/// Images in the data pipeline are (1, C, H, W) float tensors in [0, 1], C = 3 (SLO) or 1 (FA).
using Image = Tensor<float>;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TileGrid {
  Index rows = 8;
  Index cols = 8;
};

/// Contrast-limited adaptive histogram equalization.
///
/// Per tile: 256-bin histogram of round(255 v), bins clipped at
/// max(1, clip_limit * N / 256) with the excess spread evenly over all bins, then
/// LUT(b) = (cdf(b) - cdf(b_min)) / (N - cdf(b_min)). A tile whose pixels all share one
/// bin maps through the identity. Pixels blend the LUTs of the four nearest tile
/// centres bilinearly (clamped at the borders). RGB inputs are equalized on the
/// YCbCr luminance only.
Image clahe_sharpen(const Image& img, TileGrid grid = {}, double clip_limit = 2.0);

/// The per-tile lookup table used above, exposed for testing. `values` are the tile's pixels.
Eigen::ArrayXd clahe_tile_lut(const Eigen::ArrayXf& values, double clip_limit);

/// 2x2 mean pooling; throws ShapeError on odd dims.
Image downsample_half(const Image& img);

/// Mirror along the column axis.
Image flip_horizontal(const Image& img);

/// Rows [row, row+h), cols [col, col+w).
Image crop(const Image& img, Index row, Index col, Index h, Index w);

/// Pads by edge replication to (h, w), content at the top-left.
Image pad_edge(const Image& img, Index h, Index w);

void check_unit_range(const Image& img, const char* what);

}  // namespace angio
