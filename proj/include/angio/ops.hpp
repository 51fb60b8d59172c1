#pragma once

#include "angio/autograd.hpp"

namespace angio {

/// Convolution geometry shared by forward and transposed convolutions.
struct ConvGeometry {
  Index kernel = 3;
  Index stride = 1;
  Index padding = 0;

  Index output_extent(Index in) const { return (in + 2 * padding - kernel) / stride + 1; }
};

// Elementwise arithmetic. Shapes must match exactly unless noted.
template <typename Scalar> Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> scale(const Var<Scalar>& a, Scalar s);
template <typename Scalar> Var<Scalar> add_scalar(const Var<Scalar>& a, Scalar s);

/// x (N,C,H,W) times mask (N,1,H,W), broadcast over channels.
template <typename Scalar> Var<Scalar> mul_channel_broadcast(const Var<Scalar>& x, const Var<Scalar>& mask);

/// Concatenates along the channel axis.
template <typename Scalar> Var<Scalar> concat_channels(const Var<Scalar>& a, const Var<Scalar>& b);

/// Repeats a single-channel tensor `copies` times along channels.
template <typename Scalar> Var<Scalar> repeat_channels(const Var<Scalar>& x, Index copies);

template <typename Scalar> Var<Scalar> leaky_relu(const Var<Scalar>& x, Scalar slope);
template <typename Scalar> Var<Scalar> relu(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> tanh(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> sigmoid(const Var<Scalar>& x);
/// log(1 + exp(x)), numerically stable.
template <typename Scalar> Var<Scalar> softplus(const Var<Scalar>& x);

/// Cross-correlation with zero padding. weight (Cout,Cin,k,k), bias (1,Cout,1,1) or undefined.
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias, ConvGeometry g);

/// Adjoint of conv2d. weight (Cin,Cout,k,k); output extent (in-1)*stride - 2*pad + k + output_padding.
template <typename Scalar>
Var<Scalar> conv_transpose2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias,
                             ConvGeometry g, Index output_padding);

/// Mirror padding excluding the edge pixel (pad < extent).
template <typename Scalar> Var<Scalar> reflection_pad(const Var<Scalar>& x, Index pad);

/// Per-sample, per-channel normalization without affine parameters.
template <typename Scalar> Var<Scalar> instance_norm(const Var<Scalar>& x, Scalar eps = Scalar(1e-5));

/// 2x2 mean pooling; H and W must be even.
template <typename Scalar> Var<Scalar> avg_pool2(const Var<Scalar>& x);
/// 2x2 max pooling; H and W must be even.
template <typename Scalar> Var<Scalar> max_pool2(const Var<Scalar>& x);
/// Mean over H and W, giving (N,C,1,1).
template <typename Scalar> Var<Scalar> global_avg_pool(const Var<Scalar>& x);

/// Bilinear resampling: out(p) = img(p + field(p)), field (N,2,H,W) holding (dy, dx) in pixels.
/// Sample positions are clamped to the image, i.e. edge replication.
template <typename Scalar> Var<Scalar> warp(const Var<Scalar>& img, const Var<Scalar>& field);

/// Forward spatial differences x[.., y+1, x] - x[.., y, x] and x[.., y, x+1] - x[.., y, x].
template <typename Scalar> Var<Scalar> diff_y(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> diff_x(const Var<Scalar>& x);

// Reductions to a 1x1x1x1 scalar.
template <typename Scalar> Var<Scalar> sum(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> mean(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> mean_square(const Var<Scalar>& x);
/// mean |a - b|
template <typename Scalar> Var<Scalar> l1_mean(const Var<Scalar>& a, const Var<Scalar>& b);

/// Constant (non-differentiable) leaf.
template <typename Scalar> Var<Scalar> constant(Tensor<Scalar> t) { return Var<Scalar>(std::move(t), false); }

}  // namespace angio
