#pragma once

#include "angio/nn.hpp"

namespace angio {

enum class BlockKind { kInitial, kDown, kUp, kResidual };

/// Output extent of a generator block; throws ShapeError for a downsample of odd dims.
Shape block_output_shape(BlockKind kind, const Shape& in, Index out_channels);

/// Leaky rectifier, reflection padding, stride-1 convolution.
template <typename Scalar>
class InitialBlock {
 public:
  InitialBlock() = default;
  InitialBlock(ParameterList<Scalar>& params, const std::string& name, Index in, Index out, Index kernel)
      : pad_(kernel / 2), conv_(params, name + ".conv", in, out, ConvGeometry{kernel, 1, 0}) {}

  Var<Scalar> operator()(const Var<Scalar>& x) const {
    return conv_(reflection_pad(leaky_relu(x, Scalar(kLeakySlope)), pad_));
  }

 private:
  Index pad_ = 0;
  Conv2d<Scalar> conv_;
};

/// 3x3 stride-2 convolution, instance norm, leaky rectifier.
template <typename Scalar>
class DownBlock {
 public:
  DownBlock() = default;
  DownBlock(ParameterList<Scalar>& params, const std::string& name, Index in, Index out)
      : conv_(params, name + ".conv", in, out, ConvGeometry{3, 2, 1}, false) {}

  Var<Scalar> operator()(const Var<Scalar>& x) const {
    if (x.shape().h % 2 != 0 || x.shape().w % 2 != 0) {
      throw ShapeError("down block needs even spatial dims, got " + x.shape().str());
    }
    return leaky_relu(instance_norm(conv_(x)), Scalar(kLeakySlope));
  }

 private:
  Conv2d<Scalar> conv_;
};

/// 3x3 stride-2 transposed convolution (output padding 1), instance norm, leaky rectifier.
template <typename Scalar>
class UpBlock {
 public:
  UpBlock() = default;
  UpBlock(ParameterList<Scalar>& params, const std::string& name, Index in, Index out)
      : conv_(params, name + ".conv", in, out, ConvGeometry{3, 2, 1}, 1, false) {}

  Var<Scalar> operator()(const Var<Scalar>& x) const {
    return leaky_relu(instance_norm(conv_(x)), Scalar(kLeakySlope));
  }

 private:
  ConvTranspose2d<Scalar> conv_;
};

template <typename Scalar>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(ParameterList<Scalar>& params, const std::string& name, Index channels)
      : conv1_(params, name + ".conv1", channels, channels, ConvGeometry{3, 1, 0}, false),
        conv2_(params, name + ".conv2", channels, channels, ConvGeometry{3, 1, 0}, false) {}

  Var<Scalar> operator()(const Var<Scalar>& x) const {
    auto h = leaky_relu(instance_norm(conv1_(reflection_pad(x, 1))), Scalar(kLeakySlope));
    h = instance_norm(conv2_(reflection_pad(h, 1)));
    return add(x, h);
  }

 private:
  Conv2d<Scalar> conv1_;
  Conv2d<Scalar> conv2_;
};

/// Additive attention gate on a skip connection.
///
/// mask = sigmoid(psi(lrelu(theta(skip) + phi(gate)))), one channel, broadcast
/// over the skip channels. Disabled gates pass the skip through untouched.
template <typename Scalar>
class AttentionGate {
 public:
  AttentionGate() = default;
  AttentionGate(ParameterList<Scalar>& params, const std::string& name, Index skip_channels, Index gate_channels,
                bool enabled)
      : enabled_(enabled), skip_channels_(skip_channels), gate_channels_(gate_channels) {
    if (!enabled) return;
    const Index inter = std::max<Index>(skip_channels / 2, 1);
    theta_ = Conv2d<Scalar>(params, name + ".theta", skip_channels, inter, ConvGeometry{1, 1, 0}, false);
    phi_ = Conv2d<Scalar>(params, name + ".phi", gate_channels, inter, ConvGeometry{1, 1, 0});
    psi_ = Conv2d<Scalar>(params, name + ".psi", inter, 1, ConvGeometry{1, 1, 0});
  }

  bool enabled() const { return enabled_; }

  /// Per-pixel mask in (0, 1), shape (N,1,H,W).
  Var<Scalar> mask(const Var<Scalar>& skip, const Var<Scalar>& gate) const {
    check(skip, gate);
    if (!enabled_) throw ShapeError("attention gate is disabled; no mask is defined");
    return sigmoid(psi_(leaky_relu(add(theta_(skip), phi_(gate)), Scalar(kLeakySlope))));
  }

  Var<Scalar> operator()(const Var<Scalar>& skip, const Var<Scalar>& gate) const {
    check(skip, gate);
    if (!enabled_) return skip;
    return mul_channel_broadcast(skip, mask(skip, gate));
  }

 private:
  void check(const Var<Scalar>& skip, const Var<Scalar>& gate) const {
    const Shape s = skip.shape();
    const Shape g = gate.shape();
    if (s.c != skip_channels_ || g.c != gate_channels_) {
      throw ShapeError("attention gate expects skip/gate channels " + std::to_string(skip_channels_) + "/" +
                       std::to_string(gate_channels_) + ", got " + s.str() + " and " + g.str());
    }
    if (s.n != g.n || s.h != g.h || s.w != g.w) {
      throw ShapeError("attention gate needs matching spatial dims: " + s.str() + " vs " + g.str());
    }
  }

  bool enabled_ = true;
  Index skip_channels_ = 0;
  Index gate_channels_ = 0;
  Conv2d<Scalar> theta_;
  Conv2d<Scalar> phi_;
  Conv2d<Scalar> psi_;
};

}  // namespace angio
