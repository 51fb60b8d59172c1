#pragma once

#include "angio/model/blocks.hpp"

#include <optional>
#include <vector>

namespace angio {

struct GeneratorConfig {
  Index base_channels = 64;
  int coarse_downs = 3;
  int fine_downs = 2;
  int coarse_res_blocks = 6;
  int fine_res_blocks = 3;
  bool attention_enabled = true;
  Index in_channels = 3;
  Index out_channels = 1;
  Index initial_kernel = 1;
  Index head_kernel = 7;
  Index channel_cap = 8;  // multiple of base_channels

  /// Feature width after `level` downsamples.
  Index channels_at(int level) const {
    return std::min(base_channels << level, base_channels * channel_cap);
  }
  /// Full-resolution dims must be divisible by this (coarse path runs at half size).
  Index required_divisor() const { return Index{1} << (std::max(coarse_downs + 1, fine_downs)); }
  void validate() const;
};

/// Tensor shapes of a generator pass, derived from the block recurrences without running it.
struct GeneratorShapes {
  Shape coarse_input;
  Shape coarse_bottleneck;
  Shape handoff;
  Shape coarse_image;
  Shape fine_bottleneck;
  Shape fine_image;
};

GeneratorShapes generator_shapes(const GeneratorConfig& cfg, const Shape& condition);

/// Debug taps of a fine-generator forward pass.
template <typename Scalar>
struct FineTrace {
  Shape bottleneck;
  std::vector<Var<Scalar>> attention_masks;
};

template <typename Scalar>
struct CoarseOutput {
  Var<Scalar> image;    // (N, out, H/2, W/2), tanh range
  Var<Scalar> handoff;  // (N, base_channels, H/2, W/2)
  Shape bottleneck;
};

/// Global-structure generator operating on the half-resolution condition.
template <typename Scalar>
class CoarseGenerator {
 public:
  CoarseGenerator(const GeneratorConfig& cfg, ParameterList<Scalar>& params);

  CoarseOutput<Scalar> forward(const Var<Scalar>& x_half) const;

 private:
  GeneratorConfig cfg_;
  InitialBlock<Scalar> initial_;
  std::vector<DownBlock<Scalar>> downs_;
  std::vector<ResidualBlock<Scalar>> res_;
  std::vector<UpBlock<Scalar>> ups_;
  Conv2d<Scalar> head_;
};

/// Local-detail generator at full resolution with gated skips and the coarse hand-off.
///
/// The hand-off is projected by a bias-free 1x1 convolution and added to the
/// decoder features at half resolution, i.e. the input of the last upsample.
template <typename Scalar>
class FineGenerator {
 public:
  FineGenerator(const GeneratorConfig& cfg, ParameterList<Scalar>& params);

  Var<Scalar> forward(const Var<Scalar>& x_full, const Var<Scalar>& handoff, FineTrace<Scalar>* trace = nullptr) const;

 private:
  GeneratorConfig cfg_;
  InitialBlock<Scalar> initial_;
  std::vector<DownBlock<Scalar>> downs_;
  std::vector<ResidualBlock<Scalar>> res_;
  std::vector<UpBlock<Scalar>> ups_;            // ups_[i] produces level i
  std::vector<AttentionGate<Scalar>> gates_;    // gates_[i] gates encoder level i
  Conv2d<Scalar> handoff_proj_;
  Conv2d<Scalar> head_;
};

template <typename Scalar>
struct GeneratorOutput {
  Var<Scalar> coarse_image;
  Var<Scalar> fine_image;
  Var<Scalar> handoff;
};

/// The coarse/fine pair with its two parameter groups.
template <typename Scalar>
class Generator {
 public:
  Generator(const GeneratorConfig& cfg, std::uint64_t seed);
  Generator(const Generator&) = delete;
  Generator& operator=(const Generator&) = delete;

  /// Condition in [-1,1], (N, in_channels, H, W); H, W divisible by required_divisor().
  GeneratorOutput<Scalar> forward(const Var<Scalar>& condition) const;

  const GeneratorConfig& config() const { return cfg_; }
  ParameterList<Scalar>& coarse_params() { return coarse_params_; }
  ParameterList<Scalar>& fine_params() { return fine_params_; }
  const ParameterList<Scalar>& coarse_params() const { return coarse_params_; }
  const ParameterList<Scalar>& fine_params() const { return fine_params_; }
  const CoarseGenerator<Scalar>& coarse() const { return *coarse_; }
  const FineGenerator<Scalar>& fine() const { return *fine_; }

 private:
  GeneratorConfig cfg_;
  ParameterList<Scalar> coarse_params_;
  ParameterList<Scalar> fine_params_;
  std::optional<CoarseGenerator<Scalar>> coarse_;
  std::optional<FineGenerator<Scalar>> fine_;
};

extern template class CoarseGenerator<float>;
extern template class CoarseGenerator<double>;
extern template class FineGenerator<float>;
extern template class FineGenerator<double>;
extern template class Generator<float>;
extern template class Generator<double>;

}  // namespace angio
