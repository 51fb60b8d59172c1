#include "angio/model/generators.hpp"

namespace angio {

Shape block_output_shape(BlockKind kind, const Shape& in, Index out_channels) {
  switch (kind) {
    case BlockKind::kInitial:
      return {in.n, out_channels, in.h, in.w};
    case BlockKind::kDown:
      if (in.h % 2 != 0 || in.w % 2 != 0) throw ShapeError("down block on odd dims " + in.str());
      return {in.n, out_channels, in.h / 2, in.w / 2};
    case BlockKind::kUp:
      return {in.n, out_channels, in.h * 2, in.w * 2};
    case BlockKind::kResidual:
      if (out_channels != in.c) throw ShapeError("residual block preserves channels");
      return in;
  }
  throw ShapeError("unknown block kind");
}

void GeneratorConfig::validate() const {
  if (base_channels < 1) throw ShapeError("base_channels must be >= 1");
  if (coarse_downs < 1) throw ShapeError("coarse generator needs at least one downsample");
  // The hand-off joins the fine decoder at half resolution, which needs two fine levels.
  if (fine_downs < 2) throw ShapeError("fine generator needs at least two downsamples");
  if (coarse_res_blocks < 0 || fine_res_blocks < 0) throw ShapeError("residual block counts must be >= 0");
  if (initial_kernel % 2 != 1 || head_kernel % 2 != 1) throw ShapeError("initial/head kernels must be odd");
  if (channel_cap < 1) throw ShapeError("channel_cap must be >= 1");
}

namespace {

void check_divisible(const Shape& s, Index divisor, const char* who) {
  if (s.h % divisor != 0 || s.w % divisor != 0) {
    throw ShapeError(std::string(who) + ": spatial dims " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " must be divisible by " + std::to_string(divisor));
  }
}

}  // namespace

GeneratorShapes generator_shapes(const GeneratorConfig& cfg, const Shape& condition) {
  cfg.validate();
  check_divisible(condition, cfg.required_divisor(), "generator");
  GeneratorShapes s;
  s.coarse_input = {condition.n, condition.c, condition.h / 2, condition.w / 2};
  Shape h = block_output_shape(BlockKind::kInitial, s.coarse_input, cfg.channels_at(0));
  for (int i = 0; i < cfg.coarse_downs; ++i) h = block_output_shape(BlockKind::kDown, h, cfg.channels_at(i + 1));
  s.coarse_bottleneck = h;
  for (int i = 0; i < cfg.coarse_res_blocks; ++i) h = block_output_shape(BlockKind::kResidual, h, h.c);
  for (int i = cfg.coarse_downs; i > 0; --i) h = block_output_shape(BlockKind::kUp, h, cfg.channels_at(i - 1));
  s.handoff = h;
  s.coarse_image = {h.n, cfg.out_channels, h.h, h.w};

  h = block_output_shape(BlockKind::kInitial, condition, cfg.channels_at(0));
  for (int i = 0; i < cfg.fine_downs; ++i) h = block_output_shape(BlockKind::kDown, h, cfg.channels_at(i + 1));
  s.fine_bottleneck = h;
  for (int i = cfg.fine_downs; i > 0; --i) h = block_output_shape(BlockKind::kUp, h, cfg.channels_at(i - 1));
  s.fine_image = {h.n, cfg.out_channels, h.h, h.w};
  return s;
}

template <typename Scalar>
CoarseGenerator<Scalar>::CoarseGenerator(const GeneratorConfig& cfg, ParameterList<Scalar>& params) : cfg_(cfg) {
  cfg_.validate();
  initial_ = InitialBlock<Scalar>(params, "initial", cfg.in_channels, cfg.channels_at(0), cfg.initial_kernel);
  for (int i = 0; i < cfg.coarse_downs; ++i) {
    downs_.emplace_back(params, "down" + std::to_string(i), cfg.channels_at(i), cfg.channels_at(i + 1));
  }
  const Index bottleneck = cfg.channels_at(cfg.coarse_downs);
  for (int i = 0; i < cfg.coarse_res_blocks; ++i) res_.emplace_back(params, "res" + std::to_string(i), bottleneck);
  for (int i = cfg.coarse_downs; i > 0; --i) {
    ups_.emplace_back(params, "up" + std::to_string(i - 1), cfg.channels_at(i), cfg.channels_at(i - 1));
  }
  head_ = Conv2d<Scalar>(params, "head", cfg.channels_at(0), cfg.out_channels, ConvGeometry{cfg.head_kernel, 1, 0});
}

template <typename Scalar>
CoarseOutput<Scalar> CoarseGenerator<Scalar>::forward(const Var<Scalar>& x_half) const {
  check_divisible(x_half.shape(), Index{1} << cfg_.coarse_downs, "coarse generator");
  if (x_half.shape().c != cfg_.in_channels) throw ShapeError("coarse generator: wrong input channels");
  auto h = initial_(x_half);
  for (const auto& d : downs_) h = d(h);
  CoarseOutput<Scalar> out;
  out.bottleneck = h.shape();
  for (const auto& r : res_) h = r(h);
  for (const auto& u : ups_) h = u(h);
  out.handoff = h;
  out.image = tanh(head_(reflection_pad(h, cfg_.head_kernel / 2)));
  return out;
}

template <typename Scalar>
FineGenerator<Scalar>::FineGenerator(const GeneratorConfig& cfg, ParameterList<Scalar>& params) : cfg_(cfg) {
  cfg_.validate();
  const int depth = cfg.fine_downs;
  initial_ = InitialBlock<Scalar>(params, "initial", cfg.in_channels, cfg.channels_at(0), cfg.initial_kernel);
  for (int i = 0; i < depth; ++i) {
    downs_.emplace_back(params, "down" + std::to_string(i), cfg.channels_at(i), cfg.channels_at(i + 1));
  }
  const Index bottleneck = cfg.channels_at(depth);
  for (int i = 0; i < cfg.fine_res_blocks; ++i) res_.emplace_back(params, "res" + std::to_string(i), bottleneck);

  ups_.resize(static_cast<size_t>(depth));
  gates_.resize(static_cast<size_t>(depth));
  for (int level = depth - 1; level >= 0; --level) {
    // The deepest up block reads the bottleneck; shallower ones read [decoder, gated skip].
    const Index in = level == depth - 1 ? bottleneck : 2 * cfg.channels_at(level + 1);
    ups_[static_cast<size_t>(level)] =
        UpBlock<Scalar>(params, "up" + std::to_string(level), in, cfg.channels_at(level));
    gates_[static_cast<size_t>(level)] =
        AttentionGate<Scalar>(params, "gate" + std::to_string(level), cfg.channels_at(level),
                              cfg.channels_at(level), cfg.attention_enabled);
  }
  handoff_proj_ =
      Conv2d<Scalar>(params, "handoff_proj", cfg.channels_at(0), cfg.channels_at(1), ConvGeometry{1, 1, 0}, false);
  head_ = Conv2d<Scalar>(params, "head", 2 * cfg.channels_at(0), cfg.out_channels, ConvGeometry{cfg.head_kernel, 1, 0});
}

template <typename Scalar>
Var<Scalar> FineGenerator<Scalar>::forward(const Var<Scalar>& x_full, const Var<Scalar>& handoff,
                                           FineTrace<Scalar>* trace) const {
  const Shape xs = x_full.shape();
  check_divisible(xs, Index{1} << cfg_.fine_downs, "fine generator");
  if (xs.c != cfg_.in_channels) throw ShapeError("fine generator: wrong input channels");
  const Shape hs = handoff.shape();
  if (hs.n != xs.n || hs.c != cfg_.channels_at(0) || hs.h * 2 != xs.h || hs.w * 2 != xs.w) {
    throw ShapeError("fine generator: hand-off " + hs.str() + " must be (N, " + std::to_string(cfg_.channels_at(0)) +
                     ", H/2, W/2) for input " + xs.str());
  }

  std::vector<Var<Scalar>> skips;
  auto h = initial_(x_full);
  for (const auto& d : downs_) {
    skips.push_back(h);
    h = d(h);
  }
  if (trace) trace->bottleneck = h.shape();
  for (const auto& r : res_) h = r(h);

  const int depth = cfg_.fine_downs;
  for (int level = depth - 1; level >= 0; --level) {
    h = ups_[static_cast<size_t>(level)](h);
    if (level == 1) h = add(h, handoff_proj_(handoff));
    const auto& gate = gates_[static_cast<size_t>(level)];
    const auto& skip = skips[static_cast<size_t>(level)];
    if (trace && gate.enabled()) trace->attention_masks.push_back(gate.mask(skip, h));
    h = concat_channels(h, gate(skip, h));
  }
  return tanh(head_(reflection_pad(h, cfg_.head_kernel / 2)));
}

template <typename Scalar>
Generator<Scalar>::Generator(const GeneratorConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), coarse_params_(Rng::mix(seed ^ 0xc0a75eull)), fine_params_(Rng::mix(seed ^ 0xf17eull)) {
  coarse_.emplace(cfg_, coarse_params_);
  fine_.emplace(cfg_, fine_params_);
}

template <typename Scalar>
GeneratorOutput<Scalar> Generator<Scalar>::forward(const Var<Scalar>& condition) const {
  check_divisible(condition.shape(), cfg_.required_divisor(), "generator");
  const auto half = avg_pool2(condition);
  auto coarse = coarse_->forward(half);
  GeneratorOutput<Scalar> out;
  out.coarse_image = coarse.image;
  out.handoff = coarse.handoff;
  out.fine_image = fine_->forward(condition, coarse.handoff);
  return out;
}

template class CoarseGenerator<float>;
template class CoarseGenerator<double>;
template class FineGenerator<float>;
template class FineGenerator<double>;
template class Generator<float>;
template class Generator<double>;

}  // namespace angio
