#include "angio/model/registration.hpp"

namespace angio {

void RegistrationConfig::validate() const {
  if (enc_blocks < 1) throw ShapeError("registration net needs at least one encoder block");
  if (dec_blocks != enc_blocks) throw ShapeError("registration net needs as many decoder as encoder blocks");
  if (base_channels < 1 || channel_cap < 1) throw ShapeError("registration channel widths must be >= 1");
  if (smoothness_weight < 0) throw ShapeError("smoothness_weight must be >= 0");
}

namespace {
constexpr ConvGeometry kSame3{3, 1, 1};
constexpr ConvGeometry kDown3{3, 2, 1};
}  // namespace

template <typename Scalar>
RegistrationNet<Scalar>::RegistrationNet(const RegistrationConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), params_(Rng::mix(seed ^ 0x9517ull)) {
  cfg_.validate();
  stem_ = Conv2d<Scalar>(params_, "stem", 2, cfg.channels_at(0), kSame3, true, Init::kHe);
  for (int i = 0; i < cfg.enc_blocks; ++i) {
    const std::string p = "enc" + std::to_string(i);
    const Index c = cfg.channels_at(i + 1);
    enc_down_.emplace_back(params_, p + ".down", cfg.channels_at(i), c, kDown3, true, Init::kHe);
    enc_res_.push_back({Conv2d<Scalar>(params_, p + ".res.a", c, c, kSame3, true, Init::kHe),
                        Conv2d<Scalar>(params_, p + ".res.b", c, c, kSame3, true, Init::kHe)});
  }
  for (int i = 0; i < cfg.dec_blocks; ++i) {
    const std::string p = "dec" + std::to_string(i);
    const Index c = cfg.channels_at(i);
    dec_up_.emplace_back(params_, p + ".up", cfg.channels_at(i + 1), c, kDown3, 1, true, Init::kHe);
    dec_res_.push_back({Conv2d<Scalar>(params_, p + ".res.a", c, c, kSame3, true, Init::kHe),
                        Conv2d<Scalar>(params_, p + ".res.b", c, c, kSame3, true, Init::kHe)});
  }
  head_ = Conv2d<Scalar>(params_, "head", cfg.channels_at(0), 2, kSame3, true, Init::kZero);
}

template <typename Scalar>
Var<Scalar> RegistrationNet<Scalar>::res(const Res& r, const Var<Scalar>& x) const {
  const Scalar s(kLeakySlope);
  return add(x, r.b(leaky_relu(r.a(x), s)));
}

template <typename Scalar>
Var<Scalar> RegistrationNet<Scalar>::forward(const Var<Scalar>& generated, const Var<Scalar>& target) const {
  const Shape gs = generated.shape();
  if (gs != target.shape() || gs.c != 1) {
    throw ShapeError("registration net needs matching single-channel images, got " + gs.str() + " and " +
                     target.shape().str());
  }
  const Index div = cfg_.required_divisor();
  if (gs.h % div != 0 || gs.w % div != 0) {
    throw ShapeError("registration net: spatial dims must be divisible by " + std::to_string(div));
  }
  const Scalar s(kLeakySlope);
  std::vector<Var<Scalar>> skips;
  auto h = leaky_relu(stem_(concat_channels(generated, target)), s);
  for (int i = 0; i < cfg_.enc_blocks; ++i) {
    skips.push_back(h);
    h = res(enc_res_[i], leaky_relu(enc_down_[i](h), s));
  }
  for (int i = cfg_.dec_blocks - 1; i >= 0; --i) {
    h = add(leaky_relu(dec_up_[i](h), s), skips[static_cast<size_t>(i)]);
    h = res(dec_res_[i], h);
  }
  return head_(h);
}

template <typename Scalar>
Var<Scalar> smoothness_penalty(const Var<Scalar>& field) {
  const Shape s = field.shape();
  if (s.c != 2) throw ShapeError("smoothness_penalty expects a (N,2,H,W) field, got " + s.str());
  const Index pairs = s.n * ((s.h - 1) * s.w + s.h * (s.w - 1));
  if (pairs == 0) return constant(Tensor<Scalar>::scalar(Scalar(0)));
  Var<Scalar> total;
  if (s.h > 1) {
    const auto dy = diff_y(field);
    total = sum(mul(dy, dy));
  }
  if (s.w > 1) {
    const auto dx = diff_x(field);
    const auto sx = sum(mul(dx, dx));
    total = total.defined() ? add(total, sx) : sx;
  }
  return scale(total, Scalar(1) / static_cast<Scalar>(pairs));
}

template class RegistrationNet<float>;
template class RegistrationNet<double>;
template Var<float> smoothness_penalty(const Var<float>&);
template Var<double> smoothness_penalty(const Var<double>&);

}  // namespace angio
