#include "angio/ops.hpp"

#include <algorithm>
#include <cmath>

namespace angio {
namespace {

template <typename Scalar>
void require_same(const Var<Scalar>& a, const Var<Scalar>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
}

template <typename Scalar>
Tensor<Scalar>& grad_of(Node<Scalar>& self, size_t parent) {
  return self.parents[parent]->grad_buffer();
}

template <typename Scalar>
bool wants(Node<Scalar>& self, size_t parent) {
  return self.parents[parent]->requires_grad;
}

// Unfolds one sample (C,H,W) into a (C*k*k, Ho*Wo) row-major matrix.
template <typename Scalar>
void im2col(const Scalar* x, Index channels, Index height, Index width, const ConvGeometry& g, Index out_h,
            Index out_w, Scalar* cols) {
  const Index k = g.kernel;
  const Index out_plane = out_h * out_w;
  for (Index c = 0; c < channels; ++c) {
    const Scalar* xc = x + c * height * width;
    for (Index ki = 0; ki < k; ++ki) {
      for (Index kj = 0; kj < k; ++kj) {
        Scalar* row = cols + ((c * k + ki) * k + kj) * out_plane;
        for (Index oy = 0; oy < out_h; ++oy) {
          const Index iy = oy * g.stride - g.padding + ki;
          Scalar* dst = row + oy * out_w;
          if (iy < 0 || iy >= height) {
            std::fill(dst, dst + out_w, Scalar(0));
            continue;
          }
          const Scalar* src = xc + iy * width;
          for (Index ox = 0; ox < out_w; ++ox) {
            const Index ix = ox * g.stride - g.padding + kj;
            dst[ox] = (ix >= 0 && ix < width) ? src[ix] : Scalar(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters-adds columns back into a (C,H,W) buffer.
template <typename Scalar>
void col2im(const Scalar* cols, Index channels, Index height, Index width, const ConvGeometry& g, Index out_h,
            Index out_w, Scalar* x) {
  const Index k = g.kernel;
  const Index out_plane = out_h * out_w;
  for (Index c = 0; c < channels; ++c) {
    Scalar* xc = x + c * height * width;
    for (Index ki = 0; ki < k; ++ki) {
      for (Index kj = 0; kj < k; ++kj) {
        const Scalar* row = cols + ((c * k + ki) * k + kj) * out_plane;
        for (Index oy = 0; oy < out_h; ++oy) {
          const Index iy = oy * g.stride - g.padding + ki;
          if (iy < 0 || iy >= height) continue;
          const Scalar* src = row + oy * out_w;
          Scalar* dst = xc + iy * width;
          for (Index ox = 0; ox < out_w; ++ox) {
            const Index ix = ox * g.stride - g.padding + kj;
            if (ix >= 0 && ix < width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename Scalar>
bool is_pointwise(const ConvGeometry& g) {
  return g.kernel == 1 && g.stride == 1 && g.padding == 0;
}

template <typename Scalar, typename Fwd, typename Deriv>
Var<Scalar> unary(const Var<Scalar>& x, Fwd fwd, Deriv deriv) {
  Tensor<Scalar> out(x.shape(), x.value().array().unaryExpr(fwd));
  return make_result<Scalar>(std::move(out), {x}, [deriv](Node<Scalar>& self) {
    const auto& in = self.parents[0]->value.array();
    grad_of(self, 0).array() += self.grad.array() * in.binaryExpr(self.value.array(), deriv);
  });
}

inline Index reflect(Index i, Index n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

}  // namespace

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same(a, b, "add");
  Tensor<Scalar> out(a.shape(), a.value().array() + b.value().array());
  return make_result<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& self) {
    if (wants(self, 0)) grad_of(self, 0).array() += self.grad.array();
    if (wants(self, 1)) grad_of(self, 1).array() += self.grad.array();
  });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same(a, b, "sub");
  Tensor<Scalar> out(a.shape(), a.value().array() - b.value().array());
  return make_result<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& self) {
    if (wants(self, 0)) grad_of(self, 0).array() += self.grad.array();
    if (wants(self, 1)) grad_of(self, 1).array() -= self.grad.array();
  });
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same(a, b, "mul");
  Tensor<Scalar> out(a.shape(), a.value().array() * b.value().array());
  return make_result<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& self) {
    if (wants(self, 0)) grad_of(self, 0).array() += self.grad.array() * self.parents[1]->value.array();
    if (wants(self, 1)) grad_of(self, 1).array() += self.grad.array() * self.parents[0]->value.array();
  });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar s) {
  Tensor<Scalar> out(a.shape(), a.value().array() * s);
  return make_result<Scalar>(std::move(out), {a},
                             [s](Node<Scalar>& self) { grad_of(self, 0).array() += self.grad.array() * s; });
}

template <typename Scalar>
Var<Scalar> add_scalar(const Var<Scalar>& a, Scalar s) {
  Tensor<Scalar> out(a.shape(), a.value().array() + s);
  return make_result<Scalar>(std::move(out), {a},
                             [](Node<Scalar>& self) { grad_of(self, 0).array() += self.grad.array(); });
}

template <typename Scalar>
Var<Scalar> mul_channel_broadcast(const Var<Scalar>& x, const Var<Scalar>& mask) {
  const Shape xs = x.shape();
  const Shape ms = mask.shape();
  if (ms.n != xs.n || ms.c != 1 || ms.h != xs.h || ms.w != xs.w) {
    throw ShapeError("mul_channel_broadcast: mask " + ms.str() + " incompatible with " + xs.str());
  }
  Tensor<Scalar> out(xs);
  for (Index n = 0; n < xs.n; ++n) {
    auto m = mask.value().plane(n, 0);
    for (Index c = 0; c < xs.c; ++c) out.plane(n, c).array() = x.value().plane(n, c).array() * m.array();
  }
  return make_result<Scalar>(std::move(out), {x, mask}, [xs](Node<Scalar>& self) {
    const auto& xv = self.parents[0]->value;
    const auto& mv = self.parents[1]->value;
    if (wants(self, 0)) {
      auto& gx = grad_of(self, 0);
      for (Index n = 0; n < xs.n; ++n)
        for (Index c = 0; c < xs.c; ++c)
          gx.plane(n, c).array() += self.grad.plane(n, c).array() * mv.plane(n, 0).array();
    }
    if (wants(self, 1)) {
      auto& gm = grad_of(self, 1);
      for (Index n = 0; n < xs.n; ++n)
        for (Index c = 0; c < xs.c; ++c)
          gm.plane(n, 0).array() += self.grad.plane(n, c).array() * xv.plane(n, c).array();
    }
  });
}

template <typename Scalar>
Var<Scalar> concat_channels(const Var<Scalar>& a, const Var<Scalar>& b) {
  const Shape as = a.shape();
  const Shape bs = b.shape();
  if (as.n != bs.n || as.h != bs.h || as.w != bs.w) {
    throw ShapeError("concat_channels: " + as.str() + " vs " + bs.str());
  }
  Tensor<Scalar> out(Shape{as.n, as.c + bs.c, as.h, as.w});
  const Index pa = as.c * as.plane();
  const Index pb = bs.c * bs.plane();
  for (Index n = 0; n < as.n; ++n) {
    std::copy_n(a.value().data() + n * pa, pa, out.data() + n * (pa + pb));
    std::copy_n(b.value().data() + n * pb, pb, out.data() + n * (pa + pb) + pa);
  }
  return make_result<Scalar>(std::move(out), {a, b}, [pa, pb, nn = as.n](Node<Scalar>& self) {
    const Scalar* g = self.grad.data();
    if (wants(self, 0)) {
      auto& ga = grad_of(self, 0);
      for (Index n = 0; n < nn; ++n)
        Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(ga.data() + n * pa, pa) +=
            Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(g + n * (pa + pb), pa);
    }
    if (wants(self, 1)) {
      auto& gb = grad_of(self, 1);
      for (Index n = 0; n < nn; ++n)
        Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(gb.data() + n * pb, pb) +=
            Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(g + n * (pa + pb) + pa, pb);
    }
  });
}

template <typename Scalar>
Var<Scalar> repeat_channels(const Var<Scalar>& x, Index copies) {
  const Shape s = x.shape();
  if (s.c != 1) throw ShapeError("repeat_channels expects a single channel, got " + s.str());
  Tensor<Scalar> out(Shape{s.n, copies, s.h, s.w});
  for (Index n = 0; n < s.n; ++n)
    for (Index c = 0; c < copies; ++c) out.plane(n, c) = x.value().plane(n, 0);
  return make_result<Scalar>(std::move(out), {x}, [s, copies](Node<Scalar>& self) {
    auto& g = grad_of(self, 0);
    for (Index n = 0; n < s.n; ++n)
      for (Index c = 0; c < copies; ++c) g.plane(n, 0) += self.grad.plane(n, c);
  });
}

template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& x, Scalar slope) {
  return unary(
      x, [slope](Scalar v) { return v > 0 ? v : v * slope; },
      [slope](Scalar in, Scalar) { return in > 0 ? Scalar(1) : slope; });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x) {
  return leaky_relu(x, Scalar(0));
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& x) {
  return unary(
      x, [](Scalar v) { return std::tanh(v); }, [](Scalar, Scalar out) { return Scalar(1) - out * out; });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  return unary(
      x,
      [](Scalar v) {
        if (v >= 0) return Scalar(1) / (Scalar(1) + std::exp(-v));
        const Scalar e = std::exp(v);
        return e / (Scalar(1) + e);
      },
      [](Scalar, Scalar out) { return out * (Scalar(1) - out); });
}

template <typename Scalar>
Var<Scalar> softplus(const Var<Scalar>& x) {
  return unary(
      x, [](Scalar v) { return std::max(v, Scalar(0)) + std::log1p(std::exp(-std::abs(v))); },
      [](Scalar in, Scalar) {
        if (in >= 0) return Scalar(1) / (Scalar(1) + std::exp(-in));
        const Scalar e = std::exp(in);
        return e / (Scalar(1) + e);
      });
}

template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias, ConvGeometry g) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.c != xs.c || ws.h != g.kernel || ws.w != g.kernel) {
    throw ShapeError("conv2d: weight " + ws.str() + " incompatible with input " + xs.str());
  }
  const Index out_h = g.output_extent(xs.h);
  const Index out_w = g.output_extent(xs.w);
  if (out_h <= 0 || out_w <= 0) throw ShapeError("conv2d: input " + xs.str() + " too small for kernel");
  const Index cout = ws.n;
  const Index patch = xs.c * g.kernel * g.kernel;
  const Index out_plane = out_h * out_w;
  const bool pointwise = is_pointwise<Scalar>(g);

  Tensor<Scalar> out(Shape{xs.n, cout, out_h, out_w});
  ConstMatrixMap<Scalar> wmat(weight.value().data(), cout, patch);
  RowMatrix<Scalar> cols(pointwise ? 0 : patch, pointwise ? 0 : out_plane);
  for (Index n = 0; n < xs.n; ++n) {
    auto y = out.sample_matrix(n);
    if (pointwise) {
      y.noalias() = wmat * x.value().sample_matrix(n);
    } else {
      im2col(x.value().data() + x.value().offset(n, 0, 0, 0), xs.c, xs.h, xs.w, g, out_h, out_w, cols.data());
      y.noalias() = wmat * cols;
    }
    if (bias.defined()) y.colwise() += bias.value().array().matrix();
  }

  std::vector<Var<Scalar>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<Scalar>(std::move(out), inputs, [=](Node<Scalar>& self) {
    const auto& xv = self.parents[0]->value;
    const auto& wv = self.parents[1]->value;
    ConstMatrixMap<Scalar> w(wv.data(), cout, patch);
    RowMatrix<Scalar> buf(pointwise ? 0 : patch, pointwise ? 0 : out_plane);
    const bool need_x = wants(self, 0);
    const bool need_w = wants(self, 1);
    const bool need_b = self.parents.size() > 2 && wants(self, 2);
    for (Index n = 0; n < xs.n; ++n) {
      auto gy = self.grad.sample_matrix(n);
      if (need_w) {
        MatrixMap<Scalar> gw(grad_of(self, 1).data(), cout, patch);
        if (pointwise) {
          gw.noalias() += gy * xv.sample_matrix(n).transpose();
        } else {
          im2col(xv.data() + xv.offset(n, 0, 0, 0), xs.c, xs.h, xs.w, g, out_h, out_w, buf.data());
          gw.noalias() += gy * buf.transpose();
        }
      }
      if (need_b) grad_of(self, 2).array() += gy.rowwise().sum().array();
      if (need_x) {
        auto& gx = grad_of(self, 0);
        if (pointwise) {
          gx.sample_matrix(n).noalias() += w.transpose() * gy;
        } else {
          buf.noalias() = w.transpose() * gy;
          col2im(buf.data(), xs.c, xs.h, xs.w, g, out_h, out_w, gx.data() + gx.offset(n, 0, 0, 0));
        }
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> conv_transpose2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias,
                             ConvGeometry g, Index output_padding) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.n != xs.c || ws.h != g.kernel || ws.w != g.kernel) {
    throw ShapeError("conv_transpose2d: weight " + ws.str() + " incompatible with input " + xs.str());
  }
  if (output_padding >= g.stride) throw ShapeError("conv_transpose2d: output_padding must be < stride");
  const Index out_h = (xs.h - 1) * g.stride - 2 * g.padding + g.kernel + output_padding;
  const Index out_w = (xs.w - 1) * g.stride - 2 * g.padding + g.kernel + output_padding;
  const Index cout = ws.c;
  const Index patch = cout * g.kernel * g.kernel;
  const Index in_plane = xs.plane();

  Tensor<Scalar> out(Shape{xs.n, cout, out_h, out_w});
  ConstMatrixMap<Scalar> wmat(weight.value().data(), xs.c, patch);
  RowMatrix<Scalar> cols(patch, in_plane);
  for (Index n = 0; n < xs.n; ++n) {
    cols.noalias() = wmat.transpose() * x.value().sample_matrix(n);
    col2im(cols.data(), cout, out_h, out_w, g, xs.h, xs.w, out.data() + out.offset(n, 0, 0, 0));
    if (bias.defined()) out.sample_matrix(n).colwise() += bias.value().array().matrix();
  }

  std::vector<Var<Scalar>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<Scalar>(std::move(out), inputs, [=](Node<Scalar>& self) {
    const auto& xv = self.parents[0]->value;
    const auto& wv = self.parents[1]->value;
    ConstMatrixMap<Scalar> w(wv.data(), xs.c, patch);
    RowMatrix<Scalar> dcols(patch, in_plane);
    const bool need_x = wants(self, 0);
    const bool need_w = wants(self, 1);
    const bool need_b = self.parents.size() > 2 && wants(self, 2);
    for (Index n = 0; n < xs.n; ++n) {
      im2col(self.grad.data() + self.grad.offset(n, 0, 0, 0), cout, out_h, out_w, g, xs.h, xs.w, dcols.data());
      if (need_x) grad_of(self, 0).sample_matrix(n).noalias() += w * dcols;
      if (need_w) {
        MatrixMap<Scalar> gw(grad_of(self, 1).data(), xs.c, patch);
        gw.noalias() += xv.sample_matrix(n) * dcols.transpose();
      }
      if (need_b) grad_of(self, 2).array() += self.grad.sample_matrix(n).rowwise().sum().array();
    }
  });
}

template <typename Scalar>
Var<Scalar> reflection_pad(const Var<Scalar>& x, Index pad) {
  const Shape s = x.shape();
  if (pad == 0) return x;
  if (pad >= s.h || pad >= s.w) throw ShapeError("reflection_pad: pad " + std::to_string(pad) + " for " + s.str());
  const Shape os{s.n, s.c, s.h + 2 * pad, s.w + 2 * pad};
  Tensor<Scalar> out(os);
  for (Index n = 0; n < s.n; ++n)
    for (Index c = 0; c < s.c; ++c)
      for (Index y = 0; y < os.h; ++y) {
        const Index sy = reflect(y - pad, s.h);
        for (Index xx = 0; xx < os.w; ++xx) out(n, c, y, xx) = x.value()(n, c, sy, reflect(xx - pad, s.w));
      }
  return make_result<Scalar>(std::move(out), {x}, [s, os, pad](Node<Scalar>& self) {
    auto& g = grad_of(self, 0);
    for (Index n = 0; n < s.n; ++n)
      for (Index c = 0; c < s.c; ++c)
        for (Index y = 0; y < os.h; ++y) {
          const Index sy = reflect(y - pad, s.h);
          for (Index xx = 0; xx < os.w; ++xx) g(n, c, sy, reflect(xx - pad, s.w)) += self.grad(n, c, y, xx);
        }
  });
}

template <typename Scalar>
Var<Scalar> instance_norm(const Var<Scalar>& x, Scalar eps) {
  const Shape s = x.shape();
  Tensor<Scalar> out(s);
  Eigen::Array<Scalar, Eigen::Dynamic, 1> inv_std(s.n * s.c);
  for (Index n = 0; n < s.n; ++n)
    for (Index c = 0; c < s.c; ++c) {
      auto p = x.value().plane(n, c).array();
      const Scalar mu = p.mean();
      const Scalar var = (p - mu).square().mean();
      const Scalar is = Scalar(1) / std::sqrt(var + eps);
      inv_std[n * s.c + c] = is;
      out.plane(n, c).array() = (p - mu) * is;
    }
  return make_result<Scalar>(std::move(out), {x}, [s, inv_std](Node<Scalar>& self) {
    auto& g = grad_of(self, 0);
    for (Index n = 0; n < s.n; ++n)
      for (Index c = 0; c < s.c; ++c) {
        auto gy = self.grad.plane(n, c).array();
        auto y = self.value.plane(n, c).array();
        const Scalar mg = gy.mean();
        const Scalar mgy = (gy * y).mean();
        g.plane(n, c).array() += inv_std[n * s.c + c] * (gy - mg - y * mgy);
      }
  });
}

template <typename Scalar>
Var<Scalar> avg_pool2(const Var<Scalar>& x) {
  const Shape s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) throw ShapeError("avg_pool2 requires even dims, got " + s.str());
  const Shape os{s.n, s.c, s.h / 2, s.w / 2};
  Tensor<Scalar> out(os);
  for (Index n = 0; n < s.n; ++n)
    for (Index c = 0; c < s.c; ++c) {
      auto in = x.value().plane(n, c);
      auto o = out.plane(n, c);
      for (Index y = 0; y < os.h; ++y)
        for (Index xx = 0; xx < os.w; ++xx)
          o(y, xx) = (in(2 * y, 2 * xx) + in(2 * y, 2 * xx + 1) + in(2 * y + 1, 2 * xx) + in(2 * y + 1, 2 * xx + 1)) *
                     Scalar(0.25);
    }
  return make_result<Scalar>(std::move(out), {x}, [s, os](Node<Scalar>& self) {
    auto& g = grad_of(self, 0);
    for (Index n = 0; n < s.n; ++n)
      for (Index c = 0; c < s.c; ++c) {
        auto gi = g.plane(n, c);
        auto go = self.grad.plane(n, c);
        for (Index y = 0; y < os.h; ++y)
          for (Index xx = 0; xx < os.w; ++xx) {
            const Scalar v = go(y, xx) * Scalar(0.25);
            gi(2 * y, 2 * xx) += v;
            gi(2 * y, 2 * xx + 1) += v;
            gi(2 * y + 1, 2 * xx) += v;
            gi(2 * y + 1, 2 * xx + 1) += v;
          }
      }
  });
}

template <typename Scalar>
Var<Scalar> max_pool2(const Var<Scalar>& x) {
  const Shape s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) throw ShapeError("max_pool2 requires even dims, got " + s.str());
  const Shape os{s.n, s.c, s.h / 2, s.w / 2};
  Tensor<Scalar> out(os);
  std::vector<Index> argmax(static_cast<size_t>(os.numel()));
  for (Index n = 0; n < s.n; ++n)
    for (Index c = 0; c < s.c; ++c)
      for (Index y = 0; y < os.h; ++y)
        for (Index xx = 0; xx < os.w; ++xx) {
          Index best = x.value().offset(n, c, 2 * y, 2 * xx);
          for (Index dy = 0; dy < 2; ++dy)
            for (Index dx = 0; dx < 2; ++dx) {
              const Index o = x.value().offset(n, c, 2 * y + dy, 2 * xx + dx);
              if (x.value().data()[o] > x.value().data()[best]) best = o;
            }
          const Index oo = out.offset(n, c, y, xx);
          argmax[static_cast<size_t>(oo)] = best;
          out.data()[oo] = x.value().data()[best];
        }
  return make_result<Scalar>(std::move(out), {x}, [argmax = std::move(argmax)](Node<Scalar>& self) {
    auto& g = grad_of(self, 0);
    for (size_t i = 0; i < argmax.size(); ++i) g.data()[argmax[i]] += self.grad.data()[i];
  });
}

template <typename Scalar>
Var<Scalar> global_avg_pool(const Var<Scalar>& x) {
  const Shape s = x.shape();
  Tensor<Scalar> out(Shape{s.n, s.c, 1, 1});
  for (Index n = 0; n < s.n; ++n)
    for (Index c = 0; c < s.c; ++c) out(n, c, 0, 0) = x.value().plane(n, c).mean();
  return make_result<Scalar>(std::move(out), {x}, [s](Node<Scalar>& self) {
    auto& g = grad_of(self, 0);
    const Scalar inv = Scalar(1) / static_cast<Scalar>(s.plane());
    for (Index n = 0; n < s.n; ++n)
      for (Index c = 0; c < s.c; ++c) g.plane(n, c).array() += self.grad(n, c, 0, 0) * inv;
  });
}

template <typename Scalar>
Var<Scalar> warp(const Var<Scalar>& img, const Var<Scalar>& field) {
  const Shape s = img.shape();
  const Shape fs = field.shape();
  if (fs.n != s.n || fs.c != 2 || fs.h != s.h || fs.w != s.w) {
    throw ShapeError("warp: field " + fs.str() + " incompatible with image " + s.str());
  }
  if (!field.value().all_finite()) throw InputError("warp: non-finite displacement field");

  struct Sample {
    Index y0, y1, x0, x1;
    Scalar a, b;
    bool y_free, x_free;  // false when the coordinate was clamped (zero derivative)
  };
  std::vector<Sample> samples(static_cast<size_t>(s.n * s.plane()));
  const Scalar ymax = static_cast<Scalar>(s.h - 1);
  const Scalar xmax = static_cast<Scalar>(s.w - 1);
  for (Index n = 0; n < s.n; ++n)
    for (Index y = 0; y < s.h; ++y)
      for (Index x = 0; x < s.w; ++x) {
        Scalar sy = static_cast<Scalar>(y) + field.value()(n, 0, y, x);
        Scalar sx = static_cast<Scalar>(x) + field.value()(n, 1, y, x);
        Sample smp{};
        smp.y_free = sy >= 0 && sy <= ymax;
        smp.x_free = sx >= 0 && sx <= xmax;
        sy = std::clamp(sy, Scalar(0), ymax);
        sx = std::clamp(sx, Scalar(0), xmax);
        smp.y0 = static_cast<Index>(std::floor(sy));
        smp.x0 = static_cast<Index>(std::floor(sx));
        smp.y1 = std::min(smp.y0 + 1, s.h - 1);
        smp.x1 = std::min(smp.x0 + 1, s.w - 1);
        smp.a = sy - static_cast<Scalar>(smp.y0);
        smp.b = sx - static_cast<Scalar>(smp.x0);
        samples[static_cast<size_t>((n * s.h + y) * s.w + x)] = smp;
      }

  Tensor<Scalar> out(s);
  for (Index n = 0; n < s.n; ++n)
    for (Index c = 0; c < s.c; ++c) {
      auto in = img.value().plane(n, c);
      auto o = out.plane(n, c);
      for (Index y = 0; y < s.h; ++y)
        for (Index x = 0; x < s.w; ++x) {
          const Sample& p = samples[static_cast<size_t>((n * s.h + y) * s.w + x)];
          const Scalar top = in(p.y0, p.x0) + p.b * (in(p.y0, p.x1) - in(p.y0, p.x0));
          const Scalar bot = in(p.y1, p.x0) + p.b * (in(p.y1, p.x1) - in(p.y1, p.x0));
          o(y, x) = top + p.a * (bot - top);
        }
    }

  return make_result<Scalar>(std::move(out), {img, field}, [s, samples = std::move(samples)](Node<Scalar>& self) {
    const auto& iv = self.parents[0]->value;
    const bool need_img = wants(self, 0);
    const bool need_field = wants(self, 1);
    for (Index n = 0; n < s.n; ++n)
      for (Index y = 0; y < s.h; ++y)
        for (Index x = 0; x < s.w; ++x) {
          const Sample& p = samples[static_cast<size_t>((n * s.h + y) * s.w + x)];
          Scalar gdy = 0;
          Scalar gdx = 0;
          for (Index c = 0; c < s.c; ++c) {
            const Scalar go = self.grad(n, c, y, x);
            if (go == Scalar(0)) continue;
            if (need_img) {
              auto gi = grad_of(self, 0).plane(n, c);
              gi(p.y0, p.x0) += go * (1 - p.a) * (1 - p.b);
              gi(p.y0, p.x1) += go * (1 - p.a) * p.b;
              gi(p.y1, p.x0) += go * p.a * (1 - p.b);
              gi(p.y1, p.x1) += go * p.a * p.b;
            }
            if (need_field) {
              auto in = iv.plane(n, c);
              const Scalar v00 = in(p.y0, p.x0), v01 = in(p.y0, p.x1);
              const Scalar v10 = in(p.y1, p.x0), v11 = in(p.y1, p.x1);
              const Scalar top = v00 + p.b * (v01 - v00);
              const Scalar bot = v10 + p.b * (v11 - v10);
              if (p.y_free) gdy += go * (bot - top);
              if (p.x_free) gdx += go * ((1 - p.a) * (v01 - v00) + p.a * (v11 - v10));
            }
          }
          if (need_field) {
            auto& gf = grad_of(self, 1);
            gf(n, 0, y, x) += gdy;
            gf(n, 1, y, x) += gdx;
          }
        }
  });
}

template <typename Scalar>
Var<Scalar> diff_y(const Var<Scalar>& x) {
  const Shape s = x.shape();
  if (s.h < 2) throw ShapeError("diff_y needs H >= 2");
  Tensor<Scalar> out(Shape{s.n, s.c, s.h - 1, s.w});
  for (Index n = 0; n < s.n; ++n)
    for (Index c = 0; c < s.c; ++c) {
      auto p = x.value().plane(n, c);
      out.plane(n, c) = p.bottomRows(s.h - 1) - p.topRows(s.h - 1);
    }
  return make_result<Scalar>(std::move(out), {x}, [s](Node<Scalar>& self) {
    auto& g = grad_of(self, 0);
    for (Index n = 0; n < s.n; ++n)
      for (Index c = 0; c < s.c; ++c) {
        auto gp = g.plane(n, c);
        auto go = self.grad.plane(n, c);
        gp.bottomRows(s.h - 1) += go;
        gp.topRows(s.h - 1) -= go;
      }
  });
}

template <typename Scalar>
Var<Scalar> diff_x(const Var<Scalar>& x) {
  const Shape s = x.shape();
  if (s.w < 2) throw ShapeError("diff_x needs W >= 2");
  Tensor<Scalar> out(Shape{s.n, s.c, s.h, s.w - 1});
  for (Index n = 0; n < s.n; ++n)
    for (Index c = 0; c < s.c; ++c) {
      auto p = x.value().plane(n, c);
      out.plane(n, c) = p.rightCols(s.w - 1) - p.leftCols(s.w - 1);
    }
  return make_result<Scalar>(std::move(out), {x}, [s](Node<Scalar>& self) {
    auto& g = grad_of(self, 0);
    for (Index n = 0; n < s.n; ++n)
      for (Index c = 0; c < s.c; ++c) {
        auto gp = g.plane(n, c);
        auto go = self.grad.plane(n, c);
        gp.rightCols(s.w - 1) += go;
        gp.leftCols(s.w - 1) -= go;
      }
  });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  return make_result<Scalar>(Tensor<Scalar>::scalar(x.value().array().sum()), {x}, [](Node<Scalar>& self) {
    grad_of(self, 0).array() += self.grad.item();
  });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x) {
  const Scalar inv = Scalar(1) / static_cast<Scalar>(x.value().size());
  return make_result<Scalar>(Tensor<Scalar>::scalar(x.value().array().mean()), {x}, [inv](Node<Scalar>& self) {
    grad_of(self, 0).array() += self.grad.item() * inv;
  });
}

template <typename Scalar>
Var<Scalar> mean_square(const Var<Scalar>& x) {
  const Scalar inv = Scalar(1) / static_cast<Scalar>(x.value().size());
  return make_result<Scalar>(Tensor<Scalar>::scalar(x.value().array().square().mean()), {x},
                             [inv](Node<Scalar>& self) {
                               grad_of(self, 0).array() +=
                                   self.grad.item() * Scalar(2) * inv * self.parents[0]->value.array();
                             });
}

template <typename Scalar>
Var<Scalar> l1_mean(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same(a, b, "l1_mean");
  const Scalar inv = Scalar(1) / static_cast<Scalar>(a.value().size());
  const Scalar v = (a.value().array() - b.value().array()).abs().mean();
  return make_result<Scalar>(Tensor<Scalar>::scalar(v), {a, b}, [inv](Node<Scalar>& self) {
    const auto d = (self.parents[0]->value.array() - self.parents[1]->value.array()).sign() * (self.grad.item() * inv);
    if (wants(self, 0)) grad_of(self, 0).array() += d;
    if (wants(self, 1)) grad_of(self, 1).array() -= d;
  });
}

#define ANGIO_INSTANTIATE_OPS(S)                                                                           \
  template Var<S> add(const Var<S>&, const Var<S>&);                                                       \
  template Var<S> sub(const Var<S>&, const Var<S>&);                                                       \
  template Var<S> mul(const Var<S>&, const Var<S>&);                                                       \
  template Var<S> scale(const Var<S>&, S);                                                                 \
  template Var<S> add_scalar(const Var<S>&, S);                                                            \
  template Var<S> mul_channel_broadcast(const Var<S>&, const Var<S>&);                                     \
  template Var<S> concat_channels(const Var<S>&, const Var<S>&);                                           \
  template Var<S> repeat_channels(const Var<S>&, Index);                                                   \
  template Var<S> leaky_relu(const Var<S>&, S);                                                            \
  template Var<S> relu(const Var<S>&);                                                                     \
  template Var<S> tanh(const Var<S>&);                                                                     \
  template Var<S> sigmoid(const Var<S>&);                                                                  \
  template Var<S> softplus(const Var<S>&);                                                                 \
  template Var<S> conv2d(const Var<S>&, const Var<S>&, const Var<S>&, ConvGeometry);                       \
  template Var<S> conv_transpose2d(const Var<S>&, const Var<S>&, const Var<S>&, ConvGeometry, Index);      \
  template Var<S> reflection_pad(const Var<S>&, Index);                                                    \
  template Var<S> instance_norm(const Var<S>&, S);                                                         \
  template Var<S> avg_pool2(const Var<S>&);                                                                \
  template Var<S> max_pool2(const Var<S>&);                                                                \
  template Var<S> global_avg_pool(const Var<S>&);                                                          \
  template Var<S> warp(const Var<S>&, const Var<S>&);                                                      \
  template Var<S> diff_y(const Var<S>&);                                                                   \
  template Var<S> diff_x(const Var<S>&);                                                                   \
  template Var<S> sum(const Var<S>&);                                                                      \
  template Var<S> mean(const Var<S>&);                                                                     \
  template Var<S> mean_square(const Var<S>&);                                                              \
  template Var<S> l1_mean(const Var<S>&, const Var<S>&);

ANGIO_INSTANTIATE_OPS(float)
ANGIO_INSTANTIATE_OPS(double)

}  // namespace angio
