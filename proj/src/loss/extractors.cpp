#include "angio/loss/extractors.hpp"
#include "angio/io/container.hpp"

#include <cstdlib>
#include <filesystem>

namespace angio {

std::string asset_dir_from_env() {
  const char* v = std::getenv(kAssetDirEnv);
  return v ? std::string(v) : std::string();
}

template <typename Scalar>
SurrogateExtractor<Scalar>::SurrogateExtractor(std::uint64_t seed, std::vector<Index> widths)
    : widths_(std::move(widths)), params_(seed) {
  if (widths_.empty()) throw ShapeError("surrogate extractor needs at least one layer");
  Index in = 3;
  for (size_t i = 0; i < widths_.size(); ++i) {
    convs_.emplace_back(params_, "conv" + std::to_string(i), in, widths_[i], ConvGeometry{3, 1, 1}, true, Init::kHe);
    in = widths_[i];
  }
  params_.set_trainable(false);
}

template <typename Scalar>
std::vector<Var<Scalar>> SurrogateExtractor<Scalar>::taps(const Var<Scalar>& image) const {
  if (image.shape().c != 1) throw ShapeError("extractor expects single-channel images, got " + image.shape().str());
  std::vector<Var<Scalar>> out;
  auto h = repeat_channels(image, 3);
  for (size_t i = 0; i < convs_.size(); ++i) {
    if (i > 0) {
      if (h.shape().h % 2 != 0 || h.shape().w % 2 != 0) break;
      h = avg_pool2(h);
    }
    h = leaky_relu(convs_[i](h), Scalar(kLeakySlope));
    out.push_back(h);
  }
  return out;
}

namespace {

// Torchvision layout of vgg19.features: conv widths with 'M' for max pooling.
constexpr int kVggCfg[] = {64, 64, -1, 128, 128, -1, 256, 256, 256, 256, -1, 512, 512, 512, 512, -1,
                           512, 512, 512, 512, -1};
// Conv ordinal (0-based) whose activation is tapped: relu1_1, relu2_1, relu3_1, relu4_1, relu5_1.
constexpr int kVggTaps[] = {0, 2, 4, 8, 12};
constexpr double kImagenetMean[3] = {0.485, 0.456, 0.406};
constexpr double kImagenetStd[3] = {0.229, 0.224, 0.225};

template <typename Scalar>
Var<Scalar> load_leaf(const TensorFile& f, const std::string& name, const Shape& shape) {
  const auto& t = f.get(name);
  if (t.data.size() != shape.numel()) throw LoadError("vgg19 asset: '" + name + "' has wrong size");
  Tensor<Scalar> v(shape, t.data.cast<Scalar>());
  return Var<Scalar>(std::move(v), false);
}

// Bilinear resize with half-pixel centers (align_corners = false), constant tensors only.
template <typename Scalar>
Tensor<Scalar> resize_bilinear(const Tensor<Scalar>& x, Index oh, Index ow) {
  Tensor<Scalar> out(Shape{x.n(), x.c(), oh, ow});
  const double sy = static_cast<double>(x.h()) / oh, sx = static_cast<double>(x.w()) / ow;
  for (Index n = 0; n < x.n(); ++n)
    for (Index c = 0; c < x.c(); ++c)
      for (Index y = 0; y < oh; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(x.h() - 1));
        const Index y0 = static_cast<Index>(fy), y1 = std::min(y0 + 1, x.h() - 1);
        const double ay = fy - y0;
        for (Index xx = 0; xx < ow; ++xx) {
          const double fx = std::clamp((xx + 0.5) * sx - 0.5, 0.0, static_cast<double>(x.w() - 1));
          const Index x0 = static_cast<Index>(fx), x1 = std::min(x0 + 1, x.w() - 1);
          const double ax = fx - x0;
          const double top = x(n, c, y0, x0) * (1 - ax) + x(n, c, y0, x1) * ax;
          const double bot = x(n, c, y1, x0) * (1 - ax) + x(n, c, y1, x1) * ax;
          out(n, c, y, xx) = static_cast<Scalar>(top * (1 - ay) + bot * ay);
        }
      }
  return out;
}

}  // namespace

template <typename Scalar>
Vgg19Extractor<Scalar>::Vgg19Extractor(const std::string& asset_dir) {
  const auto path = std::filesystem::path(asset_dir) / kVgg19AssetName;
  if (asset_dir.empty() || !std::filesystem::exists(path)) {
    throw DependencyError(std::string("pretrained VGG19 weights not found; set ") + kAssetDirEnv +
                          " to a directory containing " + kVgg19AssetName + " (see tools/export_vgg19.py)");
  }
  const TensorFile f = read_tensor_file(path.string());
  Index in = 3;
  int layer = 0, block = 0;
  for (int c : kVggCfg) {
    if (c < 0) {
      ++layer;
      ++block;
      continue;
    }
    const std::string p = "features." + std::to_string(layer);
    Conv2d<Scalar> conv;
    // Build through a throwaway list to get the right geometry, then swap in the pretrained leaves.
    ParameterList<Scalar> scratch;
    conv = Conv2d<Scalar>(scratch, p, in, c, ConvGeometry{3, 1, 1});
    auto w = load_leaf<Scalar>(f, p + ".weight", Shape{c, in, 3, 3});
    auto b = load_leaf<Scalar>(f, p + ".bias", Shape{1, c, 1, 1});
    conv.weight().node()->value = w.value();
    conv.bias().node()->value = b.value();
    conv.weight().node()->requires_grad = false;
    conv.bias().node()->requires_grad = false;
    convs_.push_back(conv);
    block_of_.push_back(block);
    in = c;
    layer += 2;  // conv + relu
  }
  for (int idx : {0, 3, 6}) {
    const std::string p = "classifier." + std::to_string(idx);
    const auto* w = f.find(p + ".weight");
    const auto* b = f.find(p + ".bias");
    if (!w || !b) {
      fc_.clear();
      fc_bias_.clear();
      break;
    }
    fc_.push_back(Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                      w->data.data(), w->shape[0], w->shape[1])
                      .template cast<Scalar>());
    fc_bias_.push_back(b->data.matrix().template cast<Scalar>());
  }
}

template <typename Scalar>
Var<Scalar> Vgg19Extractor<Scalar>::normalize(const Var<Scalar>& image) const {
  if (image.shape().c != 1) throw ShapeError("extractor expects single-channel images, got " + image.shape().str());
  // [-1,1] -> [0,1] -> ImageNet statistics, per channel.
  const Shape s = image.shape();
  Tensor<Scalar> a(Shape{s.n, 3, s.h, s.w}), b(Shape{s.n, 3, s.h, s.w});
  for (Index n = 0; n < s.n; ++n)
    for (Index c = 0; c < 3; ++c) {
      a.plane(n, c).setConstant(static_cast<Scalar>(0.5 / kImagenetStd[c]));
      b.plane(n, c).setConstant(static_cast<Scalar>((0.5 - kImagenetMean[c]) / kImagenetStd[c]));
    }
  return add(mul(repeat_channels(image, 3), constant(std::move(a))), constant(std::move(b)));
}

template <typename Scalar>
std::vector<Var<Scalar>> Vgg19Extractor<Scalar>::taps(const Var<Scalar>& image) const {
  std::vector<Var<Scalar>> out;
  auto h = normalize(image);
  int block = 0;
  size_t next_tap = 0;
  for (size_t i = 0; i < convs_.size() && next_tap < std::size(kVggTaps); ++i) {
    if (block_of_[i] != block) {
      h = max_pool2(h);
      block = block_of_[i];
    }
    h = relu(convs_[i](h));
    if (static_cast<int>(i) == kVggTaps[next_tap]) {
      out.push_back(h);
      ++next_tap;
    }
  }
  return out;
}

template <typename Scalar>
Var<Scalar> Vgg19Extractor<Scalar>::pooled(const Var<Scalar>& image) const {
  auto h = normalize(constant(resize_bilinear(image.value(), 224, 224)));
  int block = 0;
  for (size_t i = 0; i < convs_.size(); ++i) {
    if (block_of_[i] != block) {
      h = max_pool2(h);
      block = block_of_[i];
    }
    h = relu(convs_[i](h));
  }
  return global_avg_pool(h);
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> Vgg19Extractor<Scalar>::class_probs(const Var<Scalar>& image) const {
  if (!has_classifier()) throw DependencyError("VGG19 asset has no classifier weights");
  if (image.shape().n != 1) throw ShapeError("class_probs takes one image at a time");
  auto h = normalize(constant(resize_bilinear(image.value(), 224, 224)));
  int block = 0;
  for (size_t i = 0; i < convs_.size(); ++i) {
    if (block_of_[i] != block) {
      h = max_pool2(h);
      block = block_of_[i];
    }
    h = relu(convs_[i](h));
  }
  h = max_pool2(h);  // 7x7x512, flattened in CHW order as torchvision does
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> v = h.value().array().matrix();
  for (size_t k = 0; k < fc_.size(); ++k) {
    v = fc_[k] * v + fc_bias_[k];
    if (k + 1 < fc_.size()) v = v.cwiseMax(Scalar(0));
  }
  v.array() -= v.maxCoeff();
  v = v.array().exp().matrix();
  return v / v.sum();
}

template <typename Scalar>
std::shared_ptr<FeatureExtractor<Scalar>> make_extractor(const std::string& kind, std::uint64_t seed) {
  if (kind == "surrogate") return std::make_shared<SurrogateExtractor<Scalar>>(seed);
  if (kind == "identity") return std::make_shared<IdentityExtractor<Scalar>>();
  if (kind == "vgg19") return std::make_shared<Vgg19Extractor<Scalar>>(asset_dir_from_env());
  throw std::invalid_argument("unknown extractor '" + kind + "' (expected surrogate, identity or vgg19)");
}

template class SurrogateExtractor<float>;
template class SurrogateExtractor<double>;
template class Vgg19Extractor<float>;
template class Vgg19Extractor<double>;
template std::shared_ptr<FeatureExtractor<float>> make_extractor(const std::string&, std::uint64_t);
template std::shared_ptr<FeatureExtractor<double>> make_extractor(const std::string&, std::uint64_t);

}  // namespace angio
