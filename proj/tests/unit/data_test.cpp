#include "angio/data/dataset.hpp"
#include "angio/data/synth.hpp"
#include "angio/io/container.hpp"
#include "angio/io/png.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

namespace angio {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("angio_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Image gray(Index h, Index w, float v) {
  Image img(Shape{1, 1, h, w});
  img.array() = v;
  return img;
}

// Reference CLAHE on a single-channel image, written as plain scalar loops.
std::vector<double> reference_lut(const std::vector<float>& px, double clip) {
  std::vector<double> hist(256, 0.0);
  for (float v : px) hist[static_cast<size_t>(std::clamp(std::lround(v * 255.0f), 0L, 255L))] += 1;
  int occupied = 0;
  for (double c : hist) occupied += c > 0 ? 1 : 0;
  if (occupied <= 1) return {};
  const double n = static_cast<double>(px.size());
  const double limit = std::max(1.0, clip * n / 256.0);
  double excess = 0;
  for (double& c : hist)
    if (c > limit) {
      excess += c - limit;
      c = limit;
    }
  for (double& c : hist) c += excess / 256.0;
  std::vector<double> cdf(256);
  double run = 0;
  for (int b = 0; b < 256; ++b) cdf[static_cast<size_t>(b)] = run += hist[static_cast<size_t>(b)];
  int first = 0;
  while (hist[static_cast<size_t>(first)] <= 0) ++first;
  std::vector<double> lut(256);
  for (int b = 0; b < 256; ++b)
    lut[static_cast<size_t>(b)] = std::clamp((cdf[static_cast<size_t>(b)] - cdf[static_cast<size_t>(first)]) /
                                                 (n - cdf[static_cast<size_t>(first)]),
                                             0.0, 1.0);
  return lut;
}

Image reference_clahe(const Image& img, Index rows, Index cols, double clip) {
  const Index h = img.h(), w = img.w();
  const Index th = h / rows, tw = w / cols;  // test sizes divide evenly
  std::vector<std::vector<double>> luts;
  for (Index ty = 0; ty < rows; ++ty)
    for (Index tx = 0; tx < cols; ++tx) {
      std::vector<float> px;
      for (Index y = ty * th; y < (ty + 1) * th; ++y)
        for (Index x = tx * tw; x < (tx + 1) * tw; ++x) px.push_back(img(0, 0, y, x));
      luts.push_back(reference_lut(px, clip));
    }
  auto axis = [](Index p, Index t, Index n) {
    // Tile centres at t*(i + 0.5) - 0.5; clamp outside the first and last centre.
    const double pos = (static_cast<double>(p) + 0.5) / static_cast<double>(t) - 0.5;
    const double c = std::clamp(pos, 0.0, static_cast<double>(n - 1));
    const Index i0 = static_cast<Index>(std::floor(c));
    const Index i1 = std::min(i0 + 1, n - 1);
    return std::tuple<Index, Index, double>{i0, i1, c - static_cast<double>(i0)};
  };
  Image out(img.shape());
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      const auto [y0, y1, ay] = axis(y, th, rows);
      const auto [x0, x1, ax] = axis(x, tw, cols);
      const float v = img(0, 0, y, x);
      const auto b = static_cast<size_t>(std::clamp(std::lround(v * 255.0f), 0L, 255L));
      auto at = [&](Index ty, Index tx) {
        const auto& l = luts[static_cast<size_t>(ty * cols + tx)];
        return l.empty() ? static_cast<double>(v) : l[b];
      };
      const double top = (1 - ax) * at(y0, x0) + ax * at(y0, x1);
      const double bot = (1 - ax) * at(y1, x0) + ax * at(y1, x1);
      out(0, 0, y, x) = static_cast<float>((1 - ay) * top + ay * bot);
    }
  return out;
}

Image stripe_image() {
  Image img = gray(64, 64, 0.2f);
  for (Index y = 0; y < 64; ++y)
    for (Index x = 28; x < 36; ++x) img(0, 0, y, x) = 0.8f;
  return img;
}

// Mean stripe minus mean background over the tiles that contain both.
double stripe_contrast(const Image& img) {
  double s = 0, b = 0;
  int ns = 0, nb = 0;
  for (Index y = 0; y < 64; ++y)
    for (Index x = 24; x < 40; ++x) {
      if (x >= 28 && x < 36) {
        s += img(0, 0, y, x);
        ++ns;
      } else {
        b += img(0, 0, y, x);
        ++nb;
      }
    }
  return std::abs(s / ns - b / nb);
}

TEST(Clahe, ConstantImageUnchanged) {
  const Image c = gray(64, 64, 0.5f);
  const Image out = clahe_sharpen(c);
  EXPECT_EQ((out.array() - c.array()).abs().maxCoeff(), 0.0f);
}

TEST(Clahe, Deterministic) {
  SynthConfig cfg;
  cfg.n_pairs = 1;
  cfg.height = cfg.width = 64;
  const Image slo = synth_generate(cfg)[0].pair.slo;
  const Image a = clahe_sharpen(slo);
  const Image b = clahe_sharpen(slo);
  EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<size_t>(a.size())), 0);
  EXPECT_GE(a.array().minCoeff(), 0.0f);
  EXPECT_LE(a.array().maxCoeff(), 1.0f);
}

TEST(Clahe, MatchesReferenceOnStripe) {
  const Image img = stripe_image();
  for (double clip : {2.0, 40.0, 1000.0}) {
    const Image got = clahe_sharpen(img, {8, 8}, clip);
    const Image ref = reference_clahe(img, 8, 8, clip);
    EXPECT_LT((got.array() - ref.array()).abs().maxCoeff(), 1e-5) << "clip " << clip;
    EXPECT_NEAR(stripe_contrast(got), stripe_contrast(ref), 1e-5) << "clip " << clip;
  }
}

TEST(Clahe, StripeContrastRisesWhenClipAllowsIt) {
  const Image img = stripe_image();
  const double before = stripe_contrast(img);
  EXPECT_NEAR(before, 0.6, 1e-6);
  // An 8x8 tile holds 64 pixels, so clip 2 floors the bin limit at one count: the
  // clipped histogram is almost flat and the mapping is close to the identity.
  const double at_default = stripe_contrast(clahe_sharpen(img, {8, 8}, 2.0));
  EXPECT_NEAR(at_default, before, 0.01);
  // With the limit above the 32-pixel bins the tiles are plainly equalized.
  EXPECT_GT(stripe_contrast(clahe_sharpen(img, {8, 8}, 1000.0)), before);
}

TEST(Clahe, TileLutDegenerateIsEmpty) {
  Eigen::ArrayXf v = Eigen::ArrayXf::Constant(64, 0.3f);
  EXPECT_EQ(clahe_tile_lut(v, 2.0).size(), 0);
}

TEST(Clahe, LuminanceOnlyForRgb) {
  Image rgb(Shape{1, 3, 32, 32});
  Rng rng(1);
  for (Index i = 0; i < rgb.size(); ++i) rgb.data()[i] = static_cast<float>(rng.uniform());
  const Image out = clahe_sharpen(rgb);
  // Chroma is preserved up to clamping: compare Cb of input and output on unclamped pixels.
  int checked = 0;
  for (Index y = 0; y < 32; ++y)
    for (Index x = 0; x < 32; ++x) {
      auto cb = [&](const Image& im) {
        return -0.168736 * im(0, 0, y, x) - 0.331264 * im(0, 1, y, x) + 0.5 * im(0, 2, y, x);
      };
      bool clamped = false;
      for (Index c = 0; c < 3; ++c) clamped |= out(0, c, y, x) <= 0.0f || out(0, c, y, x) >= 1.0f;
      if (clamped) continue;
      EXPECT_NEAR(cb(out), cb(rgb), 1e-5);
      ++checked;
    }
  EXPECT_GT(checked, 100);
}

TEST(Clahe, RejectsBadInput) {
  Image bad = gray(16, 16, 0.5f);
  bad(0, 0, 3, 3) = std::nanf("");
  EXPECT_THROW(clahe_sharpen(bad), InputError);
  EXPECT_THROW(clahe_sharpen(gray(16, 16, 0.5f), {0, 8}), ConfigError);
  EXPECT_THROW(clahe_sharpen(gray(16, 16, 0.5f), {8, 8}, 0.0), ConfigError);
}

TEST(Downsample, Examples) {
  EXPECT_EQ(downsample_half(gray(1088, 832, 0.1f)).shape(), (Shape{1, 1, 544, 416}));
  const Image half = downsample_half(gray(6, 4, 0.7f));
  EXPECT_EQ(half.shape(), (Shape{1, 1, 3, 2}));
  EXPECT_LT((half.array() - 0.7f).abs().maxCoeff(), 1e-7);
  Image checker(Shape{1, 1, 2, 2});
  checker.array() << 0, 1, 1, 0;
  EXPECT_EQ(downsample_half(checker)(0, 0, 0, 0), 0.5f);
  EXPECT_THROW(downsample_half(gray(5, 4, 0)), ShapeError);
}

RawPair random_pair(Index h, Index w, std::uint64_t seed) {
  Rng rng(seed);
  RawPair p{"p", Image(Shape{1, 3, h, w}), Image(Shape{1, 1, h, w})};
  for (Index i = 0; i < p.slo.size(); ++i) p.slo.data()[i] = static_cast<float>(rng.uniform());
  for (Index i = 0; i < p.fa.size(); ++i) p.fa.data()[i] = static_cast<float>(rng.uniform());
  return p;
}

TEST(Augment, PatchesReproduceFromStoredTransform) {
  const RawPair parent = random_pair(40, 36, 2);
  Rng rng(3);
  const auto patches = augment_pair(parent, 24, 20, 40, rng);
  ASSERT_EQ(patches.size(), 40u);
  int flips = 0;
  for (const auto& p : patches) {
    const Image slo = p.flipped ? flip_horizontal(parent.slo) : parent.slo;
    const Image fa = p.flipped ? flip_horizontal(parent.fa) : parent.fa;
    const Image s = crop(slo, p.crop_origin.row, p.crop_origin.col, 24, 20);
    const Image f = crop(fa, p.crop_origin.row, p.crop_origin.col, 24, 20);
    EXPECT_EQ(std::memcmp(s.data(), p.slo_patch.data(), sizeof(float) * static_cast<size_t>(s.size())), 0);
    EXPECT_EQ(std::memcmp(f.data(), p.fa_patch.data(), sizeof(float) * static_cast<size_t>(f.size())), 0);
    // Crop contains the centre pixel and lies inside the parent.
    EXPECT_LE(p.crop_origin.row, 20);
    EXPECT_GT(p.crop_origin.row + 24, 20);
    EXPECT_LE(p.crop_origin.col, 18);
    EXPECT_GT(p.crop_origin.col + 20, 18);
    EXPECT_LE(p.crop_origin.row + 24, 40);
    EXPECT_LE(p.crop_origin.col + 20, 36);
    flips += p.flipped;
  }
  EXPECT_GT(flips, 0);
  EXPECT_LT(flips, 40);
}

TEST(Augment, FullSizeCropHasOriginZero) {
  const RawPair parent = random_pair(16, 24, 4);
  Rng rng(5);
  for (const auto& p : augment_pair(parent, 16, 24, 7, rng)) EXPECT_EQ(p.crop_origin, (CropOrigin{0, 0}));
}

TEST(Augment, OriginsUniformOverCentreContainingRange) {
  // Parent 16x16, crop 12x12, centre (8,8): valid rows and cols are 0..4.
  const auto plan = plan_augmentation({"a"}, 16, 16, 12, 12, 5000, 6);
  std::vector<int> rows(5, 0), cols(5, 0);
  for (const auto& r : plan) {
    ASSERT_GE(r.crop_origin.row, 0);
    ASSERT_LE(r.crop_origin.row, 4);
    ++rows[static_cast<size_t>(r.crop_origin.row)];
    ++cols[static_cast<size_t>(r.crop_origin.col)];
  }
  for (int k = 0; k < 5; ++k) {
    EXPECT_NEAR(rows[static_cast<size_t>(k)], 1000, 150);
    EXPECT_NEAR(cols[static_cast<size_t>(k)], 1000, 150);
  }
}

TEST(Augment, FullScalePatchCounts) {
  auto ids = [](int n) {
    std::vector<std::string> v;
    for (int i = 0; i < n; ++i) v.push_back("pair" + std::to_string(i));
    return v;
  };
  EXPECT_EQ(plan_augmentation(ids(164), 1112, 1448, 832, 1088, 40, 1).size(), 6560u);
  EXPECT_EQ(plan_augmentation(ids(304), 1112, 1448, 832, 1088, 40, 1).size(), 12160u);
}

TEST(Augment, PlanMatchesPixelAugmentation) {
  const RawPair parent = random_pair(32, 32, 7);
  const auto plan = plan_augmentation({"x", "y"}, 32, 32, 16, 16, 5, 8);
  Rng rng = Rng::derive(8, 1);
  const auto patches = augment_pair(parent, 16, 16, 5, rng);
  for (size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(plan[5 + i].crop_origin, patches[i].crop_origin);
    EXPECT_EQ(plan[5 + i].flipped, patches[i].flipped);
  }
}

TEST(Augment, RejectsOversizeCrop) {
  Rng rng(9);
  EXPECT_THROW(augment_pair(random_pair(16, 16, 1), 17, 8, 1, rng), ConfigError);
  EXPECT_THROW(augment_pair(random_pair(16, 16, 1), 8, 8, 0, rng), ConfigError);
}

DatasetManifest manifest_of(int n) {
  DatasetManifest m;
  for (int i = 0; i < n; ++i) {
    const std::string id = "p" + std::to_string(i);
    m.pairs.push_back({id, "slo/" + id + ".png", "fa/" + id + ".png", "", "", ""});
  }
  return m;
}

TEST(Split, FullScaleCountsAndInvariants) {
  const auto m = split_dataset(manifest_of(164), 0.7, 3);
  const auto train = m.ids(Split::kTrain);
  const auto test = m.ids(Split::kTest);
  // round(164 * 0.7) = round(114.8) = 115
  EXPECT_EQ(train.size(), static_cast<size_t>(std::lround(164 * 0.7)));
  EXPECT_EQ(train.size(), 115u);
  EXPECT_EQ(test.size(), 49u);
  std::set<std::string> all(train.begin(), train.end());
  for (const auto& id : test) EXPECT_TRUE(all.insert(id).second);
  EXPECT_EQ(all.size(), 164u);
}

TEST(Split, DeterministicAndSizeSeedIndependent) {
  const auto a = split_dataset(manifest_of(10), 0.7, 1);
  const auto b = split_dataset(manifest_of(10), 0.7, 1);
  const auto c = split_dataset(manifest_of(10), 0.7, 2);
  EXPECT_EQ(a.split, b.split);
  EXPECT_EQ(a.ids(Split::kTrain).size(), c.ids(Split::kTrain).size());
  EXPECT_EQ(a.ids(Split::kTrain).size(), 7u);
}

TEST(Split, TiesRoundTowardTrain) {
  EXPECT_EQ(split_dataset(manifest_of(10), 0.25, 1).ids(Split::kTrain).size(), 3u);  // 2.5 -> 3
  EXPECT_EQ(split_dataset(manifest_of(2), 0.1, 1).ids(Split::kTrain).size(), 1u);   // clamped to >= 1
}

TEST(Split, Errors) {
  EXPECT_THROW(split_dataset(manifest_of(1), 0.7, 1), ConfigError);
  EXPECT_THROW(split_dataset(manifest_of(10), 1.0, 1), ConfigError);
  EXPECT_THROW(split_dataset(manifest_of(10), 0.0, 1), ConfigError);
}

TEST(Manifest, JsonRoundTrip) {
  auto m = split_dataset(manifest_of(6), 0.5, 4);
  m.pairs[0].field = "fields/p0.f32";
  const auto back = DatasetManifest::from_json(m.to_json());
  EXPECT_EQ(back.to_json(), m.to_json());
  EXPECT_EQ(back.entry("p0").field, "fields/p0.f32");
  EXPECT_THROW(back.entry("nope"), std::out_of_range);
}

SynthConfig small_synth(int n = 4) {
  SynthConfig c;
  c.n_pairs = n;
  c.height = 64;
  c.width = 64;
  return c;
}

TEST(Synth, DeterministicForSeed) {
  const auto a = synth_generate(small_synth());
  const auto b = synth_generate(small_synth());
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(std::memcmp(a[i].pair.slo.data(), b[i].pair.slo.data(), sizeof(float) * a[i].pair.slo.size()), 0);
    EXPECT_EQ(std::memcmp(a[i].pair.fa.data(), b[i].pair.fa.data(), sizeof(float) * a[i].pair.fa.size()), 0);
  }
}

TEST(Synth, ContractAtDefaultSize) {
  const auto pairs = synth_generate(SynthConfig{});
  ASSERT_EQ(pairs.size(), 64u);
  for (const auto& p : pairs) {
    EXPECT_EQ(p.pair.slo.shape(), (Shape{1, 3, 128, 128}));
    EXPECT_EQ(p.pair.fa.shape(), (Shape{1, 1, 128, 128}));
    EXPECT_NO_THROW(check_unit_range(p.pair.slo, "slo"));
    EXPECT_NO_THROW(check_unit_range(p.pair.fa, "fa"));
    EXPECT_NO_THROW(p.pair.validate());
  }
}

TEST(Synth, VesselMasksCoincide) {
  for (const auto& p : synth_generate(small_synth(6))) {
    double inter = 0, uni = 0;
    for (Index i = 0; i < p.slo_vessel_mask.size(); ++i) {
      const bool a = p.slo_vessel_mask.data()[i] > 0.5f;
      const bool b = p.fa_vessel_mask.data()[i] > 0.5f;
      inter += a && b;
      uni += a || b;
    }
    ASSERT_GT(uni, 0);
    EXPECT_EQ(inter / uni, 1.0);
  }
}

TEST(Synth, RejectsBadConfig) {
  SynthConfig c = small_synth();
  c.height = 60;
  EXPECT_THROW(synth_generate(c), ConfigError);
  c = small_synth();
  c.n_pairs = 0;
  EXPECT_THROW(synth_generate(c), ConfigError);
}

TEST(Misalignment, ZeroSpecIsIdentity) {
  const auto pair = synth_generate(small_synth(1))[0].pair;
  Rng rng(1);
  const auto m = inject_misalignment(pair, MisalignmentSpec{}, rng);
  EXPECT_EQ(m.field.array().abs().maxCoeff(), 0.0f);
  EXPECT_EQ((m.pair.fa.array() - pair.fa.array()).abs().maxCoeff(), 0.0f);
  EXPECT_EQ((m.pair.slo.array() - pair.slo.array()).abs().maxCoeff(), 0.0f);
}

TEST(Misalignment, TranslationShiftsInterior) {
  const auto pair = synth_generate(small_synth(1))[0].pair;
  const auto field = translation_field(64, 64, 5, 3);
  EXPECT_EQ((field.plane(0, 0).array() - 5.0f).abs().maxCoeff(), 0.0f);
  EXPECT_EQ((field.plane(0, 1).array() - 3.0f).abs().maxCoeff(), 0.0f);
  const Image moved = apply_field(pair.fa, field);
  for (Index y = 0; y < 64 - 5; ++y)
    for (Index x = 0; x < 64 - 3; ++x) ASSERT_EQ(moved(0, 0, y, x), pair.fa(0, 0, y + 5, x + 3));
  // Beyond the border the last row/column is replicated.
  EXPECT_EQ(moved(0, 0, 63, 63), pair.fa(0, 0, 63, 63));
}

TEST(Misalignment, ReproducibleAndBounded) {
  const auto pair = synth_generate(small_synth(1))[0].pair;
  const MisalignmentSpec spec{4, 2, 1, "mid"};
  Rng a(11), b(11);
  const auto m1 = inject_misalignment(pair, spec, a);
  const auto m2 = inject_misalignment(pair, spec, b);
  EXPECT_EQ((m1.pair.fa.array() - m2.pair.fa.array()).abs().maxCoeff(), 0.0f);
  EXPECT_EQ((m1.field.array() - m2.field.array()).abs().maxCoeff(), 0.0f);
  EXPECT_NO_THROW(check_unit_range(m1.pair.fa, "fa"));
  EXPECT_EQ((m1.pair.slo.array() - pair.slo.array()).abs().maxCoeff(), 0.0f);
  EXPECT_THROW((MisalignmentSpec{-1, 0, 0, "x"}.validate()), ConfigError);
}

double interior_mae(const Image& a, const Image& b, Index margin) {
  double acc = 0;
  int n = 0;
  for (Index y = margin; y < a.h() - margin; ++y)
    for (Index x = margin; x < a.w() - margin; ++x) {
      acc += std::abs(a(0, 0, y, x) - b(0, 0, y, x));
      ++n;
    }
  return acc / n;
}

TEST(Misalignment, InverseFieldRecoversOriginal) {
  // Default 128x128 renders; at 64x64 vessels are near one pixel wide and two bilinear passes blur them.
  SynthConfig cfg;
  cfg.n_pairs = 3;
  const auto pairs = synth_generate(cfg);
  for (size_t i = 0; i < pairs.size(); ++i) {
    Rng rng(20 + i);
    const auto m = inject_misalignment(pairs[i].pair, MisalignmentSpec{4, 2, 1, "mid"}, rng);
    const Image back = apply_field(m.pair.fa, invert_field(m.field));
    EXPECT_LT(interior_mae(back, pairs[i].pair.fa, 8), 0.02);
  }
}

TEST(Misalignment, NegatedSmoothFieldComposesToIdentity) {
  SynthConfig cfg;
  cfg.n_pairs = 1;
  const auto fa = synth_generate(cfg)[0].pair.fa;
  Rng rng(30);
  Tensor<float> f = sample_misalignment(MisalignmentSpec{0, 0, 1, "elastic"}, 128, 128, rng);
  f.array() *= 5.0f / f.array().abs().maxCoeff();
  Tensor<float> neg = f;
  neg.array() = -neg.array();
  const Image back = apply_field(apply_field(fa, f), neg);
  EXPECT_LT(interior_mae(back, fa, 8), 0.02);
}

TEST(Container, RoundTripAndTamperDetection) {
  const auto dir = scratch_dir("container");
  TensorFile f;
  f.meta = {{"kind", "test"}};
  f.tensors.push_back({"a", {2, 3}, Eigen::ArrayXf::LinSpaced(6, 0, 5)});
  f.tensors.push_back({"b", {1}, Eigen::ArrayXf::Constant(1, -2.5f)});
  const std::string path = (dir / "t.tensors").string();
  write_tensor_file(path, f);
  EXPECT_FALSE(fs::exists(path + ".part"));
  const auto back = read_tensor_file(path);
  EXPECT_EQ(back.meta["kind"], "test");
  EXPECT_EQ(back.get("a").shape, (std::vector<Index>{2, 3}));
  EXPECT_TRUE((back.get("a").data == f.tensors[0].data).all());
  EXPECT_EQ(back.get("b").data[0], -2.5f);
  EXPECT_EQ(back.find("c"), nullptr);

  {  // flip one payload byte
    std::fstream io(path, std::ios::in | std::ios::out | std::ios::binary);
    io.seekg(-2, std::ios::end);
    char c;
    io.get(c);
    io.seekp(-2, std::ios::end);
    io.put(static_cast<char>(c ^ 0x5a));
  }
  EXPECT_THROW(read_tensor_file(path), LoadError);
  fs::resize_file(path, fs::file_size(path) - 4);
  EXPECT_THROW(read_tensor_file(path), LoadError);
  EXPECT_THROW(read_tensor_file((dir / "missing").string()), LoadError);
}

TEST(Container, FieldRoundTrip) {
  const auto dir = scratch_dir("field");
  Rng rng(31);
  const auto f = sample_misalignment(MisalignmentSpec{3, 1, 1, "x"}, 16, 24, rng);
  const std::string path = (dir / "f.f32").string();
  write_field(path, f);
  const auto back = read_field(path);
  EXPECT_EQ(back.shape(), f.shape());
  EXPECT_EQ((back.array() - f.array()).abs().maxCoeff(), 0.0f);
  EXPECT_EQ(read_tensor_file(path).get("displacement").shape, (std::vector<Index>{16, 24, 2}));
}

TEST(Png, RoundTripQuantizesToEightBits) {
  const auto dir = scratch_dir("png");
  const auto pair = synth_generate(small_synth(1))[0].pair;
  write_png((dir / "sub" / "s.png").string(), pair.slo);
  write_png((dir / "f.png").string(), pair.fa);
  const Image s = read_png((dir / "sub" / "s.png").string());
  const Image f = read_png((dir / "f.png").string());
  EXPECT_EQ(s.shape(), pair.slo.shape());
  EXPECT_EQ(f.shape(), pair.fa.shape());
  EXPECT_LE((s.array() - pair.slo.array()).abs().maxCoeff(), 0.5f / 255.0f + 1e-6f);
  EXPECT_LE((f.array() - pair.fa.array()).abs().maxCoeff(), 0.5f / 255.0f + 1e-6f);
}

TEST(SynthDataset, WrittenLayoutAndDigestStability) {
  const auto a = scratch_dir("synth_a");
  const auto b = scratch_dir("synth_b");
  const MisalignmentSpec spec{4, 0, 0, "t4"};
  const auto ma = write_synth_dataset(a.string(), small_synth(5), 0.6, spec);
  const auto mb = write_synth_dataset(b.string(), small_synth(5), 0.6, spec);
  EXPECT_EQ(dataset_digest(a.string(), ma), dataset_digest(b.string(), mb));
  EXPECT_EQ(ma.ids(Split::kTrain).size(), 3u);
  const auto loaded = load_manifest(a.string());
  EXPECT_EQ(loaded.to_json(), ma.to_json());
  for (const auto& e : loaded.pairs) {
    EXPECT_TRUE(fs::exists(a / e.slo));
    EXPECT_TRUE(fs::exists(a / e.fa));
    EXPECT_TRUE(fs::exists(a / e.fa_aligned));
    EXPECT_TRUE(fs::exists(a / e.mask));
    EXPECT_TRUE(fs::exists(a / e.field));
    const RawPair noisy = load_pair(a.string(), e);
    const RawPair clean = load_pair(a.string(), e, true);
    EXPECT_NO_THROW(noisy.validate());
    EXPECT_EQ(read_field((a / e.field).string()).shape(), (Shape{1, 2, 64, 64}));
    EXPECT_GT((noisy.fa.array() - clean.fa.array()).abs().maxCoeff(), 0.0f);
  }
}

}  // namespace
}  // namespace angio
