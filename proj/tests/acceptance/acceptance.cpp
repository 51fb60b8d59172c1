// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance                 every check
//   acceptance --only desk     one check (repeatable)
//   acceptance --list

#include "angio/eval/evaluate.hpp"
#include "support/gradcheck.hpp"

#include <CLI11.hpp>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <unistd.h>

namespace fs = std::filesystem;
using namespace angio;
using angio::testing::gradcheck;
using angio::testing::random_leaf;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s << std::setprecision(prec) << v;
  return s.str();
}

std::string join(const std::vector<double>& v, int prec = 4) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) out += (i ? "/" : "") + fmt(v[i], prec);
  return out;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("angio_acceptance_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Image texture(Index h, Index w, std::uint64_t seed) {
  Rng rng(seed);
  Image img(Shape{1, 1, h, w});
  const double fy = rng.uniform(0.1, 0.5), fx = rng.uniform(0.1, 0.5);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      img(0, 0, y, x) = static_cast<float>(
          std::clamp(0.5 + 0.3 * std::sin(fy * y) * std::cos(fx * x) + rng.normal(0.0, 0.05), 0.0, 1.0));
  return img;
}

// ---- metric oracles -------------------------------------------------------

Eigen::MatrixXd gaussian_samples(const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov, int n, std::uint64_t seed) {
  Rng rng(seed);
  const Eigen::MatrixXd l = cov.llt().matrixL();
  Eigen::MatrixXd out(n, mu.size());
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd z(mu.size());
    for (Index k = 0; k < z.size(); ++k) z(k) = rng.normal(0.0, 1.0);
    out.row(i) = (mu + l * z).transpose();
  }
  return out;
}

// Frechet distance from sample moments, trace term via the general eigen-solver of Ca*Cb.
double frechet_oracle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  auto moments = [](const Eigen::MatrixXd& x, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
    mu = x.colwise().mean().transpose();
    cov = Eigen::MatrixXd::Zero(x.cols(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
      const Eigen::VectorXd d = x.row(i).transpose() - mu;
      cov += d * d.transpose();
    }
    cov /= static_cast<double>(x.rows() - 1);
  };
  Eigen::VectorXd ma, mb;
  Eigen::MatrixXd ca, cb;
  moments(a, ma, ca);
  moments(b, mb, cb);
  Eigen::EigenSolver<Eigen::MatrixXd> es(ca * cb);
  double tr = 0;
  for (Index i = 0; i < es.eigenvalues().size(); ++i) tr += std::sqrt(std::max(0.0, es.eigenvalues()(i).real()));
  return (ma - mb).squaredNorm() + ca.trace() + cb.trace() - 2 * tr;
}

Outcome metric_oracles() {
  std::vector<std::string> failed;
  const Image a = texture(64, 64, 1);
  if (psnr(a, a) != kPsnrCapDb) failed.push_back("psnr(a,a)");
  if (std::abs(ms_ssim(a, a, 3) - 1.0) > 1e-6) failed.push_back("ms_ssim(a,a)");

  Eigen::MatrixXd cov_a(4, 4), cov_b(4, 4);
  cov_a << 2, 0.3, 0, 0.1, 0.3, 1, 0.2, 0, 0, 0.2, 0.5, 0, 0.1, 0, 0, 1.5;
  cov_b << 1, -0.2, 0.1, 0, -0.2, 0.7, 0, 0, 0.1, 0, 1.2, 0.3, 0, 0, 0.3, 0.9;
  const auto fa = gaussian_samples(Eigen::VectorXd::Zero(4), cov_a, 300, 1);
  if (fid(fa, fa) > 1e-6) failed.push_back("fid(A,A)");
  Eigen::VectorXd mu_b(4);
  mu_b << 0.5, -0.3, 0.2, 1.0;
  const auto fb = gaussian_samples(mu_b, cov_b, 300, 2);
  const double fid_err = std::abs(fid(fa, fb) - frechet_oracle(fa, fb));
  if (fid_err > 1e-3) failed.push_back("fid gaussian");

  if (std::abs(inception_score(Eigen::MatrixXd::Constant(7, 10, 0.1)) - 1.0) > 1e-6) failed.push_back("is(uniform)");
  Eigen::MatrixXd p(4, 3);
  p << 0.7, 0.2, 0.1, 0.1, 0.8, 0.1, 0.3, 0.3, 0.4, 0.05, 0.05, 0.9;
  const Eigen::RowVectorXd m = p.colwise().mean();
  // Hand computation: exp(H(marginal) - mean_i H(p_i)).
  double hm = 0, hi = 0;
  for (Index k = 0; k < 3; ++k) hm -= m(k) * std::log(m(k));
  for (Index i = 0; i < 4; ++i)
    for (Index k = 0; k < 3; ++k) hi -= p(i, k) * std::log(p(i, k)) / 4;
  const double is_err = std::abs(inception_score(p) - std::exp(hm - hi));
  if (is_err > 1e-6) failed.push_back("is(4 vectors)");

  std::string detail = "fid gaussian err " + fmt(fid_err, 3) + " (tol 1e-3), is err " + fmt(is_err, 3) + " (tol 1e-6)";
  for (const auto& f : failed) detail += "; failed " + f;
  return {failed.empty(), detail};
}

// ---- shape contract -------------------------------------------------------

Outcome shape_contract() {
  std::vector<std::string> failed;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failed.push_back(what);
  };
  // Stride-2 4x4 pad-1 layers, then a 3x3 stride-1 pad-1 head.
  auto logit_oracle = [](Index n, int layers) {
    for (int i = 0; i < layers; ++i) n = (n + 2 - 4) / 2 + 1;
    return n;
  };

  expect(block_output_shape(BlockKind::kDown, {1, 8, 68, 52}, 16) == Shape{1, 16, 34, 26}, "down 68x52");
  expect(block_output_shape(BlockKind::kResidual, {1, 8, 17, 13}, 8) == Shape{1, 8, 17, 13}, "residual 17x13");
  expect(block_output_shape(BlockKind::kUp, {1, 16, 34, 26}, 8) == Shape{1, 8, 68, 52}, "up 34x26");

  const TrainConfig desk = desk_config(1);
  for (const auto [h, w] : {std::pair<Index, Index>{64, 64}, {128, 96}}) {
    const std::string tag = std::to_string(h) + "x" + std::to_string(w);
    Generator<float> g(desk.generator, 1);
    Tensor<float> x(Shape{1, 3, h, w});
    x.set_zero();
    const auto out = g.forward(Var<float>(x));
    const auto s = generator_shapes(desk.generator, x.shape());
    expect(out.fine_image.shape() == Shape{1, 1, h, w} && s.fine_image == out.fine_image.shape(), "fine " + tag);
    expect(out.coarse_image.shape() == Shape{1, 1, h / 2, w / 2} && s.coarse_image == out.coarse_image.shape(),
           "coarse " + tag);
    expect(out.handoff.shape() == Shape{1, desk.generator.base_channels, h / 2, w / 2}, "handoff " + tag);

    MultiScaleDiscriminator<float> d(desk.discriminator, desk.discriminator.scales_fine, "disc_f", 1);
    const auto pyr = d.forward(Var<float>(x), out.fine_image);
    for (int k = 0; k < d.scales(); ++k) {
      const Shape l = pyr[k].patch_logits.shape();
      const int n = desk.discriminator.n_layers;
      expect(l.h == logit_oracle(h >> k, n) && l.w == logit_oracle(w >> k, n),
             "disc scale " + std::to_string(k) + " " + tag);
    }

    RegistrationNet<float> psi(desk.registration, 1);
    const auto field = psi.forward(out.fine_image, out.fine_image);
    expect(field.shape() == Shape{1, 2, h, w}, "psi " + tag);
    expect(field.value().array().abs().maxCoeff() < 1e-6, "psi fresh field " + tag);
  }

  // 1088x832 at the default widths: dimension arithmetic only.
  const TrainConfig full;
  const Shape big{1, 3, 1088, 832};
  const auto s = generator_shapes(full.generator, big);
  expect(s.coarse_input == Shape{1, 3, 544, 416}, "coarse input 1088x832");
  expect(s.coarse_bottleneck.h == 68 && s.coarse_bottleneck.w == 52, "coarse bottleneck 1088x832");
  expect(s.coarse_image == Shape{1, 1, 544, 416}, "coarse image 1088x832");
  expect(s.fine_image == Shape{1, 1, 1088, 832}, "fine image 1088x832");
  for (int k = 0; k < full.discriminator.scales_fine; ++k) {
    for (const Index e : {Index{1088}, Index{832}}) {
      expect(full.discriminator.logits_extent(e >> k) == logit_oracle(e >> k, full.discriminator.n_layers),
             "disc extent 1088x832");
    }
  }
  const Index div = full.registration.required_divisor();
  expect(1088 % div == 0 && 832 % div == 0, "psi divisor 1088x832");

  std::string detail = "sizes 64x64, 128x96 run; 1088x832 dry run";
  for (const auto& f : failed) detail += "; failed " + f;
  return {failed.empty(), detail};
}

// ---- gradient suite -------------------------------------------------------

RegistrationConfig reg8() {
  RegistrationConfig c;
  c.enc_blocks = 3;
  c.dec_blocks = 3;
  c.base_channels = 4;
  return c;
}

Outcome gradient_suite() {
  double worst_warp = 0, worst_fm = 0, worst_perc = 0, worst_corr = 0;
  for (std::uint64_t k = 0; k < 10; ++k) {
    {
      auto img = random_leaf({1, 1, 8, 8}, 1000 + k);
      Rng rng(1500 + k);
      Tensor<double> f(Shape{1, 2, 8, 8});
      for (Index i = 0; i < f.size(); ++i) f.data()[i] = rng.uniform(-2.0, 2.0);
      Var<double> field(f, true);
      worst_warp = std::max(worst_warp, gradcheck([&] { return sum(warp(img, field)); }, {img, field}));
    }
    {
      DiscriminatorConfig cfg;
      cfg.n_layers = 2;
      cfg.base_channels = 4;
      ParameterList<double> params(2000 + k);
      PatchDiscriminator<double> d(cfg, params);
      auto cond = random_leaf({1, 3, 8, 8}, 2100 + k);
      auto real = random_leaf({1, 1, 8, 8}, 2200 + k);
      auto fake = random_leaf({1, 1, 8, 8}, 2300 + k);
      worst_fm = std::max(
          worst_fm, gradcheck([&] { return fm_loss(d.forward(cond, real), d.forward(cond, fake)); }, {fake}));
    }
    SurrogateExtractor<double> ext;
    {
      auto a = random_leaf({1, 1, 8, 8}, 3000 + k);
      auto b = random_leaf({1, 1, 8, 8}, 3100 + k);
      worst_perc = std::max(worst_perc, gradcheck([&] { return perceptual_loss(a, b, ext); }, {a}));
    }
    {
      RegistrationNet<double> psi(reg8(), 4000 + k);
      Rng rng(4100 + k);
      auto head = psi.params().find("head.weight");
      for (Index i = 0; i < head.value().size(); ++i) head.mutable_value().data()[i] = rng.normal(0.0, 0.3);
      auto fine = random_leaf({1, 1, 8, 8}, 4200 + k);
      auto target = random_leaf({1, 1, 8, 8}, 4300 + k);
      worst_corr = std::max(worst_corr, gradcheck([&] { return corr_loss(fine, target, psi, ext); }, {fine}));
    }
  }
  const double worst = std::max({worst_warp, worst_fm, worst_perc, worst_corr});
  return {worst < 1e-3, "worst relative error over 10 seeds: warp " + fmt(worst_warp, 2) + ", fm " +
                            fmt(worst_fm, 2) + ", perceptual " + fmt(worst_perc, 2) + ", corr " +
                            fmt(worst_corr, 2) + " (tol 1e-3)"};
}

// ---- registration recovery ------------------------------------------------

double interior_l1(const Tensor<float>& a, const Tensor<float>& b, Index margin) {
  double s = 0;
  long n = 0;
  for (Index y = margin; y < a.h() - margin; ++y)
    for (Index x = margin; x < a.w() - margin; ++x, ++n) s += std::abs(a(0, 0, y, x) - b(0, 0, y, x));
  return s / static_cast<double>(n);
}

// The generator is frozen at the ideal output (the aligned FA); only psi trains, on the
// corrected perceptual loss, against targets resampled by a (5, 3) px translation.
double registration_reduction(std::uint64_t seed) {
  constexpr int kTrain = 20, kHeld = 4, kSteps = 500, kBatch = 4;
  constexpr Index kSize = 64, kMargin = 8;
  SynthConfig sc;
  sc.n_pairs = kTrain + kHeld;
  sc.height = sc.width = kSize;
  sc.seed = 100 + seed;
  const auto field = translation_field(kSize, kSize, 5, 3);
  std::vector<Tensor<float>> gen, tgt;
  for (const auto& p : synth_generate(sc)) {
    Tensor<float> g = p.pair.fa, t = apply_field(p.pair.fa, field);
    g.array() = g.array() * 2 - 1;
    t.array() = t.array() * 2 - 1;
    gen.push_back(std::move(g));
    tgt.push_back(std::move(t));
  }
  const TrainConfig cfg = desk_config(seed);
  RegistrationNet<float> psi(cfg.registration, seed);
  Adam<float> opt(&psi.params(), cfg.optim.learning_rate, cfg.optim.beta1, cfg.optim.beta2, cfg.optim.eps);
  SurrogateExtractor<float> ext;
  for (int step = 0; step < kSteps; ++step) {
    Tensor<float> g(Shape{kBatch, 1, kSize, kSize}), t(Shape{kBatch, 1, kSize, kSize});
    for (int b = 0; b < kBatch; ++b) {
      const int i = (step * kBatch + b) % kTrain;
      g.plane(b, 0) = gen[i].plane(0, 0);
      t.plane(b, 0) = tgt[i].plane(0, 0);
    }
    for (auto& p : psi.params().items()) p.var.zero_grad();
    corr_loss(Var<float>(g), Var<float>(t), psi, ext).backward();
    opt.step();
  }
  double warped = 0, unwarped = 0;
  for (int i = kTrain; i < kTrain + kHeld; ++i) {
    const Var<float> g(gen[i]), t(tgt[i]);
    warped += interior_l1(warp(g, psi.forward(g, t)).value(), tgt[i], kMargin);
    unwarped += interior_l1(gen[i], tgt[i], kMargin);
  }
  return 1.0 - warped / unwarped;
}

Outcome registration_recovery() {
  std::vector<double> r;
  for (std::uint64_t seed : {1, 2, 3}) r.push_back(registration_reduction(seed));
  const double med = median(r);
  return {med >= 0.8, "held-out warped L1 reduction at step 500, seeds 1-3: " + join(r, 3) + ", median " +
                          fmt(med, 3) + " (need >= 0.8)"};
}

// ---- desk training --------------------------------------------------------

struct DeskRun {
  double objective_step10 = 0, objective_end = 0;
  double logged_step10 = 0, logged_end = 0;
  double psnr_untrained = 0, psnr_trained = 0;
};

double mean_psnr(const Generator<float>& g, const TrainConfig& cfg, const std::vector<RawPair>& held) {
  double s = 0;
  for (const auto& p : held) s += psnr(generate(g, p.slo, cfg), p.fa);
  return s / static_cast<double>(held.size());
}

// 64 pairs at 64x64: 45 train, 19 held out. The composite objective is read on a fixed
// held-out probe batch, because the logged total at step 10 is the warmup objective.
DeskRun desk_run(std::uint64_t seed) {
  SynthConfig sc;
  sc.n_pairs = 64;
  sc.height = sc.width = 64;
  sc.seed = 7;
  const auto pairs = synth_generate(sc);
  const TrainConfig cfg = desk_config(seed);
  TrainData data;
  std::vector<RawPair> held;
  for (size_t i = 0; i < pairs.size(); ++i) {
    if (i < 45) {
      data.slo.push_back(clahe_sharpen(pairs[i].pair.slo, cfg.data.clahe_grid, cfg.data.clahe_clip));
      data.fa.push_back(pairs[i].pair.fa);
    } else {
      held.push_back(pairs[i].pair);
    }
  }
  std::vector<Image> probe_slo;
  for (int i = 0; i < 4; ++i) probe_slo.push_back(clahe_sharpen(held[i].slo, cfg.data.clahe_grid, cfg.data.clahe_clip));
  const Batch probe = make_batch({&probe_slo[0], &probe_slo[1], &probe_slo[2], &probe_slo[3]},
                                 {&held[0].fa, &held[1].fa, &held[2].fa, &held[3].fa});

  DeskRun r;
  {
    TrainState fresh(cfg);
    r.psnr_untrained = mean_psnr(fresh.generator(), cfg, held);
  }
  const long long last = cfg.schedule.total_epochs;
  RunOptions opts;
  opts.on_step = [&](TrainState& s, const StepResult& step) {
    if (s.step == 10) {
      r.objective_step10 = generator_objective(s, probe, Phase::kFull).at("total");
      r.logged_step10 = step.generator.at("total");
    }
    if (s.step == last) {
      r.objective_end = generator_objective(s, probe, Phase::kFull).at("total");
      r.logged_end = step.generator.at("total");
    }
  };
  const auto state = run_training(cfg, data, opts);
  r.psnr_trained = mean_psnr(state->generator(), cfg, held);
  return r;
}

Outcome desk_training() {
  std::vector<double> ratio, gain, logged;
  for (std::uint64_t seed : {1, 2, 3}) {
    const DeskRun r = desk_run(seed);
    ratio.push_back(r.objective_end / r.objective_step10);
    gain.push_back(r.psnr_trained - r.psnr_untrained);
    logged.push_back(r.logged_end / r.logged_step10);
    std::cout << "  desk seed " << seed << ": probe composite " << fmt(r.objective_step10) << " -> "
              << fmt(r.objective_end) << ", logged total " << fmt(r.logged_step10) << " -> " << fmt(r.logged_end)
              << ", held-out PSNR " << fmt(r.psnr_untrained) << " -> " << fmt(r.psnr_trained) << " dB" << std::endl;
  }
  const double mr = median(ratio), mg = median(gain);
  return {mr <= 0.7 && mg >= 3.0, "composite end/step10 " + join(ratio, 3) + " median " + fmt(mr, 3) +
                                      " (need <= 0.7); logged-total ratio " + join(logged, 3) +
                                      "; PSNR gain " + join(gain, 3) + " dB median " + fmt(mg, 3) +
                                      " (need >= 3)"};
}

// ---- ablation direction ---------------------------------------------------

Outcome ablation_direction() {
  const fs::path dir = scratch_dir("ablation");
  AblationPlan plan;
  plan.base = desk_config(0);
  AblationFlags off;
  off.rm = false;
  plan.suite = {off, AblationFlags{}};
  plan.seeds = {1, 2, 3};
  plan.synth.n_pairs = 64;
  plan.synth.height = plan.synth.width = 64;
  plan.synth.seed = 7;
  plan.misalignment.max_translation_px = 4;
  plan.misalignment.level_label = "translation4";
  plan.out_dir = dir.string();
  plan.on_row = [](const AblationRow& row) {
    std::cout << "  ablation " << row.flags.label() << " seed " << row.seed << ": PSNR " << fmt(row.report.psnr_db)
              << " dB" << std::endl;
  };
  const auto rows = run_ablation(plan);
  const auto med = median_by_flags(rows, &MetricsReport::psnr_db);
  fs::remove_all(dir);
  const double rm_off = med[0].second, rm_on = med[1].second;
  return {rm_on >= rm_off, "median PSNR rm=on " + fmt(rm_on) + " dB vs rm=off " + fmt(rm_off) + " dB"};
}

// ---- phase gating ---------------------------------------------------------

// Two 64x64 pairs at batch 2 give one step per epoch, so the schedule boundaries
// 10/24/40 are step indices as well.
Outcome phase_gating() {
  TrainConfig cfg;
  cfg.generator.base_channels = 4;
  cfg.generator.coarse_res_blocks = 1;
  cfg.generator.fine_res_blocks = 1;
  cfg.discriminator.base_channels = 4;
  cfg.registration.base_channels = 4;
  cfg.optim.batch_size = 2;
  cfg.seed = 5;
  SynthConfig sc;
  sc.n_pairs = 2;
  sc.height = sc.width = 64;
  TrainData data;
  for (auto& p : synth_generate(sc)) {
    data.slo.push_back(std::move(p.pair.slo));
    data.fa.push_back(std::move(p.pair.fa));
  }

  std::map<std::string, std::string> prev;
  std::vector<std::string> problems;
  long long first_disc = -1, first_psi = -1, steps = 0;
  RunOptions opts;
  auto snapshot = [](TrainState& s) {
    std::map<std::string, std::string> d;
    for (auto& [name, params] : s.groups()) d[name] = group_digest(*params);
    return d;
  };
  opts.on_step = [&](TrainState& s, const StepResult& r) {
    auto now = snapshot(s);
    const long long epoch = s.step - 1;  // one step per epoch
    ++steps;
    for (const auto& [name, digest] : now) {
      const bool changed = digest != prev.at(name);
      const bool is_gen = name == "coarse_gen" || name == "fine_gen";
      const bool is_disc = name.rfind("disc_", 0) == 0;
      const bool expected = is_gen || (is_disc && r.phase != Phase::kWarmup) || (name == "psi" && r.phase == Phase::kFull);
      if (changed != expected) {
        problems.push_back(name + (changed ? " changed" : " unchanged") + " at epoch " + std::to_string(epoch));
      }
      if (changed && is_disc && first_disc < 0) first_disc = epoch;
      if (changed && name == "psi" && first_psi < 0) first_psi = epoch;
    }
    prev = std::move(now);
  };
  {
    TrainState init(cfg);
    prev = snapshot(init);
  }
  run_training(cfg, data, opts);
  const bool ok = problems.empty() && first_disc == 10 && first_psi == 24 && steps == 40;
  std::string detail = "discriminators first move at epoch " + std::to_string(first_disc) + ", psi at epoch " +
                       std::to_string(first_psi) + ", " + std::to_string(steps) + " epochs (expect 10/24/40)";
  if (!problems.empty()) detail += "; " + problems.front() + " (+" + std::to_string(problems.size() - 1) + " more)";
  return {ok, detail};
}

// ---- augmentation counts --------------------------------------------------

Outcome augmentation_counts() {
  auto ids = [](int n) {
    std::vector<std::string> v;
    for (int i = 0; i < n; ++i) v.push_back("pair" + std::to_string(i));
    return v;
  };
  const size_t a = plan_augmentation(ids(164), 1112, 1448, 832, 1088, 40, 1).size();
  const size_t b = plan_augmentation(ids(304), 1112, 1448, 832, 1088, 40, 1).size();
  return {a == 6560 && b == 12160,
          "164 x 40 -> " + std::to_string(a) + " (6560), 304 x 40 -> " + std::to_string(b) + " (12160)"};
}

struct Check {
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Check> checks{
      {"metric_oracles", metric_oracles},
      {"shape_contract", shape_contract},
      {"gradient_suite", gradient_suite},
      {"registration_recovery", registration_recovery},
      {"desk_training", desk_training},
      {"ablation_direction", ablation_direction},
      {"phase_gating", phase_gating},
      {"augmentation_counts", augmentation_counts},
  };

  CLI::App app{"acceptance checks"};
  std::vector<std::string> only;
  bool list = false;
  app.add_option("--only", only, "run only these checks");
  app.add_flag("--list", list);
  CLI11_PARSE(app, argc, argv);
  if (list) {
    for (const auto& c : checks) std::cout << c.name << "\n";
    return 0;
  }
  for (const auto& o : only) {
    if (std::none_of(checks.begin(), checks.end(), [&](const Check& c) { return o == c.name; })) {
      std::cerr << "unknown check '" << o << "'\n";
      return 2;
    }
  }

  int failures = 0;
  for (const auto& c : checks) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.name) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (o.pass ? "PASS " : "FAIL ") << c.name << ": " << o.detail << " [" << fmt(secs, 3) << " s]"
              << std::endl;
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
