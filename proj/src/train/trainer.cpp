#include "angio/train/trainer.hpp"
#include "angio/io/digest.hpp"
#include "angio/train/checkpoint.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

namespace angio {

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::kWarmup:
      return "warmup";
    case Phase::kAdversarial:
      return "adversarial";
    case Phase::kFull:
      return "full";
  }
  return "?";
}

Batch make_batch(const std::vector<const Image*>& slo, const std::vector<const Image*>& fa) {
  if (slo.empty() || slo.size() != fa.size()) throw ShapeError("make_batch: need equal, non-empty SLO/FA lists");
  const Index n = static_cast<Index>(slo.size());
  const Index h = slo[0]->h(), w = slo[0]->w();
  Batch b{Tensor<float>(Shape{n, 3, h, w}), Tensor<float>(Shape{n, 1, h, w})};
  for (Index i = 0; i < n; ++i) {
    const Image& s = *slo[static_cast<size_t>(i)];
    const Image& f = *fa[static_cast<size_t>(i)];
    if (s.shape() != Shape{1, 3, h, w} || f.shape() != Shape{1, 1, h, w}) {
      throw ShapeError("make_batch: patch " + std::to_string(i) + " has shape " + s.shape().str() + "/" +
                       f.shape().str());
    }
    for (Index c = 0; c < 3; ++c) b.condition.plane(i, c) = (2.0f * s.plane(0, c).array() - 1.0f).matrix();
    b.target.plane(i, 0) = (2.0f * f.plane(0, 0).array() - 1.0f).matrix();
  }
  return b;
}

TrainState::TrainState(const TrainConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  gen_ = std::make_unique<Generator<float>>(cfg_.generator, cfg_.seed);
  disc_f_ = std::make_unique<MultiScaleDiscriminator<float>>(cfg_.discriminator, cfg_.discriminator.scales_fine,
                                                             "disc_f", cfg_.seed);
  disc_c_ = std::make_unique<MultiScaleDiscriminator<float>>(cfg_.discriminator, cfg_.discriminator.scales_coarse,
                                                             "disc_c", cfg_.seed);
  psi_ = std::make_unique<RegistrationNet<float>>(cfg_.registration, cfg_.seed);
  const auto& o = cfg_.optim;
  for (auto& [name, params] : groups()) optims_.emplace(name, Adam<float>(params, o.learning_rate, o.beta1, o.beta2, o.eps));
}

std::vector<std::pair<std::string, ParameterList<float>*>> TrainState::groups() {
  std::vector<std::pair<std::string, ParameterList<float>*>> g;
  g.emplace_back("coarse_gen", &gen_->coarse_params());
  g.emplace_back("fine_gen", &gen_->fine_params());
  for (size_t k = 0; k < disc_f_->params().size(); ++k) g.emplace_back(disc_f_->group_names()[k], &disc_f_->params()[k]);
  for (size_t k = 0; k < disc_c_->params().size(); ++k) g.emplace_back(disc_c_->group_names()[k], &disc_c_->params()[k]);
  g.emplace_back("psi", &psi_->params());
  return g;
}

Phase TrainState::phase_at(long long epoch, long long step) const {
  const long long pos = cfg_.schedule.in_steps() ? step : epoch;
  if (pos < cfg_.schedule.disc_start_epoch) return Phase::kWarmup;
  if (pos < cfg_.schedule.reg_start_epoch || !cfg_.flags.rm) return Phase::kAdversarial;
  return Phase::kFull;
}

namespace {

void check_finite(const std::string& name, double v, const TrainState& s, Phase phase) {
  if (!std::isfinite(v)) {
    throw TrainingError("non-finite " + name + " loss (" + std::to_string(v) + ") at step " + std::to_string(s.step) +
                        ", phase " + phase_name(phase));
  }
}

void set_trainable(MultiScaleDiscriminator<float>& d, bool on) {
  for (auto& p : d.params()) p.set_trainable(on);
}

void zero(std::initializer_list<ParameterList<float>*> lists) {
  for (auto* l : lists) l->zero_grad();
}

}  // namespace

namespace {

LossBreakdown<float> objective(TrainState& s, const Var<float>& x, const Var<float>& y,
                               const GeneratorOutput<float>& out, Phase phase) {
  const TrainConfig& cfg = s.config();
  const FeatureExtractor<float>* extractor = cfg.flags.vgg ? s.perceptual_extractor() : nullptr;
  auto& df = s.disc_fine();
  auto& dc = s.disc_coarse();
  const auto x_half = avg_pool2(x);
  const auto y_half = avg_pool2(y);
  const bool registering = phase == Phase::kFull && cfg.flags.rm;
  CompositeTerms<float> t;
  {
    const auto real_pf = df.forward(x, y);
    const auto fake_pf = df.forward(x, out.fine_image);
    const auto real_pc = dc.forward(x_half, y_half);
    const auto fake_pc = dc.forward(x_half, out.coarse_image);
    auto accumulate = [](std::optional<Var<float>>& acc, const Var<float>& v) {
      acc = acc ? add(*acc, v) : v;
    };
    for (size_t k = 0; k < fake_pf.size(); ++k) {
      accumulate(t.adv_fine, adv_loss_gen(fake_pf[k], cfg.literal_adversarial));
      if (cfg.flags.fm) accumulate(t.fm_fine, fm_loss(real_pf[k], fake_pf[k]));
    }
    for (size_t k = 0; k < fake_pc.size(); ++k) {
      accumulate(t.adv_coarse, adv_loss_gen(fake_pc[k], cfg.literal_adversarial));
      if (cfg.flags.fm) accumulate(t.fm_coarse, fm_loss(real_pc[k], fake_pc[k]));
    }
  }
  Var<float> field;
  if (registering) {
    // Without the perceptual extractor the correction compares warped pixels directly.
    static const IdentityExtractor<float> identity;
    const FeatureExtractor<float>& ext = extractor ? *extractor : identity;
    t.perceptual_fine = corr_loss(out.fine_image, y, s.psi(), ext, &field);
    t.corrected = true;
  } else if (cfg.flags.vgg) {
    t.perceptual_fine = perceptual_loss(out.fine_image, y, *extractor);
  }
  if (cfg.flags.vgg) t.perceptual_coarse = perceptual_loss(out.coarse_image, y_half, *extractor);

  auto b = composite_loss(t, cfg.weights, CompositeRequirements{true, cfg.flags.fm, cfg.flags.vgg});
  if (registering && cfg.registration.smoothness_weight > 0) {
    auto smooth = scale(smoothness_penalty(field), static_cast<float>(cfg.registration.smoothness_weight));
    b.terms.emplace_back("smoothness", smooth);
    b.total = add(b.total, smooth);
  }
  return b;
}

}  // namespace

const FeatureExtractor<float>* TrainState::perceptual_extractor() {
  if (!extractor_) extractor_ = make_extractor<float>(cfg_.extractor);
  return extractor_.get();
}

std::map<std::string, double> generator_objective(TrainState& s, const Batch& batch, Phase phase) {
  if (phase == Phase::kWarmup) throw std::logic_error("generator_objective: warmup has no composite objective");
  const Var<float> x(batch.condition);
  const Var<float> y(batch.target);
  return objective(s, x, y, s.generator().forward(x), phase).values();
}

StepResult train_step(TrainState& s, const Batch& batch, Phase phase) {
  const TrainConfig& cfg = s.cfg_;
  auto& gen = *s.gen_;
  auto& df = *s.disc_f_;
  auto& dc = *s.disc_c_;

  const Var<float> x(batch.condition);
  const Var<float> y(batch.target);
  const auto x_half = avg_pool2(x);
  const auto y_half = avg_pool2(y);

  StepResult result{phase, {}, std::nullopt};
  const auto out = gen.forward(x);

  if (phase == Phase::kWarmup) {
    auto b = warmup_loss(out.fine_image, y, out.coarse_image, y_half, cfg.flags.vgg ? s.perceptual_extractor() : nullptr,
                         cfg.weights);
    for (const auto& [name, v] : b.values()) check_finite(name, v, s, phase);
    zero({&gen.coarse_params(), &gen.fine_params()});
    b.total.backward();
    s.optimizer("coarse_gen").step();
    s.optimizer("fine_gen").step();
    zero({&gen.coarse_params(), &gen.fine_params()});
    result.generator = b.values();
    return result;
  }

  // Discriminator update on detached generator outputs.
  set_trainable(df, true);
  set_trainable(dc, true);
  {
    const auto fake_f = out.fine_image.detach();
    const auto fake_c = out.coarse_image.detach();
    const auto real_pf = df.forward(x, y);
    const auto fake_pf = df.forward(x, fake_f);
    const auto real_pc = dc.forward(x_half, y_half);
    const auto fake_pc = dc.forward(x_half, fake_c);
    Var<float> loss_d;
    for (size_t k = 0; k < real_pf.size(); ++k) {
      auto t = adv_loss_disc(real_pf[k], fake_pf[k]);
      loss_d = loss_d.defined() ? add(loss_d, t) : t;
    }
    for (size_t k = 0; k < real_pc.size(); ++k) loss_d = add(loss_d, adv_loss_disc(real_pc[k], fake_pc[k]));
    check_finite("discriminator", loss_d.item(), s, phase);
    for (auto& p : df.params()) p.zero_grad();
    for (auto& p : dc.params()) p.zero_grad();
    loss_d.backward();
    for (const auto& name : df.group_names()) s.optimizer(name).step();
    for (const auto& name : dc.group_names()) s.optimizer(name).step();
    for (auto& p : df.params()) p.zero_grad();
    for (auto& p : dc.params()) p.zero_grad();
    result.discriminator = loss_d.item();
  }

  // Generator (and registration) update against the refreshed, frozen discriminators.
  set_trainable(df, false);
  set_trainable(dc, false);
  const bool registering = phase == Phase::kFull && cfg.flags.rm;
  auto b = objective(s, x, y, out, phase);
  for (const auto& [name, v] : b.values()) check_finite(name, v, s, phase);
  zero({&gen.coarse_params(), &gen.fine_params(), &s.psi_->params()});
  b.total.backward();
  s.optimizer("coarse_gen").step();
  s.optimizer("fine_gen").step();
  if (registering) s.optimizer("psi").step();
  zero({&gen.coarse_params(), &gen.fine_params(), &s.psi_->params()});
  set_trainable(df, true);
  set_trainable(dc, true);
  result.generator = b.values();
  return result;
}

std::string group_digest(const ParameterList<float>& params) {
  Sha256 h;
  for (const auto& p : params.items()) {
    h.update(p.name);
    h.update(p.var.value().data(), sizeof(float) * static_cast<size_t>(p.var.value().size()));
  }
  return h.hex_digest();
}

TrainData prepare_train_data(const std::string& root, const DatasetManifest& manifest, const TrainConfig& cfg) {
  TrainData d;
  const auto ids = manifest.ids(Split::kTrain);
  if (ids.empty()) throw ConfigError("dataset has no training pairs");
  for (size_t i = 0; i < ids.size(); ++i) {
    RawPair p = load_pair(root, manifest.entry(ids[i]));
    if (cfg.flags.ims) p.slo = clahe_sharpen(p.slo, cfg.data.clahe_grid, cfg.data.clahe_clip);
    Rng rng = Rng::derive(cfg.seed ^ 0xa46e0ull, i);
    for (auto& patch : augment_pair(p, cfg.data.crop_h, cfg.data.crop_w, cfg.data.n_crops, rng)) {
      d.slo.push_back(std::move(patch.slo_patch));
      d.fa.push_back(std::move(patch.fa_patch));
    }
  }
  return d;
}

std::unique_ptr<TrainState> run_training(const TrainConfig& cfg, const TrainData& data, const RunOptions& opts) {
  auto state = opts.resume_from.empty() ? std::make_unique<TrainState>(cfg) : load_checkpoint(opts.resume_from);
  if (config_digest(state->config()) != config_digest(cfg)) {
    throw ConfigError("resume checkpoint was trained with a different config");
  }
  const Index n = static_cast<Index>(data.slo.size());
  if (n == 0 || data.fa.size() != data.slo.size()) throw ConfigError("training data is empty or unpaired");
  const Index bs = cfg.optim.batch_size;
  const long long per_epoch = (n + bs - 1) / bs;
  const auto& sched = cfg.schedule;

  std::ofstream log;
  std::string ckpt_dir;
  if (!opts.run_dir.empty()) {
    std::filesystem::create_directories(opts.run_dir + "/logs");
    ckpt_dir = opts.run_dir + "/checkpoints";
    std::filesystem::create_directories(ckpt_dir);
    log.open(opts.run_dir + "/logs/train.jsonl", opts.resume_from.empty() ? std::ios::trunc : std::ios::app);
  }
  auto emit = [&](const nlohmann::json& j) {
    if (log.is_open()) log << j.dump() << '\n' << std::flush;
  };

  std::optional<Phase> last;
  if (state->step > 0) {
    const long long prev_epoch = state->batch_in_epoch == 0 ? state->epoch - 1 : state->epoch;
    last = state->phase_at(prev_epoch, state->step - 1);
  } else {
    emit({{"event", "start"}, {"config_digest", config_digest(cfg)}, {"patches", n}, {"steps_per_epoch", per_epoch}});
  }

  auto done = [&] {
    return sched.in_steps() ? state->step >= sched.total_epochs : state->epoch >= sched.total_epochs;
  };
  while (!done()) {
    std::vector<Index> order(static_cast<size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    Rng shuffle_rng = Rng::derive(cfg.seed, static_cast<std::uint64_t>(state->epoch));
    shuffle_rng.shuffle(order);

    for (long long b = state->batch_in_epoch; b < per_epoch && !done(); ++b) {
      const Phase phase = state->phase_at(state->epoch, state->step);
      if (!last || *last != phase) {
        emit({{"event", "phase_change"},
              {"step", state->step},
              {"epoch", state->epoch},
              {"from", last ? phase_name(*last) : "none"},
              {"to", phase_name(phase)}});
        last = phase;
      }
      std::vector<const Image*> slo, fa;
      for (Index i = b * bs; i < std::min<Index>(n, (b + 1) * bs); ++i) {
        slo.push_back(&data.slo[static_cast<size_t>(order[static_cast<size_t>(i)])]);
        fa.push_back(&data.fa[static_cast<size_t>(order[static_cast<size_t>(i)])]);
      }
      const StepResult r = train_step(*state, make_batch(slo, fa), phase);
      ++state->step;
      state->batch_in_epoch = b + 1;
      if (state->step % cfg.log_every == 0) {
        nlohmann::json line = {{"event", "step"},
                               {"step", state->step},
                               {"epoch", state->epoch},
                               {"phase", phase_name(phase)},
                               {"losses", r.generator}};
        if (r.discriminator) line["disc"] = *r.discriminator;
        emit(line);
      }
      if (opts.on_step) opts.on_step(*state, r);
      if (sched.in_steps() && cfg.checkpoint_every > 0 && state->step % cfg.checkpoint_every == 0 && !ckpt_dir.empty()) {
        save_checkpoint(ckpt_dir + "/step_" + std::to_string(state->step) + ".ckpt", *state);
      }
      if (opts.stop_after && state->step >= *opts.stop_after) {
        if (!ckpt_dir.empty()) save_checkpoint(ckpt_dir + "/interrupted.ckpt", *state);
        return state;
      }
    }
    if (state->batch_in_epoch >= per_epoch) {
      ++state->epoch;
      state->batch_in_epoch = 0;
      if (!sched.in_steps() && cfg.checkpoint_every > 0 && state->epoch % cfg.checkpoint_every == 0 &&
          !ckpt_dir.empty()) {
        save_checkpoint(ckpt_dir + "/epoch_" + std::to_string(state->epoch) + ".ckpt", *state);
      }
    }
  }
  emit({{"event", "end"}, {"step", state->step}, {"epoch", state->epoch}});
  if (!ckpt_dir.empty()) save_checkpoint(ckpt_dir + "/final.ckpt", *state);
  return state;
}

Image generate(const Generator<float>& gen, const Image& slo, const TrainConfig& cfg) {
  if (slo.n() != 1 || slo.c() != 3) throw ShapeError("generate expects a (1,3,H,W) SLO, got " + slo.shape().str());
  check_unit_range(slo, "generate");
  const Image input = cfg.flags.ims ? clahe_sharpen(slo, cfg.data.clahe_grid, cfg.data.clahe_clip) : slo;
  const Index div = gen.config().required_divisor();
  const Index h = slo.h(), w = slo.w();
  const Index ph = (h + div - 1) / div * div, pw = (w + div - 1) / div * div;
  Image padded = pad_edge(input, ph, pw);
  padded.array() = 2.0f * padded.array() - 1.0f;
  const auto out = gen.forward(Var<float>(std::move(padded))).fine_image.value();
  Image fa(Shape{1, 1, h, w});
  fa.plane(0, 0) = ((out.plane(0, 0).block(0, 0, h, w).array() + 1.0f) * 0.5f).max(0.0f).min(1.0f).matrix();
  return fa;
}

}  // namespace angio
