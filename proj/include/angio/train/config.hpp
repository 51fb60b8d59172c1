#pragma once

#include "angio/data/preprocess.hpp"
#include "angio/data/synth.hpp"
#include "angio/loss/losses.hpp"
#include "angio/model/discriminators.hpp"
#include "angio/model/generators.hpp"
#include "angio/model/registration.hpp"

#include <json.hpp>

namespace angio {

/// Phase boundaries. Counted in epochs, or in optimizer steps when `unit` is "steps".
///
/// The generator-only phase runs until disc_start; warmup_epochs must not exceed it.
struct TrainSchedule {
  int warmup_epochs = 10;
  int disc_start_epoch = 10;
  int reg_start_epoch = 24;
  int total_epochs = 40;
  std::string unit = "epochs";

  bool in_steps() const { return unit == "steps"; }
  void validate() const;
};

struct OptimConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 2;

  void validate() const;
};

/// Ablation switches: registration phase, CLAHE on the SLO input, perceptual terms, feature matching.
struct AblationFlags {
  bool rm = true;
  bool ims = true;
  bool vgg = true;
  bool fm = true;

  std::string label() const;
  bool operator==(const AblationFlags&) const = default;
};

struct DataConfig {
  Index crop_h = 64;
  Index crop_w = 64;
  int n_crops = 1;
  TileGrid clahe_grid{8, 8};
  double clahe_clip = 2.0;
  double train_fraction = 0.7;
};

struct TrainConfig {
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  RegistrationConfig registration;
  LossWeights weights;
  TrainSchedule schedule;
  OptimConfig optim;
  AblationFlags flags;
  DataConfig data;
  std::string extractor = "surrogate";  // surrogate | vgg19
  bool literal_adversarial = false;
  std::uint64_t seed = 0;
  bool deterministic = true;
  int checkpoint_every = 0;  // epochs (or steps in step mode); 0 = final only
  int log_every = 1;         // steps

  void validate() const;
};

/// Full JSON form with every key present.
nlohmann::json to_json(const TrainConfig& cfg);

/// Parses a (possibly partial) config over defaults; unknown keys at any level throw ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j);

/// SHA-256 of the canonical JSON form.
std::string config_digest(const TrainConfig& cfg);

/// Desk-scale preset: small widths so a few hundred steps on 64x64 pairs fit in minutes on one core.
TrainConfig desk_config(std::uint64_t seed);

}  // namespace angio
