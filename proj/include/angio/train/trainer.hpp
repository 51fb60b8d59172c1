#pragma once

#include "angio/train/adam.hpp"
#include "angio/train/config.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>

namespace angio {

enum class Phase { kWarmup, kAdversarial, kFull };
const char* phase_name(Phase p);

/// Raised when a loss component turns non-finite.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A mini-batch in network range [-1,1]: condition (N,3,H,W), target (N,1,H,W).
struct Batch {
  Tensor<float> condition;
  Tensor<float> target;
};

/// Builds a batch from [0,1] patches (SLO 3-channel, FA 1-channel).
Batch make_batch(const std::vector<const Image*>& slo, const std::vector<const Image*>& fa);

struct StepResult {
  Phase phase;
  std::map<std::string, double> generator;      // weighted terms + "total"
  std::optional<double> discriminator;          // adversarial phases only
};

/// All trainable networks, their optimizers, and the schedule position.
class TrainState {
 public:
  explicit TrainState(const TrainConfig& cfg);

  const TrainConfig& config() const { return cfg_; }
  Generator<float>& generator() { return *gen_; }
  const Generator<float>& generator() const { return *gen_; }
  MultiScaleDiscriminator<float>& disc_fine() { return *disc_f_; }
  MultiScaleDiscriminator<float>& disc_coarse() { return *disc_c_; }
  RegistrationNet<float>& psi() { return *psi_; }
  /// Created on first use so inference never needs extractor assets.
  const FeatureExtractor<float>* perceptual_extractor();

  /// Parameter groups by checkpoint name: coarse_gen, fine_gen, disc_f1, disc_f2, disc_c, psi.
  std::vector<std::pair<std::string, ParameterList<float>*>> groups();
  Adam<float>& optimizer(const std::string& group) { return optims_.at(group); }

  /// Phase for a schedule position (epoch, or step in step mode).
  Phase phase_at(long long epoch, long long step) const;

  long long step = 0;   // optimizer steps taken
  long long epoch = 0;  // completed epochs
  long long batch_in_epoch = 0;

 private:
  TrainConfig cfg_;
  std::unique_ptr<Generator<float>> gen_;
  std::unique_ptr<MultiScaleDiscriminator<float>> disc_f_;
  std::unique_ptr<MultiScaleDiscriminator<float>> disc_c_;
  std::unique_ptr<RegistrationNet<float>> psi_;
  std::shared_ptr<FeatureExtractor<float>> extractor_;
  std::map<std::string, Adam<float>> optims_;

  friend StepResult train_step(TrainState&, const Batch&, Phase);
};

/// One optimization step: discriminators first (adversarial phases), then generators
/// (and the registration net in the full phase).
StepResult train_step(TrainState& state, const Batch& batch, Phase phase);

/// Generator objective of an adversarial or full phase on a batch, evaluated without any update.
std::map<std::string, double> generator_objective(TrainState& state, const Batch& batch, Phase phase);

/// SHA-256 over a parameter group's values, for phase-gating checks.
std::string group_digest(const ParameterList<float>& params);

struct TrainData {
  std::vector<Image> slo;  // [0,1] patches, CLAHE already applied when flags.ims
  std::vector<Image> fa;
};

/// Loads the train split of a dataset and expands it with augment_pair.
TrainData prepare_train_data(const std::string& dataset_root, const DatasetManifest& manifest, const TrainConfig& cfg);

struct RunOptions {
  std::string run_dir;                  // checkpoints/ and logs/ go here; empty = no files
  std::optional<long long> stop_after;  // stop once this many steps are done (for interruption tests)
  std::string resume_from;              // checkpoint path
  std::function<void(TrainState&, const StepResult&)> on_step;
};

/// Runs the schedule over `data`; writes a JSON-lines log and checkpoints under run_dir.
/// Returns the final state.
std::unique_ptr<TrainState> run_training(const TrainConfig& cfg, const TrainData& data, const RunOptions& opts = {});

/// Generator inference on a [0,1] SLO of any size: optional CLAHE, edge padding to the
/// generator divisor, forward, crop, rescale to [0,1].
Image generate(const Generator<float>& gen, const Image& slo, const TrainConfig& cfg);

}  // namespace angio
