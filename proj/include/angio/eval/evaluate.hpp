#pragma once

#include "angio/eval/metrics.hpp"
#include "angio/train/trainer.hpp"

namespace angio {

struct MetricsReport {
  double fid = 0;
  double is_score = 0;
  double ms_ssim = 0;
  double psnr_db = 0;
  int n_images = 0;
  int ms_ssim_scales = 0;
  double psnr_cap_db = kPsnrCapDb;
  std::string extractor;
  std::string target;  // "fa" or "fa_aligned"
  std::string checkpoint_digest;
  std::string dataset_digest;

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
};

struct EvalOptions {
  std::string extractor = "surrogate";
  double psnr_cap_db = kPsnrCapDb;
  int max_scales = 5;         // MS-SSIM uses min(this, what the image size allows)
  bool aligned_targets = true;  // score against fa_aligned when the dataset has it
};

/// Metrics of generated vs ground-truth FA images; PSNR and MS-SSIM are per-image means.
MetricsReport evaluate_images(const std::vector<Image>& generated, const std::vector<Image>& truth,
                              const EvalOptions& opts = {});

/// Generates FA for every test-split SLO and scores it. The generator is only run forward.
MetricsReport evaluate_model(const Generator<float>& gen, const TrainConfig& cfg, const std::string& dataset_root,
                             const EvalOptions& opts = {});

/// Same, loading the generator from a checkpoint; the report carries the checkpoint digest.
MetricsReport evaluate_model(const std::string& checkpoint, const std::string& dataset_root,
                             const EvalOptions& opts = {});

/// The five ablation rows: each of rm / ims / vgg / fm removed in turn, then the full model.
std::vector<AblationFlags> table2_suite();

struct AblationRow {
  AblationFlags flags;
  std::uint64_t seed = 0;
  MetricsReport report;
};

struct AblationPlan {
  TrainConfig base;
  std::vector<AblationFlags> suite = table2_suite();
  MisalignmentSpec misalignment;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  SynthConfig synth;
  double train_fraction = 0.7;
  std::string out_dir;  // data/, runs/<label>_s<seed>/, ablation.csv, ablation.json
  EvalOptions eval;
  std::function<void(const AblationRow&)> on_row;
};

/// Writes one misaligned synthetic dataset, trains one model per (flags, seed) with
/// everything else fixed, and scores each against the clean aligned FA.
std::vector<AblationRow> run_ablation(const AblationPlan& plan);

/// Median of a metric over seeds per flag set, in suite order.
std::vector<std::pair<AblationFlags, double>> median_by_flags(const std::vector<AblationRow>& rows,
                                                              double MetricsReport::*metric);

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows);
nlohmann::json ablation_json(const std::vector<AblationRow>& rows);

}  // namespace angio
