#pragma once

#include "angio/data/dataset.hpp"

namespace angio {

struct IntRange {
  int lo = 0;
  int hi = 0;
};

struct SynthConfig {
  int n_pairs = 64;
  Index height = 128;
  Index width = 128;
  IntRange vessel_branches{4, 7};  // root vessels leaving the disc
  IntRange lesion_count{1, 4};
  std::uint64_t seed = 7;

  void validate() const;
};

/// A rendered pair plus the vessel masks each modality's renderer painted.
struct SynthPair {
  RawPair pair;
  Image slo_vessel_mask;  // (1,1,H,W) in {0,1}
  Image fa_vessel_mask;
};

/// Procedural SLO/FA pairs: a branching vessel tree inside an elliptical fundus
/// field. The SLO shows dark vessels on a speckled reddish background; the FA shows
/// the same vessels bright on dark with hyper/hypo-fluorescent lesion blobs.
/// Pair i uses a stream derived from (seed, i), so any subset renders identically.
std::vector<SynthPair> synth_generate(const SynthConfig& cfg);

struct MisalignmentSpec {
  double max_translation_px = 0;
  double max_rotation_deg = 0;
  double elastic_sigma_px = 0;
  std::string level_label = "none";

  void validate() const;
};

/// Correlation length (Gaussian sigma, pixels) of the elastic component.
inline constexpr double kElasticSmoothingPx = 8.0;

/// Displacement (1,2,H,W), (dy, dx): rotation about the image centre by a uniform angle in
/// [-max_rot, max_rot], a translation of uniform direction and magnitude in [0, max_translation],
/// plus Gaussian-smoothed noise rescaled to per-component std elastic_sigma.
Tensor<float> sample_misalignment(const MisalignmentSpec& spec, Index h, Index w, Rng& rng);

Tensor<float> translation_field(Index h, Index w, double dy, double dx);

/// noisy(p) = img(p + field(p)), bilinear with edge replication.
Image apply_field(const Image& img, const Tensor<float>& field);

/// Fixed-point inverse e with e(q) = -d(q + e(q)); warping by e undoes warping by d.
Tensor<float> invert_field(const Tensor<float>& field, int iterations = 20);

struct MisalignedPair {
  RawPair pair;               // SLO untouched, FA resampled
  Tensor<float> field;        // ground truth displacement
};

MisalignedPair inject_misalignment(const RawPair& pair, const MisalignmentSpec& spec, Rng& rng);

/// Writes a synthetic dataset under root (slo/, fa/, masks/, optional fa_aligned/ and fields/)
/// with a split, and returns its manifest.
DatasetManifest write_synth_dataset(const std::string& root, const SynthConfig& cfg, double train_fraction,
                                    const MisalignmentSpec& misalignment = {});

}  // namespace angio
