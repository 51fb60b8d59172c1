#pragma once

#include "angio/data/preprocess.hpp"
#include "angio/random.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace angio {

enum class PairSource { kReal, kSynthetic };

struct RawPair {
  std::string id;
  Image slo;  // (1,3,H,W)
  Image fa;   // (1,1,H,W)
  PairSource source = PairSource::kSynthetic;

  void validate() const;
};

struct CropOrigin {
  Index row = 0;
  Index col = 0;
  bool operator==(const CropOrigin&) const = default;
};

struct PatchPair {
  std::string parent_id;
  CropOrigin crop_origin;  // in the (possibly flipped) parent frame
  bool flipped = false;
  Image slo_patch;
  Image fa_patch;
};

/// Metadata of a planned patch, without pixels.
struct PatchRecord {
  std::string parent_id;
  CropOrigin crop_origin;
  bool flipped = false;
};

enum class Split { kTrain, kTest };

struct ManifestEntry {
  std::string id;
  std::string slo;         // paths relative to the dataset root
  std::string fa;
  std::string fa_aligned;  // clean target when the stored fa carries injected misalignment
  std::string mask;
  std::string field;
};

struct DatasetManifest {
  std::vector<ManifestEntry> pairs;
  std::map<std::string, Split> split;
  std::uint64_t seed = 0;

  std::vector<std::string> ids(Split which) const;
  const ManifestEntry& entry(const std::string& id) const;
  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
};

/// Random horizontal flip, then a crop whose rectangle always contains the image
/// centre pixel (H/2, W/2); the origin is uniform over all such rectangles. The same
/// transform applies to both modalities.
std::vector<PatchPair> augment_pair(const RawPair& pair, Index crop_h, Index crop_w, int n_crops, Rng& rng);

/// Same sampling as augment_pair, metadata only: per parent a stream derived from (seed, parent index).
std::vector<PatchRecord> plan_augmentation(const std::vector<std::string>& parent_ids, Index parent_h, Index parent_w,
                                           Index crop_h, Index crop_w, int n_crops, std::uint64_t seed);

/// Parent-level split: train count round(n * fraction) with halves rounding up, clamped to [1, n-1];
/// membership from a seeded shuffle of the ids in sorted order.
DatasetManifest split_dataset(const DatasetManifest& manifest, double train_fraction, std::uint64_t seed);

/// Reads root/manifest.json.
DatasetManifest load_manifest(const std::string& root);
void save_manifest(const std::string& root, const DatasetManifest& manifest);

/// Loads one pair; `aligned` selects fa_aligned when present.
RawPair load_pair(const std::string& root, const ManifestEntry& entry, bool aligned = false);

/// Digest over the manifest and every referenced file.
std::string dataset_digest(const std::string& root, const DatasetManifest& manifest);

}  // namespace angio
