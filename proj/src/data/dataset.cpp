#include "angio/data/dataset.hpp"
#include "angio/io/digest.hpp"
#include "angio/io/png.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace angio {

void RawPair::validate() const {
  if (slo.c() != 3 || fa.c() != 1) throw ShapeError("pair " + id + ": expected 3-channel SLO and 1-channel FA");
  if (slo.h() != fa.h() || slo.w() != fa.w()) {
    throw ShapeError("pair " + id + ": SLO " + slo.shape().str() + " and FA " + fa.shape().str() + " differ");
  }
  check_unit_range(slo, ("pair " + id + " slo").c_str());
  check_unit_range(fa, ("pair " + id + " fa").c_str());
}

namespace {

// Origins along one axis such that [o, o+len) lies inside [0, extent) and contains `centre`.
std::pair<Index, Index> origin_range(Index extent, Index len) {
  const Index centre = extent / 2;
  return {std::max<Index>(0, centre - len + 1), std::min(extent - len, centre)};
}

PatchRecord sample_patch(const std::string& id, Index h, Index w, Index ch, Index cw, Rng& rng) {
  PatchRecord r;
  r.parent_id = id;
  r.flipped = rng.bernoulli(0.5);
  const auto [r0, r1] = origin_range(h, ch);
  const auto [c0, c1] = origin_range(w, cw);
  r.crop_origin.row = rng.uniform_int(r0, r1);
  r.crop_origin.col = rng.uniform_int(c0, c1);
  return r;
}

void check_crop(Index h, Index w, Index ch, Index cw, int n_crops) {
  if (ch < 1 || cw < 1 || ch > h || cw > w) {
    throw ConfigError("crop " + std::to_string(ch) + "x" + std::to_string(cw) + " does not fit parent " +
                      std::to_string(h) + "x" + std::to_string(w));
  }
  if (n_crops < 1) throw ConfigError("n_crops must be >= 1");
}

}  // namespace

std::vector<PatchPair> augment_pair(const RawPair& pair, Index crop_h, Index crop_w, int n_crops, Rng& rng) {
  pair.validate();
  check_crop(pair.fa.h(), pair.fa.w(), crop_h, crop_w, n_crops);
  std::vector<PatchPair> out;
  out.reserve(static_cast<size_t>(n_crops));
  std::optional<Image> slo_flip, fa_flip;
  for (int k = 0; k < n_crops; ++k) {
    const PatchRecord r = sample_patch(pair.id, pair.fa.h(), pair.fa.w(), crop_h, crop_w, rng);
    if (r.flipped && !slo_flip) {
      slo_flip = flip_horizontal(pair.slo);
      fa_flip = flip_horizontal(pair.fa);
    }
    const Image& s = r.flipped ? *slo_flip : pair.slo;
    const Image& f = r.flipped ? *fa_flip : pair.fa;
    out.push_back({r.parent_id, r.crop_origin, r.flipped, crop(s, r.crop_origin.row, r.crop_origin.col, crop_h, crop_w),
                   crop(f, r.crop_origin.row, r.crop_origin.col, crop_h, crop_w)});
  }
  return out;
}

std::vector<PatchRecord> plan_augmentation(const std::vector<std::string>& parent_ids, Index parent_h, Index parent_w,
                                           Index crop_h, Index crop_w, int n_crops, std::uint64_t seed) {
  check_crop(parent_h, parent_w, crop_h, crop_w, n_crops);
  std::vector<PatchRecord> out;
  out.reserve(parent_ids.size() * static_cast<size_t>(n_crops));
  for (size_t i = 0; i < parent_ids.size(); ++i) {
    Rng rng = Rng::derive(seed, i);
    for (int k = 0; k < n_crops; ++k) out.push_back(sample_patch(parent_ids[i], parent_h, parent_w, crop_h, crop_w, rng));
  }
  return out;
}

std::vector<std::string> DatasetManifest::ids(Split which) const {
  std::vector<std::string> out;
  for (const auto& p : pairs) {
    auto it = split.find(p.id);
    if (it != split.end() && it->second == which) out.push_back(p.id);
  }
  return out;
}

const ManifestEntry& DatasetManifest::entry(const std::string& id) const {
  for (const auto& p : pairs)
    if (p.id == id) return p;
  throw std::out_of_range("manifest has no pair '" + id + "'");
}

nlohmann::json DatasetManifest::to_json() const {
  nlohmann::json jp = nlohmann::json::array();
  for (const auto& p : pairs) {
    nlohmann::json e = {{"id", p.id}, {"slo", p.slo}, {"fa", p.fa}};
    if (!p.fa_aligned.empty()) e["fa_aligned"] = p.fa_aligned;
    if (!p.mask.empty()) e["mask"] = p.mask;
    if (!p.field.empty()) e["field"] = p.field;
    jp.push_back(e);
  }
  nlohmann::json js = nlohmann::json::object();
  for (const auto& [id, s] : split) js[id] = s == Split::kTrain ? "train" : "test";
  return {{"pairs", jp}, {"split", js}, {"seed", seed}};
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
  DatasetManifest m;
  for (const auto& e : j.at("pairs")) {
    ManifestEntry p;
    p.id = e.at("id").get<std::string>();
    p.slo = e.at("slo").get<std::string>();
    p.fa = e.at("fa").get<std::string>();
    p.fa_aligned = e.value("fa_aligned", "");
    p.mask = e.value("mask", "");
    p.field = e.value("field", "");
    m.pairs.push_back(std::move(p));
  }
  const nlohmann::json split = j.value("split", nlohmann::json::object());
  for (const auto& [id, v] : split.items()) {
    const auto s = v.get<std::string>();
    if (s != "train" && s != "test") throw std::invalid_argument("manifest split for " + id + " is '" + s + "'");
    m.split[id] = s == "train" ? Split::kTrain : Split::kTest;
  }
  m.seed = j.value("seed", std::uint64_t{0});
  return m;
}

DatasetManifest split_dataset(const DatasetManifest& manifest, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0 && train_fraction < 1)) throw ConfigError("train_fraction must be in (0,1)");
  const Index n = static_cast<Index>(manifest.pairs.size());
  if (n < 2) throw ConfigError("split needs at least 2 pairs, got " + std::to_string(n));
  std::vector<std::string> ids;
  for (const auto& p : manifest.pairs) ids.push_back(p.id);
  std::sort(ids.begin(), ids.end());
  Rng rng(seed);
  rng.shuffle(ids);
  const Index n_train = std::clamp<Index>(static_cast<Index>(std::floor(n * train_fraction + 0.5)), 1, n - 1);
  DatasetManifest out = manifest;
  out.split.clear();
  out.seed = seed;
  for (Index i = 0; i < n; ++i) out.split[ids[static_cast<size_t>(i)]] = i < n_train ? Split::kTrain : Split::kTest;
  return out;
}

DatasetManifest load_manifest(const std::string& root) {
  const auto path = std::filesystem::path(root) / "manifest.json";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("no manifest at " + path.string());
  return DatasetManifest::from_json(nlohmann::json::parse(in));
}

void save_manifest(const std::string& root, const DatasetManifest& manifest) {
  std::filesystem::create_directories(root);
  std::ofstream out(std::filesystem::path(root) / "manifest.json");
  out << manifest.to_json().dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write manifest under " + root);
}

RawPair load_pair(const std::string& root, const ManifestEntry& e, bool aligned) {
  const auto base = std::filesystem::path(root);
  RawPair p;
  p.id = e.id;
  p.slo = read_png((base / e.slo).string());
  p.fa = read_png((base / (aligned && !e.fa_aligned.empty() ? e.fa_aligned : e.fa)).string());
  if (p.slo.c() == 1) {
    Image rgb(Shape{1, 3, p.slo.h(), p.slo.w()});
    for (Index c = 0; c < 3; ++c) rgb.plane(0, c) = p.slo.plane(0, 0);
    p.slo = std::move(rgb);
  }
  if (p.fa.c() == 3) {
    Image g(Shape{1, 1, p.fa.h(), p.fa.w()});
    g.plane(0, 0) = (p.fa.plane(0, 0) + p.fa.plane(0, 1) + p.fa.plane(0, 2)) / 3.0f;
    p.fa = std::move(g);
  }
  p.validate();
  return p;
}

std::string dataset_digest(const std::string& root, const DatasetManifest& manifest) {
  Sha256 h;
  h.update(manifest.to_json().dump());
  const auto base = std::filesystem::path(root);
  for (const auto& e : manifest.pairs) {
    for (const auto* rel : {&e.slo, &e.fa, &e.fa_aligned, &e.mask, &e.field}) {
      if (rel->empty()) continue;
      h.update(*rel);
      h.update(sha256_file((base / *rel).string()));
    }
  }
  return h.hex_digest();
}

}  // namespace angio
