#include "angio/eval/evaluate.hpp"

#include "angio/train/checkpoint.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

namespace angio {

nlohmann::json MetricsReport::to_json() const {
  return {{"fid", fid},
          {"is_score", is_score},
          {"ms_ssim", ms_ssim},
          {"psnr_db", psnr_db},
          {"n_images", n_images},
          {"ms_ssim_scales", ms_ssim_scales},
          {"psnr_cap_db", psnr_cap_db},
          {"extractor", extractor},
          {"target", target},
          {"checkpoint_digest", checkpoint_digest},
          {"dataset_digest", dataset_digest}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.fid = j.at("fid").get<double>();
  r.is_score = j.at("is_score").get<double>();
  r.ms_ssim = j.at("ms_ssim").get<double>();
  r.psnr_db = j.at("psnr_db").get<double>();
  r.n_images = j.at("n_images").get<int>();
  r.ms_ssim_scales = j.at("ms_ssim_scales").get<int>();
  r.psnr_cap_db = j.at("psnr_cap_db").get<double>();
  r.extractor = j.at("extractor").get<std::string>();
  r.target = j.at("target").get<std::string>();
  r.checkpoint_digest = j.at("checkpoint_digest").get<std::string>();
  r.dataset_digest = j.at("dataset_digest").get<std::string>();
  return r;
}

MetricsReport evaluate_images(const std::vector<Image>& generated, const std::vector<Image>& truth,
                              const EvalOptions& opts) {
  if (generated.empty()) throw std::invalid_argument("evaluation needs at least one image");
  if (generated.size() != truth.size()) throw std::invalid_argument("generated and ground-truth counts differ");
  MetricsReport r;
  r.n_images = static_cast<int>(generated.size());
  r.psnr_cap_db = opts.psnr_cap_db;
  r.ms_ssim_scales = std::min(opts.max_scales, max_ms_ssim_scales(truth[0].h(), truth[0].w()));
  if (r.ms_ssim_scales < 1) throw ShapeError("images are smaller than the MS-SSIM window");
  for (size_t i = 0; i < generated.size(); ++i) {
    r.psnr_db += psnr(generated[i], truth[i], opts.psnr_cap_db);
    r.ms_ssim += ms_ssim(generated[i], truth[i], r.ms_ssim_scales);
  }
  r.psnr_db /= r.n_images;
  r.ms_ssim /= r.n_images;

  const auto embedder = make_embedder(opts.extractor);
  r.extractor = embedder->name();
  if (generated.size() >= 2) {
    r.fid = fid(embed_features(generated, *embedder), embed_features(truth, *embedder));
  }
  r.is_score = inception_score(embed_probs(generated, *embedder));
  return r;
}

MetricsReport evaluate_model(const Generator<float>& gen, const TrainConfig& cfg, const std::string& root,
                             const EvalOptions& opts) {
  const DatasetManifest manifest = load_manifest(root);
  const auto ids = manifest.ids(Split::kTest);
  if (ids.empty()) throw std::invalid_argument("dataset has an empty test split");
  std::vector<Image> generated, truth;
  bool aligned = false;
  for (const auto& id : ids) {
    const ManifestEntry& e = manifest.entry(id);
    const bool use_aligned = opts.aligned_targets && !e.fa_aligned.empty();
    aligned = aligned || use_aligned;
    RawPair p = load_pair(root, e, use_aligned);
    generated.push_back(generate(gen, p.slo, cfg));
    truth.push_back(std::move(p.fa));
  }
  MetricsReport r = evaluate_images(generated, truth, opts);
  r.target = aligned ? "fa_aligned" : "fa";
  r.dataset_digest = dataset_digest(root, manifest);
  return r;
}

MetricsReport evaluate_model(const std::string& checkpoint, const std::string& root, const EvalOptions& opts) {
  const auto state = load_checkpoint(checkpoint);
  MetricsReport r = evaluate_model(state->generator(), state->config(), root, opts);
  r.checkpoint_digest = checkpoint_digest(checkpoint);
  return r;
}

std::vector<AblationFlags> table2_suite() {
  return {{false, true, true, true}, {true, false, true, true}, {true, true, false, true}, {true, true, true, false},
          {true, true, true, true}};
}

std::vector<AblationRow> run_ablation(const AblationPlan& plan) {
  if (plan.suite.empty()) throw std::invalid_argument("ablation suite is empty");
  if (plan.seeds.empty()) throw std::invalid_argument("ablation needs at least one seed");
  if (plan.out_dir.empty()) throw std::invalid_argument("ablation needs an output directory");
  const std::string data_root = plan.out_dir + "/data";
  std::filesystem::create_directories(data_root);
  const DatasetManifest manifest = write_synth_dataset(data_root, plan.synth, plan.train_fraction, plan.misalignment);

  std::vector<AblationRow> rows;
  for (const auto& flags : plan.suite) {
    for (const auto seed : plan.seeds) {
      TrainConfig cfg = plan.base;
      cfg.flags = flags;
      cfg.seed = seed;
      cfg.validate();
      const TrainData data = prepare_train_data(data_root, manifest, cfg);
      const std::string run_dir = plan.out_dir + "/runs/" + flags.label() + "_s" + std::to_string(seed);
      RunOptions ro;
      ro.run_dir = run_dir;
      run_training(cfg, data, ro);
      AblationRow row{flags, seed, evaluate_model(run_dir + "/checkpoints/final.ckpt", data_root, plan.eval)};
      if (plan.on_row) plan.on_row(row);
      rows.push_back(std::move(row));
    }
  }
  write_ablation_csv(plan.out_dir + "/ablation.csv", rows);
  std::ofstream(plan.out_dir + "/ablation.json") << ablation_json(rows).dump(2) << '\n';
  return rows;
}

std::vector<std::pair<AblationFlags, double>> median_by_flags(const std::vector<AblationRow>& rows,
                                                              double MetricsReport::*metric) {
  std::vector<std::pair<AblationFlags, std::vector<double>>> groups;
  for (const auto& r : rows) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == r.flags; });
    if (it == groups.end()) {
      groups.push_back({r.flags, {}});
      it = groups.end() - 1;
    }
    it->second.push_back(r.report.*metric);
  }
  std::vector<std::pair<AblationFlags, double>> out;
  for (auto& [flags, v] : groups) {
    std::sort(v.begin(), v.end());
    const size_t m = v.size() / 2;
    out.emplace_back(flags, v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]));
  }
  return out;
}

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "rm,ims,vgg,fm,seed,fid,is,ms_ssim,psnr_db,n_images,extractor,checkpoint_digest\n";
  out.precision(10);
  for (const auto& r : rows) {
    out << r.flags.rm << ',' << r.flags.ims << ',' << r.flags.vgg << ',' << r.flags.fm << ',' << r.seed << ','
        << r.report.fid << ',' << r.report.is_score << ',' << r.report.ms_ssim << ',' << r.report.psnr_db << ','
        << r.report.n_images << ',' << r.report.extractor << ',' << r.report.checkpoint_digest << '\n';
  }
}

nlohmann::json ablation_json(const std::vector<AblationRow>& rows) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) {
    j.push_back({{"flags", {{"rm", r.flags.rm}, {"ims", r.flags.ims}, {"vgg", r.flags.vgg}, {"fm", r.flags.fm}}},
                 {"label", r.flags.label()},
                 {"seed", r.seed},
                 {"report", r.report.to_json()}});
  }
  return j;
}

}  // namespace angio
