#include "angio/eval/evaluate.hpp"
#include "angio/io/png.hpp"
#include "angio/study/http.hpp"
#include "angio/train/checkpoint.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace angio;

namespace {

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  return json::parse(in);
}

void write_json_file(const std::string& path, const json& j) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write " + path);
}

// Preset defaults, then the file's keys on top; unknown keys fail in train_config_from_json.
TrainConfig load_config(const std::string& preset, const std::string& path, std::optional<std::uint64_t> seed) {
  json base;
  if (preset == "desk") {
    base = to_json(desk_config(0));
  } else if (preset == "default") {
    base = to_json(TrainConfig{});
  } else {
    throw ConfigError("unknown preset '" + preset + "' (desk or default)");
  }
  if (!path.empty()) base.merge_patch(read_json_file(path));
  if (seed) base["seed"] = *seed;
  TrainConfig cfg = train_config_from_json(base);
  cfg.validate();
  return cfg;
}

std::string run_dir_for(const std::string& runs, const TrainConfig& cfg) {
  const std::string dir = runs + "/" + config_digest(cfg);
  for (const char* sub : {"checkpoints", "logs", "reports", "samples"}) fs::create_directories(dir + "/" + sub);
  return dir;
}

struct Common {
  std::string preset = "desk";
  std::string config;
  std::string runs = "runs";
};

void add_config_flags(CLI::App* cmd, Common& c, std::optional<std::uint64_t>& seed) {
  cmd->add_option("--config", c.config, "JSON config; keys over the preset")->check(CLI::ExistingFile);
  cmd->add_option("--preset", c.preset, "desk | default")->capture_default_str();
  cmd->add_option("--seed", seed, "overrides the config seed");
  cmd->add_option("--runs", c.runs, "run directory root")->capture_default_str();
}

MisalignmentSpec misalignment_of(double translation, double rotation, double elastic) {
  MisalignmentSpec m;
  m.max_translation_px = translation;
  m.max_rotation_deg = rotation;
  m.elastic_sigma_px = elastic;
  if (translation > 0 || rotation > 0 || elastic > 0) m.level_label = "custom";
  m.validate();
  return m;
}

StudyHttpServer* g_server = nullptr;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"angio: SLO to FA translation"};
  app.require_subcommand(1);

  // synth-data
  auto* synth_cmd = app.add_subcommand("synth-data", "render a synthetic paired dataset");
  SynthConfig synth;
  int size = 128;
  double train_fraction = 0.7, translation = 0, rotation = 0, elastic = 0;
  std::string synth_out;
  synth_cmd->add_option("--out", synth_out, "dataset directory")->required();
  synth_cmd->add_option("--pairs", synth.n_pairs)->capture_default_str();
  synth_cmd->add_option("--size", size, "square image side")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
  synth_cmd->add_option("--train-fraction", train_fraction)->capture_default_str();
  synth_cmd->add_option("--max-translation", translation, "injected FA misalignment, px");
  synth_cmd->add_option("--max-rotation", rotation, "degrees");
  synth_cmd->add_option("--elastic-sigma", elastic, "px");

  // train
  auto* train_cmd = app.add_subcommand("train", "train on a dataset");
  Common train_c;
  std::optional<std::uint64_t> train_seed;
  std::string train_data, resume;
  add_config_flags(train_cmd, train_c, train_seed);
  train_cmd->add_option("--data", train_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--resume", resume, "checkpoint to continue from")->check(CLI::ExistingFile);

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "synthesize FA from SLO");
  std::string gen_ckpt, gen_in, gen_out, gen_data, gen_runs = "runs";
  gen_cmd->add_option("--checkpoint", gen_ckpt)->required()->check(CLI::ExistingFile);
  auto* in_opt = gen_cmd->add_option("--input", gen_in, "SLO png")->check(CLI::ExistingFile);
  gen_cmd->add_option("--output", gen_out, "FA png (with --input)")->needs(in_opt);
  auto* data_opt = gen_cmd->add_option("--data", gen_data, "dataset; every test SLO goes to <run>/samples")
                       ->check(CLI::ExistingDirectory);
  in_opt->excludes(data_opt);
  gen_cmd->add_option("--runs", gen_runs)->capture_default_str();

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "score a checkpoint on the test split");
  std::string eval_ckpt, eval_data, eval_out, eval_runs = "runs";
  EvalOptions eval_opts;
  eval_cmd->add_option("--checkpoint", eval_ckpt)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", eval_data)->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--extractor", eval_opts.extractor, "surrogate | vgg19")->capture_default_str();
  eval_cmd->add_option("--psnr-cap", eval_opts.psnr_cap_db)->capture_default_str();
  eval_cmd->add_option("--max-scales", eval_opts.max_scales)->capture_default_str();
  eval_cmd->add_option("--out", eval_out, "report path (default <run>/reports/metrics.json)");
  eval_cmd->add_option("--runs", eval_runs)->capture_default_str();

  // ablate
  auto* abl_cmd = app.add_subcommand("ablate", "train and score the ablation suite");
  Common abl_c;
  std::optional<std::uint64_t> abl_seed;
  std::string suite = "table2";
  std::vector<std::uint64_t> seeds{1, 2, 3};
  SynthConfig abl_synth;
  int abl_size = 64;
  double abl_translation = 4, abl_rotation = 0, abl_elastic = 0, abl_fraction = 0.7;
  add_config_flags(abl_cmd, abl_c, abl_seed);
  abl_cmd->add_option("--suite", suite)->check(CLI::IsMember({"table2"}))->capture_default_str();
  abl_cmd->add_option("--seeds", seeds)->delimiter(',')->capture_default_str();
  abl_cmd->add_option("--pairs", abl_synth.n_pairs)->capture_default_str();
  abl_cmd->add_option("--size", abl_size)->capture_default_str();
  abl_cmd->add_option("--data-seed", abl_synth.seed)->capture_default_str();
  abl_cmd->add_option("--train-fraction", abl_fraction)->capture_default_str();
  abl_cmd->add_option("--max-translation", abl_translation)->capture_default_str();
  abl_cmd->add_option("--max-rotation", abl_rotation);
  abl_cmd->add_option("--elastic-sigma", abl_elastic);

  // study-serve
  auto* study_cmd = app.add_subcommand("study-serve", "host the reader study");
  std::string study_state = "study_state", study_data, study_ckpt, study_static, host = "127.0.0.1";
  int port = 8080;
  study_cmd->add_option("--state", study_state, "journal directory")->capture_default_str();
  study_cmd->add_option("--data", study_data, "dataset whose test split is sampled")->check(CLI::ExistingDirectory);
  study_cmd->add_option("--checkpoint", study_ckpt, "generator for the synthetic FA")->check(CLI::ExistingFile);
  study_cmd->add_option("--static", study_static, "UI bundle served at /")->check(CLI::ExistingDirectory);
  study_cmd->add_option("--host", host)->capture_default_str();
  study_cmd->add_option("--port", port)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth_cmd) {
      synth.height = synth.width = size;
      synth.validate();
      const auto manifest =
          write_synth_dataset(synth_out, synth, train_fraction, misalignment_of(translation, rotation, elastic));
      std::cout << "dataset " << synth_out << " pairs " << manifest.pairs.size() << " digest "
                << dataset_digest(synth_out, manifest) << "\n";
    } else if (*train_cmd) {
      TrainConfig cfg = load_config(train_c.preset, train_c.config, train_seed);
      const std::string run = run_dir_for(train_c.runs, cfg);
      write_json_file(run + "/config.json", to_json(cfg));
      const auto manifest = load_manifest(train_data);
      const TrainData data = prepare_train_data(train_data, manifest, cfg);
      std::cout << "run " << run << " patches " << data.slo.size() << "\n";
      RunOptions opts;
      opts.run_dir = run;
      opts.resume_from = resume;
      run_training(cfg, data, opts);
      const std::string ckpt = run + "/checkpoints/final.ckpt";
      std::cout << "checkpoint " << ckpt << " digest " << checkpoint_digest(ckpt) << "\n";
    } else if (*gen_cmd) {
      auto state = load_checkpoint(gen_ckpt);
      const TrainConfig& cfg = state->config();
      if (!gen_in.empty()) {
        if (gen_out.empty()) gen_out = fs::path(gen_in).stem().string() + "_fa.png";
        write_png(gen_out, generate(state->generator(), read_png(gen_in), cfg));
        std::cout << gen_out << "\n";
      } else if (!gen_data.empty()) {
        const std::string dir = run_dir_for(gen_runs, cfg) + "/samples";
        const auto manifest = load_manifest(gen_data);
        for (const auto& id : manifest.ids(Split::kTest)) {
          const RawPair p = load_pair(gen_data, manifest.entry(id));
          write_png(dir + "/" + id + ".png", generate(state->generator(), p.slo, cfg));
        }
        std::cout << dir << "\n";
      } else {
        throw std::invalid_argument("generate needs --input or --data");
      }
    } else if (*eval_cmd) {
      const MetricsReport r = evaluate_model(eval_ckpt, eval_data, eval_opts);
      if (eval_out.empty()) {
        eval_out = run_dir_for(eval_runs, load_checkpoint(eval_ckpt)->config()) + "/reports/metrics.json";
      }
      write_json_file(eval_out, r.to_json());
      std::cout << r.to_json().dump(2) << "\nreport " << eval_out << "\n";
    } else if (*abl_cmd) {
      AblationPlan plan;
      plan.base = load_config(abl_c.preset, abl_c.config, abl_seed);
      plan.seeds = seeds;
      abl_synth.height = abl_synth.width = abl_size;
      abl_synth.validate();
      plan.synth = abl_synth;
      plan.train_fraction = abl_fraction;
      plan.misalignment = misalignment_of(abl_translation, abl_rotation, abl_elastic);
      plan.out_dir = run_dir_for(abl_c.runs, plan.base) + "/reports/ablation";
      plan.on_row = [](const AblationRow& row) {
        std::cout << row.flags.label() << " seed " << row.seed << " psnr " << row.report.psnr_db << " ms_ssim "
                  << row.report.ms_ssim << " fid " << row.report.fid << std::endl;
      };
      run_ablation(plan);
      std::cout << "table " << plan.out_dir << "/ablation.csv\n";
    } else if (*study_cmd) {
      StudyService service(study_state);
      service.recover();
      StudyServerOptions opts;
      opts.static_dir = study_static;
      if (!study_data.empty() && !study_ckpt.empty()) {
        std::shared_ptr<TrainState> state = load_checkpoint(study_ckpt);
        opts.dataset_root = study_data;
        opts.image_dir = study_state + "/images";
        opts.generator = [state](const Image& slo) { return generate(state->generator(), slo, state->config()); };
      }
      StudyHttpServer server(service, opts);
      const int bound = server.bind(host, port);
      g_server = &server;
      std::signal(SIGINT, [](int) {
        if (g_server) g_server->stop();
      });
      std::cout << "listening on http://" << host << ":" << bound << std::endl;
      server.listen();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
