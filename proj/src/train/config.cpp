#include "angio/train/config.hpp"
#include "angio/io/digest.hpp"

#include <set>

namespace angio {

void TrainSchedule::validate() const {
  if (unit != "epochs" && unit != "steps") throw ConfigError("schedule.unit must be 'epochs' or 'steps'");
  if (!(0 <= warmup_epochs && warmup_epochs <= disc_start_epoch && disc_start_epoch <= reg_start_epoch &&
        reg_start_epoch <= total_epochs)) {
    throw ConfigError("schedule must satisfy 0 <= warmup <= disc_start <= reg_start <= total");
  }
  if (total_epochs < 1) throw ConfigError("schedule.total_epochs must be >= 1");
}

void OptimConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("optim.learning_rate must be > 0");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("optim betas must be in [0,1)");
  if (!(eps > 0)) throw ConfigError("optim.eps must be > 0");
  if (batch_size < 1) throw ConfigError("optim.batch_size must be >= 1");
}

std::string AblationFlags::label() const {
  auto b = [](bool v) { return v ? "1" : "0"; };
  return std::string("rm") + b(rm) + "_ims" + b(ims) + "_vgg" + b(vgg) + "_fm" + b(fm);
}

void TrainConfig::validate() const {
  generator.validate();
  discriminator.validate();
  registration.validate();
  weights.validate();
  schedule.validate();
  optim.validate();
  if (data.crop_h < 1 || data.crop_w < 1 || data.n_crops < 1) throw ConfigError("data crop settings must be positive");
  const Index div = std::max(generator.required_divisor(), registration.required_divisor());
  if (data.crop_h % div != 0 || data.crop_w % div != 0) {
    throw ConfigError("data crop dims must be divisible by " + std::to_string(div));
  }
  if (extractor != "surrogate" && extractor != "vgg19") throw ConfigError("extractor must be 'surrogate' or 'vgg19'");
  if (checkpoint_every < 0 || log_every < 1) throw ConfigError("checkpoint_every >= 0 and log_every >= 1 required");
}

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw ConfigError("unknown config key '" + (where.empty() ? k : where + "." + k) + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
  }
}

}  // namespace

json to_json(const TrainConfig& c) {
  return {
      {"generator",
       {{"base_channels", c.generator.base_channels},
        {"coarse_downs", c.generator.coarse_downs},
        {"fine_downs", c.generator.fine_downs},
        {"coarse_res_blocks", c.generator.coarse_res_blocks},
        {"fine_res_blocks", c.generator.fine_res_blocks},
        {"attention_enabled", c.generator.attention_enabled},
        {"channel_cap", c.generator.channel_cap}}},
      {"discriminator",
       {{"n_layers", c.discriminator.n_layers},
        {"base_channels", c.discriminator.base_channels},
        {"scales_fine", c.discriminator.scales_fine},
        {"scales_coarse", c.discriminator.scales_coarse},
        {"channel_cap", c.discriminator.channel_cap}}},
      {"registration",
       {{"stages", c.registration.stages},
        {"enc_blocks", c.registration.enc_blocks},
        {"dec_blocks", c.registration.dec_blocks},
        {"base_channels", c.registration.base_channels},
        {"channel_cap", c.registration.channel_cap},
        {"smoothness_weight", c.registration.smoothness_weight}}},
      {"weights",
       {{"lambda_fm_fine", c.weights.lambda_fm_fine},
        {"lambda_fm_coarse", c.weights.lambda_fm_coarse},
        {"lambda_vgg_fine", c.weights.lambda_vgg_fine},
        {"lambda_vgg_coarse", c.weights.lambda_vgg_coarse}}},
      {"schedule",
       {{"warmup_epochs", c.schedule.warmup_epochs},
        {"disc_start_epoch", c.schedule.disc_start_epoch},
        {"reg_start_epoch", c.schedule.reg_start_epoch},
        {"total_epochs", c.schedule.total_epochs},
        {"unit", c.schedule.unit}}},
      {"optim",
       {{"learning_rate", c.optim.learning_rate},
        {"beta1", c.optim.beta1},
        {"beta2", c.optim.beta2},
        {"eps", c.optim.eps},
        {"batch_size", c.optim.batch_size}}},
      {"flags", {{"rm", c.flags.rm}, {"ims", c.flags.ims}, {"vgg", c.flags.vgg}, {"fm", c.flags.fm}}},
      {"data",
       {{"crop_h", c.data.crop_h},
        {"crop_w", c.data.crop_w},
        {"n_crops", c.data.n_crops},
        {"clahe_grid", {c.data.clahe_grid.rows, c.data.clahe_grid.cols}},
        {"clahe_clip", c.data.clahe_clip},
        {"train_fraction", c.data.train_fraction}}},
      {"extractor", c.extractor},
      {"literal_adversarial", c.literal_adversarial},
      {"seed", c.seed},
      {"deterministic", c.deterministic},
      {"checkpoint_every", c.checkpoint_every},
      {"log_every", c.log_every},
  };
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  reject_unknown(j,
                 {"generator", "discriminator", "registration", "weights", "schedule", "optim", "flags", "data",
                  "extractor", "literal_adversarial", "seed", "deterministic", "checkpoint_every", "log_every"},
                 "");
  if (j.contains("generator")) {
    const auto& g = j["generator"];
    reject_unknown(g, {"base_channels", "coarse_downs", "fine_downs", "coarse_res_blocks", "fine_res_blocks",
                       "attention_enabled", "channel_cap"},
                   "generator");
    read(g, "base_channels", c.generator.base_channels);
    read(g, "coarse_downs", c.generator.coarse_downs);
    read(g, "fine_downs", c.generator.fine_downs);
    read(g, "coarse_res_blocks", c.generator.coarse_res_blocks);
    read(g, "fine_res_blocks", c.generator.fine_res_blocks);
    read(g, "attention_enabled", c.generator.attention_enabled);
    read(g, "channel_cap", c.generator.channel_cap);
  }
  if (j.contains("discriminator")) {
    const auto& d = j["discriminator"];
    reject_unknown(d, {"n_layers", "base_channels", "scales_fine", "scales_coarse", "channel_cap"}, "discriminator");
    read(d, "n_layers", c.discriminator.n_layers);
    read(d, "base_channels", c.discriminator.base_channels);
    read(d, "scales_fine", c.discriminator.scales_fine);
    read(d, "scales_coarse", c.discriminator.scales_coarse);
    read(d, "channel_cap", c.discriminator.channel_cap);
  }
  if (j.contains("registration")) {
    const auto& r = j["registration"];
    reject_unknown(r, {"stages", "enc_blocks", "dec_blocks", "base_channels", "channel_cap", "smoothness_weight"},
                   "registration");
    read(r, "stages", c.registration.stages);
    read(r, "enc_blocks", c.registration.enc_blocks);
    read(r, "dec_blocks", c.registration.dec_blocks);
    read(r, "base_channels", c.registration.base_channels);
    read(r, "channel_cap", c.registration.channel_cap);
    read(r, "smoothness_weight", c.registration.smoothness_weight);
  }
  if (j.contains("weights")) {
    const auto& w = j["weights"];
    reject_unknown(w, {"lambda_fm_fine", "lambda_fm_coarse", "lambda_vgg_fine", "lambda_vgg_coarse"}, "weights");
    read(w, "lambda_fm_fine", c.weights.lambda_fm_fine);
    read(w, "lambda_fm_coarse", c.weights.lambda_fm_coarse);
    read(w, "lambda_vgg_fine", c.weights.lambda_vgg_fine);
    read(w, "lambda_vgg_coarse", c.weights.lambda_vgg_coarse);
  }
  if (j.contains("schedule")) {
    const auto& s = j["schedule"];
    reject_unknown(s, {"warmup_epochs", "disc_start_epoch", "reg_start_epoch", "total_epochs", "unit"}, "schedule");
    read(s, "warmup_epochs", c.schedule.warmup_epochs);
    read(s, "disc_start_epoch", c.schedule.disc_start_epoch);
    read(s, "reg_start_epoch", c.schedule.reg_start_epoch);
    read(s, "total_epochs", c.schedule.total_epochs);
    read(s, "unit", c.schedule.unit);
  }
  if (j.contains("optim")) {
    const auto& o = j["optim"];
    reject_unknown(o, {"learning_rate", "beta1", "beta2", "eps", "batch_size"}, "optim");
    read(o, "learning_rate", c.optim.learning_rate);
    read(o, "beta1", c.optim.beta1);
    read(o, "beta2", c.optim.beta2);
    read(o, "eps", c.optim.eps);
    read(o, "batch_size", c.optim.batch_size);
  }
  if (j.contains("flags")) {
    const auto& f = j["flags"];
    reject_unknown(f, {"rm", "ims", "vgg", "fm"}, "flags");
    read(f, "rm", c.flags.rm);
    read(f, "ims", c.flags.ims);
    read(f, "vgg", c.flags.vgg);
    read(f, "fm", c.flags.fm);
  }
  if (j.contains("data")) {
    const auto& d = j["data"];
    reject_unknown(d, {"crop_h", "crop_w", "n_crops", "clahe_grid", "clahe_clip", "train_fraction"}, "data");
    read(d, "crop_h", c.data.crop_h);
    read(d, "crop_w", c.data.crop_w);
    read(d, "n_crops", c.data.n_crops);
    if (d.contains("clahe_grid")) {
      const auto g = d["clahe_grid"].get<std::vector<Index>>();
      if (g.size() != 2) throw ConfigError("data.clahe_grid must be [rows, cols]");
      c.data.clahe_grid = {g[0], g[1]};
    }
    read(d, "clahe_clip", c.data.clahe_clip);
    read(d, "train_fraction", c.data.train_fraction);
  }
  read(j, "extractor", c.extractor);
  read(j, "literal_adversarial", c.literal_adversarial);
  read(j, "seed", c.seed);
  read(j, "deterministic", c.deterministic);
  read(j, "checkpoint_every", c.checkpoint_every);
  read(j, "log_every", c.log_every);
  c.validate();
  return c;
}

std::string config_digest(const TrainConfig& cfg) { return sha256_hex(to_json(cfg).dump()); }

TrainConfig desk_config(std::uint64_t seed) {
  TrainConfig c;
  c.generator.base_channels = 8;
  c.discriminator.base_channels = 8;
  c.registration.base_channels = 8;
  c.schedule = {100, 100, 200, 300, "steps"};
  c.optim.batch_size = 4;
  c.data = {64, 64, 1, {8, 8}, 2.0, 0.7};
  c.seed = seed;
  return c;
}

}  // namespace angio
