#include "angio/train/checkpoint.hpp"
#include "angio/io/container.hpp"
#include "angio/io/digest.hpp"

namespace angio {

namespace {

NamedTensor to_named(const std::string& name, const Tensor<float>& t) {
  const Shape s = t.shape();
  return {name, {s.n, s.c, s.h, s.w}, t.array()};
}

void assign(const NamedTensor& src, Tensor<float>& dst, const std::string& path) {
  const Shape s = dst.shape();
  if (src.shape != std::vector<Index>{s.n, s.c, s.h, s.w}) {
    throw LoadError(path + ": tensor '" + src.name + "' does not match the configured architecture");
  }
  dst.array() = src.data;
}

}  // namespace

void save_checkpoint(const std::string& path, TrainState& state, const nlohmann::json& extra_meta) {
  TensorFile f;
  nlohmann::json adam_t = nlohmann::json::object();
  for (auto& [group, params] : state.groups()) {
    auto& opt = state.optimizer(group);
    adam_t[group] = opt.t();
    const auto& items = params->items();
    for (size_t i = 0; i < items.size(); ++i) {
      const std::string base = group + "/" + items[i].name;
      f.tensors.push_back(to_named(base, items[i].var.value()));
      f.tensors.push_back(to_named(base + "#m", opt.first_moments()[i]));
      f.tensors.push_back(to_named(base + "#v", opt.second_moments()[i]));
    }
  }
  const auto& cfg = state.config();
  f.meta = {{"kind", "angio-checkpoint"},
            {"checkpoint_version", kCheckpointVersion},
            {"config", to_json(cfg)},
            {"config_digest", config_digest(cfg)},
            {"step", state.step},
            {"epoch", state.epoch},
            {"batch_in_epoch", state.batch_in_epoch},
            {"adam_t", adam_t},
            // All training randomness is derived from (seed, epoch); this is the full generator state.
            {"rng_state", {{"seed", cfg.seed}, {"epoch", state.epoch}}},
            {"extra", extra_meta}};
  write_tensor_file(path, f);
}

std::unique_ptr<TrainState> load_checkpoint(const std::string& path) {
  const TensorFile f = read_tensor_file(path);
  if (f.meta.value("kind", "") != "angio-checkpoint") throw LoadError(path + ": not a checkpoint");
  if (f.meta.value("checkpoint_version", 0) != kCheckpointVersion) throw LoadError(path + ": unsupported checkpoint version");
  TrainConfig cfg;
  try {
    cfg = train_config_from_json(f.meta.at("config"));
  } catch (const std::exception& e) {
    throw LoadError(path + ": stored config invalid: " + e.what());
  }
  if (config_digest(cfg) != f.meta.value("config_digest", "")) throw LoadError(path + ": config digest mismatch");

  auto state = std::make_unique<TrainState>(cfg);
  for (auto& [group, params] : state->groups()) {
    auto& opt = state->optimizer(group);
    opt.set_t(f.meta.at("adam_t").at(group).get<long long>());
    auto& items = params->items();
    for (size_t i = 0; i < items.size(); ++i) {
      const std::string base = group + "/" + items[i].name;
      assign(f.get(base), items[i].var.mutable_value(), path);
      assign(f.get(base + "#m"), opt.first_moments()[i], path);
      assign(f.get(base + "#v"), opt.second_moments()[i], path);
    }
  }
  state->step = f.meta.at("step").get<long long>();
  state->epoch = f.meta.at("epoch").get<long long>();
  state->batch_in_epoch = f.meta.at("batch_in_epoch").get<long long>();
  return state;
}

std::string checkpoint_digest(const std::string& path) { return sha256_file(path); }

}  // namespace angio
