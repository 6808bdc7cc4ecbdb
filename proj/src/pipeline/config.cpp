#include <fstream>
#include <set>

#include "json.hpp"
#include "sfield/pipeline.hpp"

namespace sfield::pipeline {

namespace {

using nlohmann::json;

// strict field reader: every key must be consumed
class Section {
 public:
  Section(const json& j, const std::string& name) : j_(j), name_(name) {
    if (!j.is_object())
      throw ConfigError("config section '" + name + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + name_ + "." + key + "': " + e.what());
    }
  }

  json sub(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? json::object() : *it;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key))
        throw ConfigError("unknown config key '" + name_ + "." + key + "'");
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

}  // namespace

RunConfig RunConfig::load(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in.good())
    throw ConfigError("cannot open config file " + json_path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + json_path.string() + ": " +
                      e.what());
  }

  RunConfig cfg;
  Section root(j, "");
  root.read("seed", cfg.seed);
  std::string mode = mode_name(cfg.model.mode);
  {
    Section m(root.sub("model"), "model");
    m.read("mode", mode);
    m.read("latent_width", cfg.model.latent_width);
    m.read("slot_capacity", cfg.model.slot_capacity);
    m.read("plane_resolution", cfg.model.plane_resolution);
    m.read("plane_channels", cfg.model.plane_channels);
    m.read("template_subdivisions", cfg.model.template_subdivisions);
    m.read("voxel_resolution", cfg.model.voxel_resolution);
    m.read("tf_layers", cfg.model.tf_layers);
    m.read("tf_heads", cfg.model.tf_heads);
    m.read("tf_width", cfg.model.tf_width);
    m.read("pe_bands", cfg.model.pe_bands);
    m.finish();
  }
  try {
    cfg.model.mode = mode_from_name(mode);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  {
    Section t(root.sub("train"), "train");
    t.read("lr", cfg.train.lr);
    t.read("weight_decay", cfg.train.weight_decay);
    t.read("batch", cfg.train.batch);
    t.read("steps", cfg.train.steps);
    t.read("checkpoint_every", cfg.train.checkpoint_every);
    t.read("overfit_one", cfg.train.overfit_one);
    t.finish();
  }
  {
    Section r(root.sub("render"), "render");
    r.read("train_resolution", cfg.render.train_resolution);
    r.read("metric_resolution", cfg.render.metric_resolution);
    r.read("camera_radius", cfg.render.camera_radius);
    r.read("fov_deg", cfg.render.fov_deg);
    r.read("temperature", cfg.render.temperature);
    r.read("depth_sharpness", cfg.render.depth_sharpness);
    r.finish();
  }
  {
    Section s(root.sub("synth"), "synth");
    s.read("archetypes", cfg.synth.archetypes);
    s.read("min_objects", cfg.synth.min_objects);
    s.read("max_objects", cfg.synth.max_objects);
    s.read("train_count", cfg.synth.train_count);
    s.read("eval_count", cfg.synth.eval_count);
    s.read("styles_per_category", cfg.synth.styles_per_category);
    s.finish();
  }
  {
    Section p(root.sub("paths"), "paths");
    p.read("dataset", cfg.paths.dataset);
    p.read("checkpoint", cfg.paths.checkpoint);
    p.read("out", cfg.paths.out);
    p.finish();
  }
  {
    Section r(root.sub("retrieval"), "retrieval");
    r.read("category_filter", cfg.retrieval_category_filter);
    r.finish();
  }
  root.finish();
  return cfg;
}

std::string RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["model"] = {{"mode", mode_name(model.mode)},
                {"latent_width", model.latent_width},
                {"slot_capacity", model.slot_capacity},
                {"plane_resolution", model.plane_resolution},
                {"plane_channels", model.plane_channels},
                {"template_subdivisions", model.template_subdivisions},
                {"voxel_resolution", model.voxel_resolution},
                {"tf_layers", model.tf_layers},
                {"tf_heads", model.tf_heads},
                {"tf_width", model.tf_width},
                {"pe_bands", model.pe_bands}};
  j["train"] = {{"lr", train.lr},
                {"weight_decay", train.weight_decay},
                {"batch", train.batch},
                {"steps", train.steps},
                {"checkpoint_every", train.checkpoint_every},
                {"overfit_one", train.overfit_one}};
  j["render"] = {{"train_resolution", render.train_resolution},
                 {"metric_resolution", render.metric_resolution},
                 {"camera_radius", render.camera_radius},
                 {"fov_deg", render.fov_deg},
                 {"temperature", render.temperature},
                 {"depth_sharpness", render.depth_sharpness}};
  j["synth"] = {{"archetypes", synth.archetypes},
                {"min_objects", synth.min_objects},
                {"max_objects", synth.max_objects},
                {"train_count", synth.train_count},
                {"eval_count", synth.eval_count},
                {"styles_per_category", synth.styles_per_category}};
  j["paths"] = {{"dataset", paths.dataset},
                {"checkpoint", paths.checkpoint},
                {"out", paths.out}};
  j["retrieval"] = {{"category_filter", retrieval_category_filter}};
  return j.dump(2) + "\n";
}

void RunConfig::save(const std::filesystem::path& json_path) const {
  std::ofstream out(json_path);
  require(out.good(), "cannot write config ", json_path.string());
  out << to_json();
  require(out.good(), "config write failed for ", json_path.string());
}

}  // namespace sfield::pipeline
