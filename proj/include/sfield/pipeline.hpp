#pragma once
// Operator pipeline: run configuration (JSON file + flag overrides,
// unknown keys rejected), and the commands wired by the CLI. Commands are
// library functions so the test suites can drive them in-process.

#include <filesystem>

#include "sfield/losses.hpp"
#include "sfield/model.hpp"
#include "sfield/retrieval.hpp"

namespace sfield::pipeline {

// configuration problems exit with code 1; runtime failures with 2
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct TrainSection {
  double lr = 1e-4;
  double weight_decay = 0.01;
  int batch = 4;
  long steps = 5000;
  long checkpoint_every = 500;
  bool overfit_one = false;
};

struct RenderSection {
  int train_resolution = 64;
  int metric_resolution = 256;
  double camera_radius = 1.5;
  double fov_deg = 40.0;
  double temperature = 1e-2;
  double depth_sharpness = 2e-2;
};

struct SynthSection {
  std::vector<std::string> archetypes{"bedroom", "living", "dining"};
  int min_objects = 4;
  int max_objects = 8;
  int train_count = 256;
  int eval_count = 64;
  int styles_per_category = 12;
};

struct PathsSection {
  std::string dataset;     // corpus root (train/, eval/, assets/)
  std::string checkpoint;  // resume/generate source
  std::string out;         // command output root
};

struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  TrainSection train;
  RenderSection render;
  SynthSection synth;
  PathsSection paths;
  std::string retrieval_category_filter;

  static RunConfig load(const std::filesystem::path& json_path);
  std::string to_json() const;  // canonical (sorted keys, fixed precision)
  void save(const std::filesystem::path& json_path) const;
};

// dataset on disk: train/ eval/ assets/ + manifests + stats printout
void cmd_synth_data(const RunConfig& cfg);

// end-to-end training; loss log + periodic checkpoints under paths.out
void cmd_train(const RunConfig& cfg);

// sample n latents, decode, retrieve, assemble; scene files + optional
// top-down renders
void cmd_generate(const RunConfig& cfg, int n, bool render_images);

// metric report comparing two scene directories
void cmd_evaluate(const RunConfig& cfg,
                  const std::filesystem::path& generated_dir,
                  const std::filesystem::path& reference_dir);

struct GradCheckRow {
  std::string name;
  double max_rel_error = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

// full gradient audit; inject_fault adds a deliberately broken component
// that must surface as a named failure (harness self-test hook)
std::vector<GradCheckRow> run_gradcheck(bool inject_fault = false);
void cmd_gradcheck(bool inject_fault);

// ---- shared machinery (also used by the acceptance suite) ----

std::vector<Scene> load_scene_dir(const std::filesystem::path& dir);

struct StepLosses {
  double kl = 0.0, render = 0.0, layout = 0.0, total = 0.0;
};

// one optimizer step over a batch of scenes; deterministic per
// (step_index, seed) regardless of worker count
StepLosses train_step(SceneModel& model, AdamW& optimizer,
                      const std::vector<Scene>& corpus, long step_index,
                      const RunConfig& cfg);

// mean loss components over a scene set at fixed parameters (no update)
StepLosses eval_losses(const SceneModel& model, const std::vector<Scene>& scenes,
                       const RunConfig& cfg, std::uint64_t seed);

// top-down metric render of a scene file corpus, normalized first
std::vector<Tensor> render_corpus(const std::vector<Scene>& scenes,
                                  int resolution);

}  // namespace sfield::pipeline
