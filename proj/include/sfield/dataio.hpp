#pragma once
// Persistence and the procedural toy corpus: scene text files (hex-encoded
// floats, lossless round trips), the archetype scene generator with a
// per-scene style scalar, image emit (PFM/PGM/PPM), and binary
// checkpoints for parameters plus optimizer state.

#include <filesystem>
#include <optional>

#include "sfield/model.hpp"
#include "sfield/render.hpp"

namespace sfield {

// ---- scene files -----------------------------------------------------------

void save_scene(const Scene& scene, const std::filesystem::path& path);
Scene load_scene(const std::filesystem::path& path);

// ---- toy corpus ------------------------------------------------------------

struct SynthConfig {
  std::vector<std::string> archetypes{"bedroom", "living", "dining"};
  int min_objects = 4;
  int max_objects = 8;
  double style_min = 0.0;
  double style_max = 1.0;
  int max_place_attempts = 100;  // per object before the scene is redrawn
  int count = 256;
  std::uint64_t seed = 0;
};

// Deterministic per (config, seed). Every scene is normalized, has zero
// pairwise object-AABB overlap, and all object proportions are the stated
// function of one style scalar.
std::vector<Scene> synth_dataset(const SynthConfig& cfg);

// category vocabulary and the style -> proportions map
struct CategoryInfo {
  enum class Shape { kBox, kEllipsoid, kTapered };
  Shape shape;
  Vec3 base;     // base half-extent ratios
  double taper;  // tapered boxes only
};
const std::vector<std::string>& category_names();
const CategoryInfo& category_info(const std::string& name);

// canonical mesh for a category at style s (unit-AABB frame)
Mesh category_mesh(const std::string& name, double style);

// Inversion oracle: recovers the style scalar from a category's extent
// ratios. Inverse of the generator's proportion map.
double recover_style(const std::string& category, const Vec3& extents);

// asset library source: one mesh per (category, style lattice point)
struct AssetSpec {
  std::string id;
  std::string category;
  Mesh mesh;
};
std::vector<AssetSpec> synth_assets(int styles_per_category);

// ---- images ----------------------------------------------------------------

enum class ImageFormat { kPfm, kPgm, kPpm };

// PFM stores the normal image as float32 (lossless for float32 data);
// PGM stores the mask as 8-bit; PPM stores an 8-bit normal visualization.
void write_image(const RenderBuffers& buffers, const std::filesystem::path& path,
                 ImageFormat format);
void write_pfm(const Tensor& image, const std::filesystem::path& path);
Tensor read_pfm(const std::filesystem::path& path);

// ---- checkpoints -----------------------------------------------------------

constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const SceneModel& model, const AdamW& optimizer,
                     const std::filesystem::path& path);

struct Checkpoint {
  ModelConfig config;
  std::uint64_t init_seed = 1;
  AdamWConfig adamw;
  long step_count = 0;
  // parameters/accumulators are loaded into a freshly built model
  SceneModel restore() const;
  void restore_into(SceneModel& model, AdamW& optimizer) const;

  std::vector<Param> params;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sfield
