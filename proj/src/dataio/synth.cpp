#include <algorithm>
#include <map>

#include "sfield/dataio.hpp"
#include "sfield/rng.hpp"

// Archetype scene generator. One style scalar per scene controls every
// object's height ratio through lambda(s) = 0.6 + 0.8 s, so proportions
// identify the style exactly (see recover_style). Placement enforces a
// strict separation gap, giving zero pairwise AABB overlap.

namespace sfield {

namespace {

double lambda_of(double s) { return 0.6 + 0.8 * s; }

const std::map<std::string, CategoryInfo>& category_table() {
  using Shape = CategoryInfo::Shape;
  static const std::map<std::string, CategoryInfo> table = {
      {"bed", {Shape::kBox, {1.0, 0.40, 1.35}, 0.0}},
      {"nightstand", {Shape::kBox, {1.0, 1.05, 0.95}, 0.0}},
      {"wardrobe", {Shape::kBox, {1.0, 2.10, 0.42}, 0.0}},
      {"sofa", {Shape::kBox, {1.9, 0.75, 0.75}, 0.0}},
      {"tv_stand", {Shape::kBox, {1.8, 0.55, 0.40}, 0.0}},
      {"coffee_table", {Shape::kTapered, {1.25, 0.50, 0.80}, 0.25}},
      {"chair", {Shape::kTapered, {0.5, 1.05, 0.5}, 0.35}},
      {"dining_table", {Shape::kTapered, {1.5, 0.70, 0.95}, 0.2}},
      {"cabinet", {Shape::kBox, {1.0, 1.60, 0.40}, 0.0}},
      {"lamp", {Shape::kEllipsoid, {0.4, 1.15, 0.4}, 0.0}},
      {"plant", {Shape::kEllipsoid, {0.55, 1.0, 0.55}, 0.0}},
  };
  return table;
}

Vec3 half_extents(const std::string& cat, double style, double size) {
  const CategoryInfo& info = category_info(cat);
  return {size * info.base.x, size * info.base.y * lambda_of(style),
          size * info.base.z};
}

constexpr double kGap = 2e-3;  // strict separation between object boxes

bool overlaps_any(const AABB& box, const std::vector<SceneObject>& placed) {
  for (const SceneObject& o : placed) {
    const AABB other = o.transform.box();
    const bool sep = box.hi.x + kGap <= other.lo.x ||
                     other.hi.x + kGap <= box.lo.x ||
                     box.hi.y + kGap <= other.lo.y ||
                     other.hi.y + kGap <= box.lo.y ||
                     box.hi.z + kGap <= other.lo.z ||
                     other.hi.z + kGap <= box.lo.z;
    if (!sep) return true;
  }
  return false;
}

struct Builder {
  Scene scene;
  double style;
  Rng& rng;
  const SynthConfig& cfg;
  bool failed = false;

  // place at an exact position (required furniture); fails the scene on
  // collision instead of perturbing, so archetype structure stays crisp
  void place_at(const std::string& cat, double size, double x, double z) {
    const Vec3 h = half_extents(cat, style, size);
    const Vec3 center{x, h.y, z};
    const AABB box{center - h, center + h};
    if (std::fabs(x) + h.x > 0.5 || std::fabs(z) + h.z > 0.5 ||
        overlaps_any(box, scene.objects)) {
      failed = true;
      return;
    }
    SceneObject o;
    o.category = cat;
    o.transform = {center, h};
    o.mesh = category_mesh(cat, style);
    scene.objects.push_back(std::move(o));
  }

  // rejection-sample a free spot
  void place_free(const std::string& cat, double size) {
    const Vec3 h = half_extents(cat, style, size);
    for (int attempt = 0; attempt < cfg.max_place_attempts; ++attempt) {
      const double x = rng.uniform(-0.5 + h.x + kGap, 0.5 - h.x - kGap);
      const double z = rng.uniform(-0.5 + h.z + kGap, 0.5 - h.z - kGap);
      const Vec3 center{x, h.y, z};
      const AABB box{center - h, center + h};
      if (overlaps_any(box, scene.objects)) continue;
      SceneObject o;
      o.category = cat;
      o.transform = {center, h};
      o.mesh = category_mesh(cat, style);
      scene.objects.push_back(std::move(o));
      return;
    }
    failed = true;
  }
};

const char* kExtraCats[3] = {"lamp", "plant", "chair"};

void build_bedroom(Builder& b, int target) {
  const double u_bed = 0.16 * b.rng.uniform(0.9, 1.1);
  const Vec3 bed_h = half_extents("bed", b.style, u_bed);
  const double bed_x = b.rng.uniform(-0.06, 0.06);
  const double bed_z = -0.5 + bed_h.z + b.rng.uniform(0.01, 0.04);
  b.place_at("bed", u_bed, bed_x, bed_z);

  const double u_n = 0.05 * b.rng.uniform(0.9, 1.1);
  const Vec3 nst_h = half_extents("nightstand", b.style, u_n);
  const double off = bed_h.x + nst_h.x + b.rng.uniform(0.01, 0.03);
  b.place_at("nightstand", u_n, bed_x - off, bed_z);
  b.place_at("nightstand", u_n, bed_x + off, bed_z);

  const double u_w = 0.065 * b.rng.uniform(0.9, 1.1);
  const Vec3 w_h = half_extents("wardrobe", b.style, u_w);
  const double side = b.rng.uniform() < 0.5 ? -1.0 : 1.0;
  b.place_at("wardrobe", u_w, side * (0.5 - w_h.x - 0.02),
             0.25 + b.rng.uniform(-0.08, 0.08));

  for (int i = 4; i < target && !b.failed; ++i)
    b.place_free(kExtraCats[b.rng.uniform_int(0, 2)],
                 0.045 * b.rng.uniform(0.9, 1.1));
}

void build_living(Builder& b, int target) {
  const double u_s = 0.10 * b.rng.uniform(0.9, 1.1);
  const Vec3 sofa_h = half_extents("sofa", b.style, u_s);
  const double sofa_x = b.rng.uniform(-0.05, 0.05);
  const double sofa_z = -0.5 + sofa_h.z + b.rng.uniform(0.01, 0.04);
  b.place_at("sofa", u_s, sofa_x, sofa_z);

  const double u_t = 0.07 * b.rng.uniform(0.9, 1.1);
  const Vec3 table_h = half_extents("coffee_table", b.style, u_t);
  b.place_at("coffee_table", u_t, sofa_x,
             sofa_z + sofa_h.z + table_h.z + b.rng.uniform(0.03, 0.08));

  const double u_tv = 0.08 * b.rng.uniform(0.9, 1.1);
  const Vec3 tv_h = half_extents("tv_stand", b.style, u_tv);
  b.place_at("tv_stand", u_tv, sofa_x + b.rng.uniform(-0.05, 0.05),
             0.5 - tv_h.z - b.rng.uniform(0.01, 0.04));

  for (int i = 3; i < target && !b.failed; ++i)
    b.place_free(kExtraCats[b.rng.uniform_int(0, 2)],
                 0.045 * b.rng.uniform(0.9, 1.1));
}

void build_dining(Builder& b, int target) {
  const double u_t = 0.085 * b.rng.uniform(0.9, 1.1);
  const Vec3 t_h = half_extents("dining_table", b.style, u_t);
  const double tx = b.rng.uniform(-0.04, 0.04);
  const double tz = b.rng.uniform(-0.06, 0.02);
  b.place_at("dining_table", u_t, tx, tz);

  const double u_c = 0.045 * b.rng.uniform(0.9, 1.1);
  const Vec3 c_h = half_extents("chair", b.style, u_c);
  const int chairs = std::clamp(target - 2, 2, 4);
  const double dx = t_h.x + c_h.x + 0.02, dz = t_h.z + c_h.z + 0.02;
  const double spots[4][2] = {{tx - dx, tz}, {tx + dx, tz},
                              {tx, tz - dz}, {tx, tz + dz}};
  for (int i = 0; i < chairs && !b.failed; ++i)
    b.place_at("chair", u_c, spots[i][0], spots[i][1]);

  const double u_cab = 0.06 * b.rng.uniform(0.9, 1.1);
  const Vec3 cab_h = half_extents("cabinet", b.style, u_cab);
  const double side = b.rng.uniform() < 0.5 ? -1.0 : 1.0;
  b.place_at("cabinet", u_cab, side * (0.5 - cab_h.x - 0.02),
             -0.5 + cab_h.z + 0.02);

  for (int i = 2 + chairs + 1; i <= target && !b.failed; ++i)
    b.place_free(kExtraCats[b.rng.uniform_int(0, 1)],
                 0.04 * b.rng.uniform(0.9, 1.1));
}

}  // namespace

const std::vector<std::string>& category_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [name, info] : category_table()) v.push_back(name);
    return v;
  }();
  return names;
}

const CategoryInfo& category_info(const std::string& name) {
  const auto& table = category_table();
  const auto it = table.find(name);
  require(it != table.end(), "unknown category '", name, "'");
  return it->second;
}

Mesh category_mesh(const std::string& name, double style) {
  const CategoryInfo& info = category_info(name);
  const Vec3 h{info.base.x, info.base.y * lambda_of(style), info.base.z};
  switch (info.shape) {
    case CategoryInfo::Shape::kBox:
      return canonicalize(make_box(h));
    case CategoryInfo::Shape::kEllipsoid:
      return canonicalize(make_ellipsoid(h));
    case CategoryInfo::Shape::kTapered:
      return canonicalize(make_tapered_box(h, info.taper));
  }
  fail("unreachable");
}

double recover_style(const std::string& category, const Vec3& extents) {
  const CategoryInfo& info = category_info(category);
  require(extents.x > 0.0 && extents.y > 0.0,
          "recover_style: degenerate extents");
  const double lam = (extents.y / extents.x) * (info.base.x / info.base.y);
  return (lam - 0.6) / 0.8;
}

std::vector<Scene> synth_dataset(const SynthConfig& cfg) {
  require(cfg.count >= 0, "synth: negative count");
  require(!cfg.archetypes.empty(), "synth: empty archetype set");
  require(cfg.min_objects >= 1 && cfg.min_objects <= cfg.max_objects,
          "synth: bad object-count range [", cfg.min_objects, ",",
          cfg.max_objects, "]");
  require(cfg.style_min <= cfg.style_max, "synth: bad style range");

  std::vector<Scene> scenes;
  scenes.reserve(cfg.count);
  for (int index = 0; index < cfg.count; ++index) {
    Scene built;
    bool ok = false;
    for (int redraw = 0; redraw < 50 && !ok; ++redraw) {
      Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(index) * 64 +
                                        redraw));
      Builder b{Scene{}, rng.uniform(cfg.style_min, cfg.style_max), rng, cfg};
      b.scene.archetype = cfg.archetypes[index % cfg.archetypes.size()];
      b.scene.style = b.style;
      const int target = rng.uniform_int(cfg.min_objects, cfg.max_objects);
      if (b.scene.archetype == "bedroom")
        build_bedroom(b, std::max(target, 4));
      else if (b.scene.archetype == "living")
        build_living(b, std::max(target, 3));
      else if (b.scene.archetype == "dining")
        build_dining(b, std::max(target, 4));
      else
        fail("synth: unknown archetype '", b.scene.archetype, "'");
      if (b.failed) continue;
      built = std::move(b.scene);
      ok = true;
    }
    require(ok, "synth: placement infeasible for scene ", index,
            " under the given config");
    char id[32];
    std::snprintf(id, sizeof id, "scene_%05d", index);
    built.id = id;
    const double style = built.style;
    built = normalize_scene(built);
    built.style = style;
    scenes.push_back(std::move(built));
  }
  return scenes;
}

std::vector<AssetSpec> synth_assets(int styles_per_category) {
  require(styles_per_category >= 1, "synth_assets: need at least one style");
  std::vector<AssetSpec> assets;
  for (const std::string& cat : category_names()) {
    for (int k = 0; k < styles_per_category; ++k) {
      const double s = (k + 0.5) / styles_per_category;
      char id[64];
      std::snprintf(id, sizeof id, "%s_%02d", cat.c_str(), k);
      assets.push_back({id, cat, category_mesh(cat, s)});
    }
  }
  return assets;
}

}  // namespace sfield
