#include "sfield/retrieval.hpp"

#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "sfield/obj_io.hpp"

namespace sfield {

namespace {

bool prepare_asset(Asset& asset) {
  if (asset.mesh.vertices.empty() || asset.mesh.faces.empty()) return false;
  if (asset.mesh.surface_area() <= 0.0) return false;
  const AABB box = asset.mesh.bounds();
  const Vec3 e = box.extents();
  if (std::max({e.x, e.y, e.z}) <= 0.0) return false;
  asset.mesh = canonicalize(asset.mesh);
  asset.samples = sample_surface(asset.mesh, kRetrievalSamples, kRetrievalSeed);
  return true;
}

}  // namespace

AssetLibrary AssetLibrary::build(const std::filesystem::path& asset_dir) {
  const std::filesystem::path manifest = asset_dir / "manifest.txt";
  std::ifstream in(manifest);
  require(in.good(), "cannot open asset manifest ", manifest.string());

  AssetLibrary lib;
  std::set<std::string> ids;
  std::set<std::string> named_files;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    Asset asset;
    std::string rel;
    require(static_cast<bool>(ls >> asset.id >> asset.category >> rel),
            manifest.string(), ":", line_no,
            ": expected 'id category path'");
    require(ids.insert(asset.id).second, manifest.string(), ":", line_no,
            ": duplicate asset id '", asset.id, "'");
    named_files.insert(rel);
    try {
      asset.mesh = load_obj(asset_dir / rel);
    } catch (const Error& e) {
      std::cerr << "asset '" << asset.id << "' skipped: " << e.what() << "\n";
      continue;
    }
    if (!prepare_asset(asset)) {
      std::cerr << "asset '" << asset.id << "' skipped: degenerate mesh in "
                << rel << "\n";
      continue;
    }
    lib.assets_.push_back(std::move(asset));
  }
  // files present but not named by the manifest
  for (const auto& entry : std::filesystem::directory_iterator(asset_dir)) {
    if (entry.path().extension() != ".obj") continue;
    const std::string rel = entry.path().filename().string();
    if (!named_files.count(rel))
      std::cerr << "obj file '" << rel
                << "' skipped: no manifest record names it\n";
  }
  require(!lib.assets_.empty(), "asset library at ", asset_dir.string(),
          " is empty");
  return lib;
}

AssetLibrary AssetLibrary::from_specs(const std::vector<AssetSpec>& specs) {
  AssetLibrary lib;
  std::set<std::string> ids;
  for (const AssetSpec& spec : specs) {
    require(ids.insert(spec.id).second, "duplicate asset id '", spec.id, "'");
    Asset asset{spec.id, spec.category, spec.mesh, {}};
    require(prepare_asset(asset), "asset '", spec.id, "' is degenerate");
    lib.assets_.push_back(std::move(asset));
  }
  require(!lib.assets_.empty(), "asset library is empty");
  return lib;
}

const Asset* AssetLibrary::find(const std::string& id) const {
  for (const Asset& a : assets_)
    if (a.id == id) return &a;
  return nullptr;
}

void write_asset_library(const std::vector<AssetSpec>& specs,
                         const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt");
  require(manifest.good(), "cannot write manifest in ", dir.string());
  for (const AssetSpec& spec : specs) {
    const std::string rel = spec.id + ".obj";
    save_obj(spec.mesh, dir / rel);
    manifest << spec.id << ' ' << spec.category << ' ' << rel << '\n';
  }
  require(manifest.good(), "manifest write failed in ", dir.string());
}

std::string retrieve(const Mesh& shape, const AssetLibrary& library,
                     const std::string& category_filter) {
  require(library.count() > 0, "retrieve: empty library");
  require(!shape.vertices.empty() && shape.surface_area() > 0.0,
          "retrieve: query shape has no surface area");
  const Mesh canonical = canonicalize(shape);
  const std::vector<Vec3> samples =
      sample_surface(canonical, kRetrievalSamples, kRetrievalSeed);

  const Asset* best = nullptr;
  double best_dist = 0.0;
  for (int i = 0; i < library.count(); ++i) {
    const Asset& asset = library.at(i);
    if (!category_filter.empty() && asset.category != category_filter)
      continue;
    const double d = chamfer(samples, asset.samples);
    if (!best || d < best_dist || (d == best_dist && asset.id < best->id)) {
      best = &asset;
      best_dist = d;
    }
  }
  require(best != nullptr, "retrieve: no assets match category '",
          category_filter, "'");
  return best->id;
}

Scene assemble_scene(const std::vector<Mesh>& shapes,
                     const LayoutSlots& layout, const AssetLibrary& library,
                     const std::string& category_filter) {
  const std::vector<int> active = layout.active_indices();
  require(shapes.size() == active.size(), "assemble_scene: ", shapes.size(),
          " shapes vs ", active.size(), " active slots");
  Scene scene;
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    const Asset* asset =
        library.find(retrieve(shapes[k], library, category_filter));
    const LayoutSlot& slot = layout.slots[active[k]];
    SceneObject obj;
    obj.category = asset->category;
    obj.transform = {slot.center, slot.scale()};
    obj.mesh = asset->mesh;
    scene.objects.push_back(std::move(obj));
  }
  return scene;
}

}  // namespace sfield
