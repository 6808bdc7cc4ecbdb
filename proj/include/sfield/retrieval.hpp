#pragma once
// Chamfer-distance nearest-asset retrieval. Both query shapes and library
// assets are canonicalized to the same unit-AABB frame (uniform scale,
// centered, longest axis 1) and compared through cached surface samples,
// so retrieval ranks shape, while pose and scale come from the layout.

#include <filesystem>

#include "sfield/dataio.hpp"
#include "sfield/slots.hpp"

namespace sfield {

constexpr int kRetrievalSamples = 1024;
constexpr std::uint64_t kRetrievalSeed = 0x5ca1ab1eull;

struct Asset {
  std::string id;
  std::string category;
  Mesh mesh;                  // canonical frame
  std::vector<Vec3> samples;  // cached, regenerated bit-identically
};

class AssetLibrary {
 public:
  // Reads `manifest.txt` (one "id category relative-obj-path" record per
  // line) from the directory. Unreadable or degenerate meshes and files
  // without a manifest record are skipped with a named warning.
  static AssetLibrary build(const std::filesystem::path& asset_dir);

  // In-memory construction from generated assets.
  static AssetLibrary from_specs(const std::vector<AssetSpec>& specs);

  int count() const { return static_cast<int>(assets_.size()); }
  const Asset& at(int i) const { return assets_[i]; }
  const Asset* find(const std::string& id) const;

 private:
  std::vector<Asset> assets_;
};

// Writes OBJ files plus the manifest consumed by AssetLibrary::build.
void write_asset_library(const std::vector<AssetSpec>& specs,
                         const std::filesystem::path& dir);

// Nearest asset by symmetric Chamfer distance over canonical samples;
// exact ties resolve to the lexicographically smallest id. The optional
// category filter restricts candidates (experiment flag, off by default).
std::string retrieve(const Mesh& shape, const AssetLibrary& library,
                     const std::string& category_filter = {});

// Each retrieved asset is stretched onto its slot box; the scene carries
// the retrieved categories. Shape k corresponds to the k-th active slot.
Scene assemble_scene(const std::vector<Mesh>& shapes,
                     const LayoutSlots& layout, const AssetLibrary& library,
                     const std::string& category_filter = {});

}  // namespace sfield
