#pragma once
// OBJ import/export, vertex and face records only. Materials, texture
// coordinates and groups are ignored on read and never written.

#include <filesystem>

#include "sfield/geometry.hpp"

namespace sfield {

Mesh load_obj(const std::filesystem::path& path);
void save_obj(const Mesh& mesh, const std::filesystem::path& path);

}  // namespace sfield
