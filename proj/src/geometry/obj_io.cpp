#include "sfield/obj_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace sfield {

namespace {

// "7", "7/2", "7/2/3", "7//3" -> vertex index 7
int parse_face_index(const std::string& token, int line_no) {
  const std::size_t slash = token.find('/');
  const std::string head = slash == std::string::npos ? token
                                                      : token.substr(0, slash);
  try {
    const int idx = std::stoi(head);
    require(idx >= 1, "obj line ", line_no,
            ": only positive 1-based indices are supported, got ", idx);
    return idx - 1;
  } catch (const std::invalid_argument&) {
    fail("obj line ", line_no, ": bad face index '", token, "'");
  } catch (const std::out_of_range&) {
    fail("obj line ", line_no, ": face index out of range '", token, "'");
  }
}

}  // namespace

Mesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open obj file ", path.string());
  Mesh mesh;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      Vec3 v;
      require(static_cast<bool>(ls >> v.x >> v.y >> v.z), "obj line ",
              line_no, ": malformed vertex record");
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string token;
      while (ls >> token) idx.push_back(parse_face_index(token, line_no));
      require(idx.size() >= 3, "obj line ", line_no,
              ": face needs at least 3 vertices");
      // triangulate as a fan
      for (std::size_t k = 1; k + 1 < idx.size(); ++k)
        mesh.faces.push_back({idx[0], idx[k], idx[k + 1]});
    }
    // everything else (vn, vt, usemtl, g, o, s, #, ...) is ignored
  }
  validate_mesh(mesh);
  return mesh;
}

void save_obj(const Mesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), "cannot write obj file ", path.string());
  char buf[128];
  for (const Vec3& v : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", v.x, v.y, v.z);
    out << buf;
  }
  for (const auto& f : mesh.faces)
    out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  require(out.good(), "write failed for ", path.string());
}

}  // namespace sfield
