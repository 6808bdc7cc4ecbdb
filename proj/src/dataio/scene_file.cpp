#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sfield/dataio.hpp"

// Line-oriented text format, version header first. Floats are written
// with %a (hex) so round trips reproduce bit patterns exactly.

namespace sfield {

namespace {

constexpr const char* kMagic = "scenefield-scene v1";

std::string hexf(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

class Parser {
 public:
  Parser(std::istream& in, const std::string& path) : in_(in), path_(path) {}

  std::string next_line() {
    std::string line;
    for (;;) {
      require(static_cast<bool>(std::getline(in_, line)), path_, ":", line_no_,
              ": unexpected end of file");
      ++line_no_;
      if (!line.empty()) return line;
    }
  }

  // "tag rest..." with the tag checked
  std::istringstream expect(const std::string& tag) {
    const std::string line = next_line();
    std::istringstream ls(line);
    std::string got;
    ls >> got;
    require(got == tag, path_, ":", line_no_, ": expected '", tag,
            "', found '", got, "'");
    return ls;
  }

  double parse_double(std::istringstream& ls, const char* what) {
    std::string token;
    require(static_cast<bool>(ls >> token), path_, ":", line_no_,
            ": missing ", what);
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    require(end && *end == '\0', path_, ":", line_no_, ": bad ", what, " '",
            token, "'");
    return v;
  }

  long parse_int(std::istringstream& ls, const char* what) {
    long v = 0;
    require(static_cast<bool>(ls >> v), path_, ":", line_no_, ": missing ",
            what);
    return v;
  }

  int line_no() const { return line_no_; }
  const std::string& path() const { return path_; }

 private:
  std::istream& in_;
  std::string path_;
  int line_no_ = 0;
};

}  // namespace

void save_scene(const Scene& scene, const std::filesystem::path& path) {
  require(scene.id.find_first_of(" \t\n") == std::string::npos,
          "scene id must not contain whitespace: '", scene.id, "'");
  std::ofstream out(path);
  require(out.good(), "cannot write scene file ", path.string());
  out << kMagic << '\n';
  out << "id " << (scene.id.empty() ? "unnamed" : scene.id) << '\n';
  out << "archetype " << (scene.archetype.empty() ? "-" : scene.archetype)
      << '\n';
  out << "normalized " << (scene.normalized ? 1 : 0) << '\n';
  out << "style " << hexf(scene.style) << '\n';
  out << "objects " << scene.objects.size() << '\n';
  for (const SceneObject& o : scene.objects) {
    require(o.category.find_first_of(" \t\n") == std::string::npos,
            "category must not contain whitespace: '", o.category, "'");
    out << "object " << o.category << '\n';
    out << "center " << hexf(o.transform.center.x) << ' '
        << hexf(o.transform.center.y) << ' ' << hexf(o.transform.center.z)
        << '\n';
    out << "scale " << hexf(o.transform.scale.x) << ' '
        << hexf(o.transform.scale.y) << ' ' << hexf(o.transform.scale.z)
        << '\n';
    out << "mesh " << o.mesh.vertices.size() << ' ' << o.mesh.faces.size()
        << '\n';
    for (const Vec3& v : o.mesh.vertices)
      out << "v " << hexf(v.x) << ' ' << hexf(v.y) << ' ' << hexf(v.z) << '\n';
    for (const auto& f : o.mesh.faces)
      out << "f " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
    out << "endobject\n";
  }
  out << "end\n";
  require(out.good(), "write failed for ", path.string());
}

Scene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open scene file ", path.string());
  Parser p(in, path.string());

  const std::string magic = p.next_line();
  require(magic == kMagic, path.string(), ": not a scene file (header '",
          magic, "')");
  Scene scene;
  {
    auto ls = p.expect("id");
    ls >> scene.id;
  }
  {
    auto ls = p.expect("archetype");
    ls >> scene.archetype;
    if (scene.archetype == "-") scene.archetype.clear();
  }
  {
    auto ls = p.expect("normalized");
    scene.normalized = p.parse_int(ls, "normalized flag") != 0;
  }
  {
    auto ls = p.expect("style");
    scene.style = p.parse_double(ls, "style");
  }
  long n_objects = 0;
  {
    auto ls = p.expect("objects");
    n_objects = p.parse_int(ls, "object count");
    require(n_objects >= 0, path.string(), ": negative object count");
  }
  for (long i = 0; i < n_objects; ++i) {
    SceneObject o;
    {
      auto ls = p.expect("object");
      require(static_cast<bool>(ls >> o.category), path.string(), ":",
              p.line_no(), ": object record missing category");
    }
    {
      auto ls = p.expect("center");
      o.transform.center = {p.parse_double(ls, "center.x"),
                            p.parse_double(ls, "center.y"),
                            p.parse_double(ls, "center.z")};
    }
    {
      auto ls = p.expect("scale");
      o.transform.scale = {p.parse_double(ls, "scale.x"),
                           p.parse_double(ls, "scale.y"),
                           p.parse_double(ls, "scale.z")};
    }
    long nv = 0, nf = 0;
    {
      auto ls = p.expect("mesh");
      nv = p.parse_int(ls, "vertex count");
      nf = p.parse_int(ls, "face count");
    }
    for (long k = 0; k < nv; ++k) {
      auto ls = p.expect("v");
      o.mesh.vertices.push_back({p.parse_double(ls, "x"),
                                 p.parse_double(ls, "y"),
                                 p.parse_double(ls, "z")});
    }
    for (long k = 0; k < nf; ++k) {
      auto ls = p.expect("f");
      const long a = p.parse_int(ls, "index"), b = p.parse_int(ls, "index"),
                 c = p.parse_int(ls, "index");
      o.mesh.faces.push_back({static_cast<int>(a), static_cast<int>(b),
                              static_cast<int>(c)});
    }
    validate_mesh(o.mesh);
    compute_vertex_normals(o.mesh);
    p.expect("endobject");
    scene.objects.push_back(std::move(o));
  }
  p.expect("end");
  return scene;
}

}  // namespace sfield
