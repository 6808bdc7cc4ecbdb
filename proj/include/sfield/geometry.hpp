#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sfield/common.hpp"

namespace sfield {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3() = default;
  Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double c) const { return {x * c, y * c, z * c}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

inline double dot(const Vec3& a, const Vec3& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z,
          a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(const Vec3& a) {
  const double n = norm(a);
  return n > 0.0 ? a * (1.0 / n) : Vec3{};
}
inline Vec3 hadamard(const Vec3& a, const Vec3& b) {
  return {a.x * b.x, a.y * b.y, a.z * b.z};
}

struct AABB {
  Vec3 lo, hi;

  Vec3 center() const { return (lo + hi) * 0.5; }
  Vec3 extents() const { return hi - lo; }
  double volume() const {
    const Vec3 e = extents();
    return e.x * e.y * e.z;
  }
  void expand(const Vec3& p);
  void expand(const AABB& b);
  static AABB empty();
};

// Object placement: the placed object's axis-aligned box is
// [center - scale, center + scale].
struct SlotTransform {
  Vec3 center;
  Vec3 scale{1.0, 1.0, 1.0};

  AABB box() const { return {center - scale, center + scale}; }
};

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<Vec3> normals;  // per-vertex, unit length; optional

  AABB bounds() const;
  double surface_area() const;
};

// Checks index ranges and rejects degenerate faces.
void validate_mesh(const Mesh& mesh);

// Area-weighted per-vertex normals, unit length.
void compute_vertex_normals(Mesh& mesh);

// Unit-radius sphere by icosahedron subdivision; deterministic vertex
// ordering. Vertex counts follow V_{k+1} = V_k + E_k.
Mesh icosphere(int subdivisions);

// v' = center + scale (.) v; used to place unit-radius templates.
Mesh apply_slot(const Mesh& mesh, const SlotTransform& t);

// Parametric primitives centered at the origin (the toy-corpus shape
// vocabulary). Winding is outward; vertex normals are populated.
Mesh make_box(const Vec3& half_extents);
Mesh make_ellipsoid(const Vec3& half_extents, int subdivisions = 2);
// box whose +y face is shrunk by `taper` in x/z (0 = box, 0.9 = pyramid-ish)
Mesh make_tapered_box(const Vec3& half_extents, double taper);

// Uniform scale + recenter so the AABB is centered at the origin with the
// longest extent exactly 1 (aspect ratios preserved).
Mesh canonicalize(const Mesh& mesh);

// Per-axis fit of a canonicalized mesh into the slot box
// [center - scale, center + scale].
Mesh place_in_box(const Mesh& canonical, const SlotTransform& t);

// Symmetric mean nearest-neighbor squared distance. Exact; brute force up
// to 10^4 points per side, grid-bucketed (still exact) beyond.
double chamfer(const std::vector<Vec3>& p, const std::vector<Vec3>& q);

// Intersection volume over union volume. Degenerate boxes have IoU 0
// unless the boxes are identical.
double iou3d(const AABB& a, const AABB& b);

// n area-weighted surface points; deterministic per seed.
std::vector<Vec3> sample_surface(const Mesh& mesh, int n, std::uint64_t seed);

struct SceneObject {
  std::string category;
  SlotTransform transform;
  Mesh mesh;  // canonical frame; placed via place_in_box(mesh, transform)

  Mesh placed_mesh() const { return place_in_box(mesh, transform); }
};

struct Scene {
  std::string id;
  std::string archetype;
  bool normalized = false;
  double style = -1.0;  // generator style parameter when known, else -1
  std::vector<SceneObject> objects;

  AABB bounds() const;
};

// Uniform scale + translation mapping the scene AABB into [-0.5,0.5]^3
// with the longest axis spanning it exactly. Idempotent.
Scene normalize_scene(const Scene& scene);

}  // namespace sfield
