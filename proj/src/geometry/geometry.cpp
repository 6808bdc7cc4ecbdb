#include "sfield/geometry.hpp"

#include <algorithm>
#include <limits>
#include <map>

#include "sfield/kernels.hpp"
#include "sfield/rng.hpp"

namespace sfield {

AABB AABB::empty() {
  const double inf = std::numeric_limits<double>::infinity();
  return {{inf, inf, inf}, {-inf, -inf, -inf}};
}

void AABB::expand(const Vec3& p) {
  lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
  hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
}

void AABB::expand(const AABB& b) {
  expand(b.lo);
  expand(b.hi);
}

AABB Mesh::bounds() const {
  require(!vertices.empty(), "bounds of an empty mesh");
  AABB box = AABB::empty();
  for (const Vec3& v : vertices) box.expand(v);
  return box;
}

double Mesh::surface_area() const {
  double area = 0.0;
  for (const auto& f : faces) {
    const Vec3 e1 = vertices[f[1]] - vertices[f[0]];
    const Vec3 e2 = vertices[f[2]] - vertices[f[0]];
    area += 0.5 * norm(cross(e1, e2));
  }
  return area;
}

void validate_mesh(const Mesh& mesh) {
  const int nv = static_cast<int>(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    const auto& f = mesh.faces[i];
    for (int k = 0; k < 3; ++k)
      require(f[k] >= 0 && f[k] < nv, "face ", i, " references vertex ",
              f[k], " outside [0,", nv, ")");
    require(f[0] != f[1] && f[1] != f[2] && f[0] != f[2],
            "face ", i, " is degenerate");
  }
}

void compute_vertex_normals(Mesh& mesh) {
  mesh.normals.assign(mesh.vertices.size(), Vec3{});
  for (const auto& f : mesh.faces) {
    const Vec3 fn = cross(mesh.vertices[f[1]] - mesh.vertices[f[0]],
                          mesh.vertices[f[2]] - mesh.vertices[f[0]]);
    for (int k = 0; k < 3; ++k) mesh.normals[f[k]] += fn;  // area-weighted
  }
  for (Vec3& n : mesh.normals) n = normalized(n);
}

Mesh icosphere(int subdivisions) {
  require(subdivisions >= 0 && subdivisions <= 5,
          "icosphere: subdivision level ", subdivisions,
          " outside the supported range [0,5]");
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  Mesh mesh;
  mesh.vertices = {
      {-1, phi, 0}, {1, phi, 0},   {-1, -phi, 0}, {1, -phi, 0},
      {0, -1, phi}, {0, 1, phi},   {0, -1, -phi}, {0, 1, -phi},
      {phi, 0, -1}, {phi, 0, 1},   {-phi, 0, -1}, {-phi, 0, 1}};
  for (Vec3& v : mesh.vertices) v = normalized(v);
  mesh.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      mesh.vertices.push_back(
          normalized((mesh.vertices[a] + mesh.vertices[b]) * 0.5));
      const int idx = static_cast<int>(mesh.vertices.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(mesh.faces.size() * 4);
    for (const auto& f : mesh.faces) {
      const int m01 = mid(f[0], f[1]);
      const int m12 = mid(f[1], f[2]);
      const int m02 = mid(f[0], f[2]);
      next.push_back({f[0], m01, m02});
      next.push_back({f[1], m12, m01});
      next.push_back({f[2], m02, m12});
      next.push_back({m01, m12, m02});
    }
    mesh.faces = std::move(next);
  }
  compute_vertex_normals(mesh);
  return mesh;
}

Mesh make_box(const Vec3& h) {
  require(h.x > 0.0 && h.y > 0.0 && h.z > 0.0,
          "make_box: extents must be positive");
  // vertices are unshared per face so the shading stays flat at the edges
  Mesh m;
  const Vec3 corners[8] = {
      {-h.x, -h.y, -h.z}, {h.x, -h.y, -h.z}, {-h.x, h.y, -h.z},
      {h.x, h.y, -h.z},   {-h.x, -h.y, h.z}, {h.x, -h.y, h.z},
      {-h.x, h.y, h.z},   {h.x, h.y, h.z}};
  const int quads[6][4] = {{0, 2, 3, 1},   // -z
                           {4, 5, 7, 6},   // +z
                           {0, 1, 5, 4},   // -y
                           {2, 6, 7, 3},   // +y
                           {0, 4, 6, 2},   // -x
                           {1, 3, 7, 5}};  // +x
  for (const auto& q : quads) {
    const int base = static_cast<int>(m.vertices.size());
    for (int k = 0; k < 4; ++k) m.vertices.push_back(corners[q[k]]);
    m.faces.push_back({base, base + 1, base + 2});
    m.faces.push_back({base, base + 2, base + 3});
  }
  compute_vertex_normals(m);
  return m;
}

Mesh make_ellipsoid(const Vec3& h, int subdivisions) {
  Mesh m = icosphere(subdivisions);
  for (Vec3& v : m.vertices) v = hadamard(h, v);
  compute_vertex_normals(m);
  return m;
}

Mesh make_tapered_box(const Vec3& h, double taper) {
  require(taper >= 0.0 && taper < 1.0, "make_tapered_box: taper must be in [0,1)");
  Mesh m = make_box(h);
  const double k = 1.0 - taper;
  for (Vec3& v : m.vertices)
    if (v.y > 0.0) {
      v.x *= k;
      v.z *= k;
    }
  compute_vertex_normals(m);
  return m;
}

Mesh apply_slot(const Mesh& mesh, const SlotTransform& t) {
  require(t.scale.x > 0.0 && t.scale.y > 0.0 && t.scale.z > 0.0,
          "apply_slot: scale must be positive");
  Mesh out = mesh;
  for (Vec3& v : out.vertices) v = t.center + hadamard(t.scale, v);
  if (!out.normals.empty()) compute_vertex_normals(out);
  return out;
}

Mesh canonicalize(const Mesh& mesh) {
  const AABB box = mesh.bounds();
  const Vec3 e = box.extents();
  const double longest = std::max({e.x, e.y, e.z});
  require(longest > 0.0, "canonicalize: zero-extent mesh");
  const double k = 1.0 / longest;
  const Vec3 mid = box.center();
  Mesh out = mesh;
  for (Vec3& v : out.vertices) v = (v - mid) * k;
  if (!out.normals.empty()) compute_vertex_normals(out);
  return out;
}

Mesh place_in_box(const Mesh& canonical, const SlotTransform& t) {
  require(t.scale.x > 0.0 && t.scale.y > 0.0 && t.scale.z > 0.0,
          "place_in_box: scale must be positive");
  const AABB box = canonical.bounds();
  const Vec3 e = box.extents();
  const Vec3 mid = box.center();
  // degenerate axes (flat meshes) collapse onto the slot center plane
  const Vec3 inv{e.x > 0.0 ? 2.0 / e.x : 0.0, e.y > 0.0 ? 2.0 / e.y : 0.0,
                 e.z > 0.0 ? 2.0 / e.z : 0.0};
  Mesh out = canonical;
  for (Vec3& v : out.vertices)
    v = t.center + hadamard(t.scale, hadamard(inv, v - mid));
  if (!out.normals.empty()) compute_vertex_normals(out);
  return out;
}

namespace {

struct SoA {
  std::vector<double> xs, ys, zs;
  explicit SoA(const std::vector<Vec3>& pts) {
    xs.reserve(pts.size());
    ys.reserve(pts.size());
    zs.reserve(pts.size());
    for (const Vec3& p : pts) {
      xs.push_back(p.x);
      ys.push_back(p.y);
      zs.push_back(p.z);
    }
  }
};

constexpr std::size_t kBruteForceLimit = 10000;

// Uniform-grid exact nearest neighbor for large point sets: cells are
// scanned in expanding Chebyshev rings until the ring lower bound passes
// the best squared distance found.
class GridIndex {
 public:
  explicit GridIndex(const std::vector<Vec3>& pts) : pts_(pts) {
    box_ = AABB::empty();
    for (const Vec3& p : pts) box_.expand(p);
    const double count = static_cast<double>(pts.size());
    const Vec3 e = box_.extents();
    const double longest = std::max({e.x, e.y, e.z, 1e-12});
    res_ = std::max(1, static_cast<int>(std::cbrt(count / 2.0)));
    cell_ = longest / res_;
    nx_ = dim_cells(e.x);
    ny_ = dim_cells(e.y);
    nz_ = dim_cells(e.z);
    cells_.resize(static_cast<std::size_t>(nx_) * ny_ * nz_);
    for (std::size_t i = 0; i < pts.size(); ++i)
      cells_[cell_index(pts[i])].push_back(static_cast<int>(i));
  }

  double min_sqdist(const Vec3& p) const {
    const int cx = coord(p.x - box_.lo.x, nx_);
    const int cy = coord(p.y - box_.lo.y, ny_);
    const int cz = coord(p.z - box_.lo.z, nz_);
    double best = std::numeric_limits<double>::infinity();
    const int rmax = std::max({nx_, ny_, nz_});
    for (int r = 0; r <= rmax; ++r) {
      const double ring_bound = (r - 1) * cell_;
      if (r > 0 && ring_bound > 0.0 && ring_bound * ring_bound > best) break;
      scan_ring(p, cx, cy, cz, r, best);
    }
    return best;
  }

 private:
  int dim_cells(double extent) const {
    return std::max(1, static_cast<int>(extent / cell_) + 1);
  }
  int coord(double off, int n) const {
    return std::clamp(static_cast<int>(off / cell_), 0, n - 1);
  }
  std::size_t cell_index(const Vec3& p) const {
    const int ix = std::clamp(static_cast<int>((p.x - box_.lo.x) / cell_), 0,
                              nx_ - 1);
    const int iy = std::clamp(static_cast<int>((p.y - box_.lo.y) / cell_), 0,
                              ny_ - 1);
    const int iz = std::clamp(static_cast<int>((p.z - box_.lo.z) / cell_), 0,
                              nz_ - 1);
    return (static_cast<std::size_t>(ix) * ny_ + iy) * nz_ + iz;
  }

  void scan_ring(const Vec3& p, int cx, int cy, int cz, int r,
                 double& best) const {
    for (int ix = cx - r; ix <= cx + r; ++ix) {
      if (ix < 0 || ix >= nx_) continue;
      for (int iy = cy - r; iy <= cy + r; ++iy) {
        if (iy < 0 || iy >= ny_) continue;
        for (int iz = cz - r; iz <= cz + r; ++iz) {
          if (iz < 0 || iz >= nz_) continue;
          if (std::max({std::abs(ix - cx), std::abs(iy - cy),
                        std::abs(iz - cz)}) != r)
            continue;
          for (int idx : cells_[(static_cast<std::size_t>(ix) * ny_ + iy) *
                                    nz_ + iz]) {
            const Vec3 d = p - pts_[idx];
            const double sq = (d.x * d.x + d.y * d.y) + d.z * d.z;
            if (sq < best) best = sq;
          }
        }
      }
    }
  }

  const std::vector<Vec3>& pts_;
  AABB box_;
  double cell_ = 1.0;
  int res_ = 1, nx_ = 1, ny_ = 1, nz_ = 1;
  std::vector<std::vector<int>> cells_;
};

double directed_mean_sqdist(const std::vector<Vec3>& from,
                            const std::vector<Vec3>& to) {
  double acc = 0.0;
  if (to.size() <= kBruteForceLimit) {
    const SoA soa(to);
    for (const Vec3& p : from)
      acc += kernels::active().min_sqdist3(p.x, p.y, p.z, soa.xs.data(),
                                           soa.ys.data(), soa.zs.data(),
                                           to.size());
  } else {
    const GridIndex grid(to);
    for (const Vec3& p : from) acc += grid.min_sqdist(p);
  }
  return acc / static_cast<double>(from.size());
}

}  // namespace

double chamfer(const std::vector<Vec3>& p, const std::vector<Vec3>& q) {
  require(!p.empty() && !q.empty(), "chamfer: point sets must be nonempty");
  return directed_mean_sqdist(p, q) + directed_mean_sqdist(q, p);
}

double iou3d(const AABB& a, const AABB& b) {
  require(a.lo.x <= a.hi.x && a.lo.y <= a.hi.y && a.lo.z <= a.hi.z,
          "iou3d: invalid first box");
  require(b.lo.x <= b.hi.x && b.lo.y <= b.hi.y && b.lo.z <= b.hi.z,
          "iou3d: invalid second box");
  const double va = a.volume(), vb = b.volume();
  if (va == 0.0 && vb == 0.0) {
    const bool identical = a.lo.x == b.lo.x && a.lo.y == b.lo.y &&
                           a.lo.z == b.lo.z && a.hi.x == b.hi.x &&
                           a.hi.y == b.hi.y && a.hi.z == b.hi.z;
    return identical ? 1.0 : 0.0;
  }
  const double ix = std::max(
      0.0, std::min(a.hi.x, b.hi.x) - std::max(a.lo.x, b.lo.x));
  const double iy = std::max(
      0.0, std::min(a.hi.y, b.hi.y) - std::max(a.lo.y, b.lo.y));
  const double iz = std::max(
      0.0, std::min(a.hi.z, b.hi.z) - std::max(a.lo.z, b.lo.z));
  const double inter = ix * iy * iz;
  const double uni = va + vb - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<Vec3> sample_surface(const Mesh& mesh, int n, std::uint64_t seed) {
  require(n >= 1, "sample_surface: n must be >= 1");
  require(!mesh.faces.empty(), "sample_surface: mesh has no faces");
  std::vector<double> cumulative(mesh.faces.size());
  double total = 0.0;
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    const auto& f = mesh.faces[i];
    const Vec3 e1 = mesh.vertices[f[1]] - mesh.vertices[f[0]];
    const Vec3 e2 = mesh.vertices[f[2]] - mesh.vertices[f[0]];
    total += 0.5 * norm(cross(e1, e2));
    cumulative[i] = total;
  }
  require(total > 0.0, "sample_surface: mesh has zero surface area");

  Rng rng(seed);
  std::vector<Vec3> pts;
  pts.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double target = rng.uniform() * total;
    const auto it =
        std::upper_bound(cumulative.begin(), cumulative.end(), target);
    const std::size_t fi =
        std::min(static_cast<std::size_t>(it - cumulative.begin()),
                 mesh.faces.size() - 1);
    const auto& f = mesh.faces[fi];
    // square-root trick for uniform barycentric coordinates
    const double su = std::sqrt(rng.uniform());
    const double v = rng.uniform();
    const double b0 = 1.0 - su;
    const double b1 = su * (1.0 - v);
    const double b2 = su * v;
    pts.push_back(mesh.vertices[f[0]] * b0 + mesh.vertices[f[1]] * b1 +
                  mesh.vertices[f[2]] * b2);
  }
  return pts;
}

AABB Scene::bounds() const {
  require(!objects.empty(), "bounds of an empty scene");
  AABB box = AABB::empty();
  for (const SceneObject& o : objects) box.expand(o.transform.box());
  return box;
}

Scene normalize_scene(const Scene& scene) {
  require(!scene.objects.empty(), "normalize_scene: scene has no objects");
  const AABB box = scene.bounds();
  const Vec3 e = box.extents();
  const double longest = std::max({e.x, e.y, e.z});
  require(longest > 0.0, "normalize_scene: zero-extent scene");
  const double k = 1.0 / longest;
  const Vec3 mid = box.center();
  Scene out = scene;
  for (SceneObject& o : out.objects) {
    o.transform.center = (o.transform.center - mid) * k;
    o.transform.scale = o.transform.scale * k;
  }
  out.normalized = true;
  return out;
}

}  // namespace sfield
