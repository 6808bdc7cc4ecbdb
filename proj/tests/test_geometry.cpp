#include <cstdio>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "sfield/geometry.hpp"
#include "sfield/obj_io.hpp"
#include "sfield/rng.hpp"

using namespace sfield;

namespace {

std::vector<Vec3> random_points(Rng& rng, int n, double lo = -1.0,
                                double hi = 1.0) {
  std::vector<Vec3> pts(n);
  for (Vec3& p : pts)
    p = {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
  return pts;
}

int edge_count(const Mesh& m) {
  std::set<std::pair<int, int>> edges;
  for (const auto& f : m.faces)
    for (int k = 0; k < 3; ++k)
      edges.insert(std::minmax(f[k], f[(k + 1) % 3]));
  return static_cast<int>(edges.size());
}

}  // namespace

TEST_CASE("icosphere") {
  SUBCASE("level 0 counts") {
    const Mesh m = icosphere(0);
    CHECK(m.vertices.size() == 12);
    CHECK(m.faces.size() == 20);
    CHECK(edge_count(m) == 30);
  }

  SUBCASE("level 1 counts") {
    const Mesh m = icosphere(1);
    CHECK(m.vertices.size() == 42);
    CHECK(m.faces.size() == 80);
  }

  SUBCASE("count recurrences across levels") {
    int v_prev = 12, e_prev = 30, f_prev = 20;
    for (int level = 1; level <= 3; ++level) {
      const Mesh m = icosphere(level);
      CHECK(static_cast<int>(m.vertices.size()) == v_prev + e_prev);
      CHECK(static_cast<int>(m.faces.size()) == 4 * f_prev);
      v_prev = static_cast<int>(m.vertices.size());
      f_prev = static_cast<int>(m.faces.size());
      e_prev = edge_count(m);
    }
  }

  SUBCASE("all vertices on the unit sphere") {
    for (int level = 0; level <= 3; ++level)
      for (const Vec3& v : icosphere(level).vertices)
        CHECK(std::fabs(norm(v) - 1.0) <= 1e-12);
  }

  SUBCASE("normals are unit length") {
    for (const Vec3& n : icosphere(2).normals)
      CHECK(std::fabs(norm(n) - 1.0) <= 1e-9);
  }

  SUBCASE("over-budget subdivision rejected") {
    CHECK_THROWS_AS(icosphere(6), Error);
  }
}

TEST_CASE("apply_slot") {
  const Mesh sphere = icosphere(1);

  SUBCASE("identity") {
    const Mesh m = apply_slot(sphere, {});
    for (std::size_t i = 0; i < m.vertices.size(); ++i)
      CHECK(norm(m.vertices[i] - sphere.vertices[i]) == 0.0);
  }

  SUBCASE("uniform scale doubles extents") {
    const Mesh m = apply_slot(sphere, {{0, 0, 0}, {2, 2, 2}});
    const Vec3 e = m.bounds().extents();
    const Vec3 e0 = sphere.bounds().extents();
    CHECK(e.x == doctest::Approx(2 * e0.x));
    CHECK(e.y == doctest::Approx(2 * e0.y));
    CHECK(e.z == doctest::Approx(2 * e0.z));
  }

  SUBCASE("matches per-vertex recomputation") {
    const SlotTransform t{{0.2, -0.1, 0.4}, {0.5, 1.5, 0.7}};
    const Mesh m = apply_slot(sphere, t);
    for (std::size_t i = 0; i < m.vertices.size(); ++i) {
      const Vec3& v = sphere.vertices[i];
      CHECK(m.vertices[i].x == doctest::Approx(t.center.x + t.scale.x * v.x));
      CHECK(m.vertices[i].y == doctest::Approx(t.center.y + t.scale.y * v.y));
      CHECK(m.vertices[i].z == doctest::Approx(t.center.z + t.scale.z * v.z));
    }
  }

  SUBCASE("rejects nonpositive scale") {
    CHECK_THROWS_AS(apply_slot(sphere, {{0, 0, 0}, {1, 0, 1}}), Error);
  }
}

TEST_CASE("chamfer") {
  Rng rng(3);

  SUBCASE("identical sets give zero") {
    const auto p = random_points(rng, 20);
    CHECK(chamfer(p, p) == 0.0);
  }

  SUBCASE("single points at distance 1 give 2") {
    CHECK(chamfer({{0, 0, 0}}, {{1, 0, 0}}) == doctest::Approx(2.0).epsilon(1e-12));
  }

  SUBCASE("matches the all-pairs brute-force oracle") {
    const auto p = random_points(rng, 50);
    const auto q = random_points(rng, 50);
    double expect = 0.0;
    for (const Vec3& a : p) {
      double best = 1e300;
      for (const Vec3& b : q) best = std::min(best, dot(a - b, a - b));
      expect += best;
    }
    expect /= p.size();
    double back = 0.0;
    for (const Vec3& b : q) {
      double best = 1e300;
      for (const Vec3& a : p) best = std::min(best, dot(a - b, a - b));
      back += best;
    }
    expect += back / q.size();
    CHECK(std::fabs(chamfer(p, q) - expect) < 1e-12);
  }

  SUBCASE("symmetry") {
    for (int i = 0; i < 5; ++i) {
      const auto p = random_points(rng, 17);
      const auto q = random_points(rng, 33);
      CHECK(chamfer(p, q) == chamfer(q, p));
    }
  }

  SUBCASE("grid path agrees with brute force") {
    // one side above the brute-force limit forces the grid index
    const auto p = random_points(rng, 64);
    const auto q = random_points(rng, 10657);
    double expect = 0.0;
    for (const Vec3& a : p) {
      double best = 1e300;
      for (const Vec3& b : q) best = std::min(best, dot(a - b, a - b));
      expect += best;
    }
    expect /= p.size();
    double back = 0.0;
    for (const Vec3& b : q) {
      double best = 1e300;
      for (const Vec3& a : p) best = std::min(best, dot(a - b, a - b));
      back += best;
    }
    expect += back / q.size();
    CHECK(std::fabs(chamfer(p, q) - expect) < 1e-12);
  }

  SUBCASE("rejects empty sets") {
    CHECK_THROWS_AS(chamfer({}, {{0, 0, 0}}), Error);
  }
}

TEST_CASE("iou3d") {
  const AABB unit{{0, 0, 0}, {1, 1, 1}};

  SUBCASE("identical boxes") { CHECK(iou3d(unit, unit) == 1.0); }

  SUBCASE("disjoint boxes") {
    CHECK(iou3d(unit, {{2, 2, 2}, {3, 3, 3}}) == 0.0);
  }

  SUBCASE("offset by half on one axis") {
    const AABB moved{{0.5, 0, 0}, {1.5, 1, 1}};
    CHECK(std::fabs(iou3d(unit, moved) - 1.0 / 3.0) <= 1e-12);
  }

  SUBCASE("degenerate boxes") {
    const AABB flat{{0, 0, 0}, {1, 1, 0}};
    CHECK(iou3d(flat, flat) == 1.0);
    CHECK(iou3d(flat, {{0, 0, 0}, {1, 1, 0.5}}) == 0.0);
  }

  SUBCASE("matches Monte-Carlo volume estimates") {
    Rng rng(19);
    for (int trial = 0; trial < 3; ++trial) {
      AABB a, b;
      a.lo = {rng.uniform(-1, 0), rng.uniform(-1, 0), rng.uniform(-1, 0)};
      a.hi = a.lo + Vec3{rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5),
                         rng.uniform(0.5, 1.5)};
      b.lo = {rng.uniform(-1, 0), rng.uniform(-1, 0), rng.uniform(-1, 0)};
      b.hi = b.lo + Vec3{rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5),
                         rng.uniform(0.5, 1.5)};
      AABB hull = a;
      hull.expand(b);
      const int n = 1000000;
      int in_inter = 0, in_union = 0;
      for (int i = 0; i < n; ++i) {
        const Vec3 p{rng.uniform(hull.lo.x, hull.hi.x),
                     rng.uniform(hull.lo.y, hull.hi.y),
                     rng.uniform(hull.lo.z, hull.hi.z)};
        const bool in_a = p.x >= a.lo.x && p.x <= a.hi.x && p.y >= a.lo.y &&
                          p.y <= a.hi.y && p.z >= a.lo.z && p.z <= a.hi.z;
        const bool in_b = p.x >= b.lo.x && p.x <= b.hi.x && p.y >= b.lo.y &&
                          p.y <= b.hi.y && p.z >= b.lo.z && p.z <= b.hi.z;
        in_inter += in_a && in_b;
        in_union += in_a || in_b;
      }
      if (in_union == 0) continue;
      const double mc = static_cast<double>(in_inter) / in_union;
      CHECK(std::fabs(iou3d(a, b) - mc) < 0.01);
    }
  }

  SUBCASE("invariant under shared translation") {
    Rng rng(23);
    for (int trial = 0; trial < 10; ++trial) {
      AABB a{{-0.3, -0.2, 0.0}, {0.4, 0.3, 0.6}};
      AABB b{{0.0, 0.0, 0.2}, {0.5, 0.6, 0.9}};
      const Vec3 t{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
      AABB at{a.lo + t, a.hi + t}, bt{b.lo + t, b.hi + t};
      CHECK(iou3d(at, bt) == doctest::Approx(iou3d(a, b)).epsilon(1e-12));
    }
  }
}

TEST_CASE("sample_surface") {
  SUBCASE("points satisfy the plane equation of a single triangle") {
    Mesh tri;
    tri.vertices = {{0, 0, 0}, {1, 0, 0.5}, {0, 1, 0.25}};
    tri.faces = {{0, 1, 2}};
    const Vec3 n = normalized(cross(tri.vertices[1] - tri.vertices[0],
                                    tri.vertices[2] - tri.vertices[0]));
    const double d = dot(n, tri.vertices[0]);
    for (const Vec3& p : sample_surface(tri, 200, 42))
      CHECK(std::fabs(dot(n, p) - d) <= 1e-12);
  }

  SUBCASE("area-weighted selection splits 9:1") {
    Mesh m;
    m.vertices = {{0, 0, 0}, {9, 0, 0}, {0, 2, 0},   // area 9
                  {10, 0, 0}, {11, 0, 0}, {10, 2, 0}};  // area 1
    m.faces = {{0, 1, 2}, {3, 4, 5}};
    const int n = 10000;
    const auto pts = sample_surface(m, n, 7);
    int big = 0;
    for (const Vec3& p : pts) big += p.x < 9.5;
    // binomial: mean 9000, sigma = sqrt(n*0.9*0.1) = 30
    CHECK(big > 9000 - 3 * 30);
    CHECK(big < 9000 + 3 * 30);
  }

  SUBCASE("deterministic per seed") {
    const Mesh m = icosphere(2);
    const auto a = sample_surface(m, 128, 99);
    const auto b = sample_surface(m, 128, 99);
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK(norm(a[i] - b[i]) == 0.0);
  }

  SUBCASE("rejects zero-area meshes") {
    Mesh flat;
    flat.vertices = {{0, 0, 0}, {0, 0, 0}, {1, 1, 1}};
    flat.faces = {{0, 1, 2}};
    CHECK_THROWS_AS(sample_surface(flat, 4, 1), Error);
  }
}

TEST_CASE("normalize_scene") {
  auto box_scene = [](Vec3 lo, Vec3 hi) {
    Scene s;
    SceneObject o;
    o.category = "box";
    o.transform.center = (lo + hi) * 0.5;
    o.transform.scale = (hi - lo) * 0.5;
    o.mesh = icosphere(0);
    s.objects.push_back(o);
    return s;
  };

  SUBCASE("maps [0,10]^3 onto the unit cube") {
    const Scene n = normalize_scene(box_scene({0, 0, 0}, {10, 10, 10}));
    const AABB b = n.bounds();
    CHECK(b.lo.x == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(b.hi.z == doctest::Approx(0.5).epsilon(1e-12));
  }

  SUBCASE("idempotent") {
    const Scene once = normalize_scene(box_scene({-3, 1, 2}, {4, 3, 5}));
    const Scene twice = normalize_scene(once);
    for (std::size_t i = 0; i < once.objects.size(); ++i) {
      CHECK(norm(once.objects[i].transform.center -
                 twice.objects[i].transform.center) <= 1e-12);
      CHECK(norm(once.objects[i].transform.scale -
                 twice.objects[i].transform.scale) <= 1e-12);
    }
  }

  SUBCASE("preserves aspect ratios") {
    const Scene n = normalize_scene(box_scene({0, 0, 0}, {8, 4, 2}));
    const Vec3 e = n.bounds().extents();
    CHECK(std::fabs(e.x / e.y - 2.0) <= 1e-12);
    CHECK(std::fabs(e.y / e.z - 2.0) <= 1e-12);
    CHECK(e.x == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("rejects empty and zero-extent scenes") {
    CHECK_THROWS_AS(normalize_scene(Scene{}), Error);
  }
}

TEST_CASE("obj round trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "sfield_obj_test";
  fs::create_directories(dir);
  const Mesh m = icosphere(1);
  save_obj(m, dir / "s.obj");
  const Mesh r = load_obj(dir / "s.obj");
  REQUIRE(r.vertices.size() == m.vertices.size());
  REQUIRE(r.faces.size() == m.faces.size());
  for (std::size_t i = 0; i < m.vertices.size(); ++i)
    CHECK(norm(r.vertices[i] - m.vertices[i]) == 0.0);
  for (std::size_t i = 0; i < m.faces.size(); ++i)
    CHECK(r.faces[i] == m.faces[i]);
  fs::remove_all(dir);
}
