#pragma once
// Shared projection machinery for the rasterizers (internal header).

#include <vector>

#include "sfield/render.hpp"

namespace sfield::raster {

inline double cross2(double ax, double ay, double bx, double by) {
  return ax * by - ay * bx;
}

struct Basis {
  Vec3 right, up, forward;
  double half_w = 1.0, half_h = 1.0;  // perspective tangents
  double ortho_half = 0.5;
  bool perspective = true;
};

inline Basis make_basis(const Camera& cam) {
  Basis b;
  b.right = cam.right();
  b.up = cam.up();
  b.forward = cam.forward();
  b.perspective = cam.mode == Camera::Mode::kPerspective;
  const double t = std::tan(cam.fov_deg * 3.14159265358979323846 / 360.0);
  b.half_h = t;
  b.half_w = t * static_cast<double>(cam.width) / cam.height;
  b.ortho_half = cam.ortho_half;
  return b;
}

// Per-vertex projection results plus unit camera-space vertex normals.
struct Projected {
  std::vector<double> sx, sy;  // NDC
  std::vector<double> z;       // view depth (along forward)
  std::vector<Vec3> n_cam;     // unit camera-space vertex normals
  std::vector<Vec3> n_accum;   // unnormalized world normal accumulators
  std::vector<double> cx, cy;  // camera-space x/y (needed by the backward)
};

constexpr double kZNear = 1e-6;

Projected project_vertices(const double* verts, int nv,
                           const std::vector<std::array<int, 3>>& faces,
                           const Camera& cam, const Basis& b);

// pixel-center NDC coordinates
inline double ndc_x(int col, int w) { return 2.0 * (col + 0.5) / w - 1.0; }
inline double ndc_y(int row, int h) { return 1.0 - 2.0 * (row + 0.5) / h; }

// Row-binned triangle lists with a padded screen bound per triangle.
struct RowBins {
  struct Entry {
    int tri;
    int col0, col1;
  };
  std::vector<std::vector<Entry>> rows;
};

RowBins build_row_bins(const Projected& p,
                       const std::vector<std::array<int, 3>>& faces, int w,
                       int h, double pad_ndc);

}  // namespace sfield::raster
