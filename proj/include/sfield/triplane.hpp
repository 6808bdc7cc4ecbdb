#pragma once
// Tri-plane feature field: three axis-aligned N x N x C planes. A 3D query
// is projected onto each plane, bilinearly interpolated, and the three
// results are summed. Differentiable with respect to the plane features
// and the query points.
//
// Plane orientation convention: plane 0 uses (x,y) and drops z, plane 1
// uses (x,z) and drops y, plane 2 uses (y,z) and drops x. The first
// projected coordinate indexes the plane's first axis.

#include <array>

#include "sfield/geometry.hpp"
#include "sfield/tape.hpp"

namespace sfield {

struct TriPlaneField {
  std::array<Tensor, 3> planes;  // each [N, N, C]

  TriPlaneField() = default;
  TriPlaneField(int n, int c) {
    for (Tensor& p : planes) p = Tensor({n, n, c});
  }

  int n() const { return planes[0].dim(0); }
  int c() const { return planes[0].dim(2); }
};

// Queries outside [-0.5,0.5]^3 are clamped to the cube and counted here
// (not an error: deformed vertices may transiently exit the cube).
long long triplane_clamp_count();
void reset_triplane_clamp_count();

// Drops the axis orthogonal to the plane and maps the remaining two
// coordinates affinely from [-0.5,0.5] to the grid range [0, N-1].
std::array<double, 2> project(const Vec3& p, int plane_index, int n);

// 4-neighbor bilinear blend of one plane at continuous grid coordinates.
std::vector<double> sample_plane(const Tensor& plane, double u, double v);

// Sum of the three plane samples (no tape; used at inference).
std::vector<double> sample_field(const TriPlaneField& field, const Vec3& p);

// Elementwise batch form of sample_field; empty input gives empty output.
std::vector<std::vector<double>> sample_field_points(
    const TriPlaneField& field, const std::vector<Vec3>& points);

// Tape op: points [P,3] -> features [P,C], recorded as a single node.
// Gradients flow to all three planes and to the points (right-continuous
// at grid lines).
Value sample_field_batch(Value plane_xy, Value plane_xz, Value plane_yz,
                         Value points);

}  // namespace sfield
