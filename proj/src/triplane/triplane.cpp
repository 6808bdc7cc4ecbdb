#include "sfield/triplane.hpp"

#include <atomic>

#include "sfield/kernels.hpp"

namespace sfield {

namespace {

std::atomic<long long> g_clamp_count{0};

double clamp_coord(double v) {
  if (v < -0.5) {
    g_clamp_count.fetch_add(1, std::memory_order_relaxed);
    return -0.5;
  }
  if (v > 0.5) {
    g_clamp_count.fetch_add(1, std::memory_order_relaxed);
    return 0.5;
  }
  return v;
}

// the two in-plane coordinates for each plane (see header convention)
std::array<double, 2> plane_coords(const Vec3& p, int e) {
  switch (e) {
    case 0: return {p.x, p.y};
    case 1: return {p.x, p.z};
    default: return {p.y, p.z};
  }
}

struct Corner {
  int i0, j0;
  double du, dv;
};

Corner corner_of(double u, double v, int n) {
  Corner c;
  c.i0 = std::min(static_cast<int>(u), n - 2);
  c.j0 = std::min(static_cast<int>(v), n - 2);
  c.du = u - c.i0;
  c.dv = v - c.j0;
  return c;
}

}  // namespace

long long triplane_clamp_count() { return g_clamp_count.load(); }
void reset_triplane_clamp_count() { g_clamp_count.store(0); }

std::array<double, 2> project(const Vec3& p, int plane_index, int n) {
  require(plane_index >= 0 && plane_index < 3, "project: bad plane index ",
          plane_index);
  require(n >= 2, "project: plane resolution must be >= 2");
  const auto [a, b] = plane_coords(p, plane_index);
  const double s = static_cast<double>(n - 1);
  return {(clamp_coord(a) + 0.5) * s, (clamp_coord(b) + 0.5) * s};
}

std::vector<double> sample_plane(const Tensor& plane, double u, double v) {
  require(plane.rank() == 3 && plane.dim(0) == plane.dim(1),
          "sample_plane: plane must be [N,N,C], got ",
          shape_str(plane.shape()));
  const int n = plane.dim(0), c = plane.dim(2);
  require(u >= 0.0 && u <= n - 1 && v >= 0.0 && v <= n - 1,
          "sample_plane: uv (", u, ",", v, ") outside [0,", n - 1, "]^2");
  const Corner k = corner_of(u, v, n);
  const double* f00 = plane.data() + (k.i0 * n + k.j0) * c;
  const double* f01 = f00 + c;            // (i0, j0+1)
  const double* f10 = f00 + n * c;        // (i0+1, j0)
  const double* f11 = f00 + (n + 1) * c;  // (i0+1, j0+1)
  std::vector<double> out(c);
  kernels::active().lerp4(out.data(), f00, f01, f10, f11,
                          (1.0 - k.du) * (1.0 - k.dv), (1.0 - k.du) * k.dv,
                          k.du * (1.0 - k.dv), k.du * k.dv, c);
  return out;
}

std::vector<double> sample_field(const TriPlaneField& field, const Vec3& p) {
  std::vector<double> acc(field.c(), 0.0);
  for (int e = 0; e < 3; ++e) {
    const auto [u, v] = project(p, e, field.n());
    const std::vector<double> s = sample_plane(field.planes[e], u, v);
    kernels::active().add(acc.data(), acc.data(), s.data(), acc.size());
  }
  return acc;
}

std::vector<std::vector<double>> sample_field_points(
    const TriPlaneField& field, const std::vector<Vec3>& points) {
  std::vector<std::vector<double>> out;
  out.reserve(points.size());
  for (const Vec3& p : points) out.push_back(sample_field(field, p));
  return out;
}

namespace {

// Single-node batched field sampling. Inputs: three planes and the point
// matrix; forward and backward recompute the projection per point.
class FieldSampleOp : public CustomOp {
 public:
  const char* name() const override { return "triplane_sample"; }

  Tensor forward(const std::vector<const Tensor*>& in) override {
    const Tensor& pts = *in[3];
    require(pts.rank() == 2 && pts.cols() == 3,
            "sample_field_batch: points must be [P,3], got ",
            shape_str(pts.shape()));
    const int n = in[0]->dim(0), c = in[0]->dim(2);
    for (int e = 0; e < 3; ++e)
      require(in[e]->rank() == 3 && in[e]->dim(0) == n &&
                  in[e]->dim(1) == n && in[e]->dim(2) == c,
              "sample_field_batch: planes disagree on N or C");
    const int p = pts.rows();
    Tensor out({p, c});
    std::vector<double> acc(c);
    for (int i = 0; i < p; ++i) {
      const Vec3 q{pts[i * 3], pts[i * 3 + 1], pts[i * 3 + 2]};
      for (int e = 0; e < 3; ++e) {
        const auto [u, v] = project(q, e, n);
        const Corner k = corner_of(u, v, n);
        const double* base = in[e]->data() + (k.i0 * n + k.j0) * c;
        kernels::active().lerp4(acc.data(), base, base + c, base + n * c,
                                base + (n + 1) * c,
                                (1.0 - k.du) * (1.0 - k.dv),
                                (1.0 - k.du) * k.dv, k.du * (1.0 - k.dv),
                                k.du * k.dv, c);
        kernels::active().add(out.data() + i * c, out.data() + i * c,
                              acc.data(), c);
      }
    }
    return out;
  }

  void backward(const Tensor& g, const std::vector<const Tensor*>& in,
                const Tensor&, const std::vector<Tensor*>& gi) override {
    const Tensor& pts = *in[3];
    const int n = in[0]->dim(0), c = in[0]->dim(2);
    const double grid_scale = static_cast<double>(n - 1);
    for (int i = 0; i < pts.rows(); ++i) {
      const Vec3 q{pts[i * 3], pts[i * 3 + 1], pts[i * 3 + 2]};
      const double* gr = g.data() + i * c;
      for (int e = 0; e < 3; ++e) {
        const auto [u, v] = project(q, e, n);
        const Corner k = corner_of(u, v, n);
        const double* base = in[e]->data() + (k.i0 * n + k.j0) * c;
        double* gplane = gi[e]->data() + (k.i0 * n + k.j0) * c;
        const double w00 = (1.0 - k.du) * (1.0 - k.dv);
        const double w01 = (1.0 - k.du) * k.dv;
        const double w10 = k.du * (1.0 - k.dv);
        const double w11 = k.du * k.dv;
        kernels::active().axpy(gplane, w00, gr, c);
        kernels::active().axpy(gplane + c, w01, gr, c);
        kernels::active().axpy(gplane + n * c, w10, gr, c);
        kernels::active().axpy(gplane + (n + 1) * c, w11, gr, c);

        // d(out)/du = (1-dv)(f10-f00) + dv(f11-f01); likewise for v
        double gu = 0.0, gv = 0.0;
        const double* f00 = base;
        const double* f01 = base + c;
        const double* f10 = base + n * c;
        const double* f11 = base + (n + 1) * c;
        for (int ch = 0; ch < c; ++ch) {
          gu += gr[ch] * ((1.0 - k.dv) * (f10[ch] - f00[ch]) +
                          k.dv * (f11[ch] - f01[ch]));
          gv += gr[ch] * ((1.0 - k.du) * (f01[ch] - f00[ch]) +
                          k.du * (f11[ch] - f10[ch]));
        }
        // chain through the projection; clamped coordinates get no grad
        const auto [a, b] = plane_coords(q, e);
        const int axis_u = e == 2 ? 1 : 0;
        const int axis_v = e == 0 ? 1 : 2;
        double* gpt = gi[3]->data() + i * 3;
        if (a >= -0.5 && a <= 0.5) gpt[axis_u] += gu * grid_scale;
        if (b >= -0.5 && b <= 0.5) gpt[axis_v] += gv * grid_scale;
      }
    }
  }
};

}  // namespace

Value sample_field_batch(Value plane_xy, Value plane_xz, Value plane_yz,
                         Value points) {
  return points.tape->custom(std::make_shared<FieldSampleOp>(),
                             {plane_xy, plane_xz, plane_yz, points});
}

}  // namespace sfield
