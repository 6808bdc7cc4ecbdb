#include <algorithm>
#include <cmath>

#include "raster_common.hpp"
#include "sfield/render.hpp"

namespace sfield {

namespace raster {

Projected project_vertices(const double* verts, int nv,
                           const std::vector<std::array<int, 3>>& faces,
                           const Camera& cam, const Basis& b) {
  Projected p;
  p.sx.resize(nv);
  p.sy.resize(nv);
  p.z.resize(nv);
  p.cx.resize(nv);
  p.cy.resize(nv);
  p.n_accum.assign(nv, Vec3{});
  p.n_cam.resize(nv);

  for (int i = 0; i < nv; ++i) {
    const Vec3 v{verts[i * 3], verts[i * 3 + 1], verts[i * 3 + 2]};
    const Vec3 rel = v - cam.position;
    const double x = dot(b.right, rel);
    const double y = dot(b.up, rel);
    const double z = dot(b.forward, rel);
    p.cx[i] = x;
    p.cy[i] = y;
    p.z[i] = z;
    if (b.perspective) {
      const double zz = std::max(z, kZNear);
      p.sx[i] = x / (zz * b.half_w);
      p.sy[i] = y / (zz * b.half_h);
    } else {
      p.sx[i] = x / b.ortho_half;
      p.sy[i] = y / b.ortho_half;
    }
  }

  // area-weighted world vertex normals, then rotate into camera space
  for (const auto& f : faces) {
    const Vec3 a{verts[f[0] * 3], verts[f[0] * 3 + 1], verts[f[0] * 3 + 2]};
    const Vec3 v1{verts[f[1] * 3], verts[f[1] * 3 + 1], verts[f[1] * 3 + 2]};
    const Vec3 v2{verts[f[2] * 3], verts[f[2] * 3 + 1], verts[f[2] * 3 + 2]};
    const Vec3 fn = cross(v1 - a, v2 - a);
    for (int k = 0; k < 3; ++k) p.n_accum[f[k]] += fn;
  }
  for (int i = 0; i < nv; ++i) {
    const Vec3 n = normalized(p.n_accum[i]);
    p.n_cam[i] = {dot(b.right, n), dot(b.up, n), dot(b.forward, n)};
  }
  return p;
}

RowBins build_row_bins(const Projected& p,
                       const std::vector<std::array<int, 3>>& faces, int w,
                       int h, double pad_ndc) {
  RowBins bins;
  bins.rows.resize(h);
  for (std::size_t t = 0; t < faces.size(); ++t) {
    const auto& f = faces[t];
    bool behind = false;
    for (int k = 0; k < 3; ++k)
      if (p.z[f[k]] <= kZNear) behind = true;
    if (behind) continue;  // no clipping; scene content stays in front

    double x0 = p.sx[f[0]], x1 = x0, y0 = p.sy[f[0]], y1 = y0;
    for (int k = 1; k < 3; ++k) {
      x0 = std::min(x0, p.sx[f[k]]);
      x1 = std::max(x1, p.sx[f[k]]);
      y0 = std::min(y0, p.sy[f[k]]);
      y1 = std::max(y1, p.sy[f[k]]);
    }
    x0 -= pad_ndc;
    x1 += pad_ndc;
    y0 -= pad_ndc;
    y1 += pad_ndc;
    // ndc -> pixel index ranges (row 0 at ndc_y max)
    const int col0 = std::max(0, static_cast<int>(std::ceil((x0 + 1.0) * w / 2.0 - 0.5)));
    const int col1 = std::min(w - 1, static_cast<int>(std::floor((x1 + 1.0) * w / 2.0 - 0.5)));
    const int row0 = std::max(0, static_cast<int>(std::ceil((1.0 - y1) * h / 2.0 - 0.5)));
    const int row1 = std::min(h - 1, static_cast<int>(std::floor((1.0 - y0) * h / 2.0 - 0.5)));
    if (col0 > col1 || row0 > row1) continue;
    for (int r = row0; r <= row1; ++r)
      bins.rows[r].push_back({static_cast<int>(t), col0, col1});
  }
  return bins;
}

}  // namespace raster

namespace {

using raster::Basis;
using raster::cross2;
using raster::Projected;
using raster::RowBins;

constexpr double kDegenerateArea = 1e-10;

// sigmoid-coverage cutoff; triangles farther than this many temperatures
// from a pixel are culled symmetrically in forward and backward. 30
// temperatures puts the truncated coverage below 1e-13, under the
// finite-difference noise floor of the gradient checks.
constexpr double kCoverageCutoff = 30.0;

struct TriSample {
  double d = 0.0;       // signed NDC distance to the triangle boundary
  double cov = 0.0;     // sigmoid(d / temperature)
  double lam[3] = {0, 0, 0};  // clamped-renormalized barycentrics
  double z = 0.0;       // interpolated view depth
  Vec3 n;               // interpolated camera-space normal
  bool degenerate = false;
};

// signed 2D distance: positive inside, negative outside; nearest edge and
// its parameter are recomputed identically in the backward pass
struct EdgeHit {
  int edge = 0;
  double t = 0.0;
  double dist = 0.0;
  bool inside = false;
};

EdgeHit nearest_edge(const double* ax, const double* ay, double qx, double qy) {
  EdgeHit hit;
  double best = -1.0;
  for (int e = 0; e < 3; ++e) {
    const int u = e, v = (e + 1) % 3;
    const double ex = ax[v] - ax[u], ey = ay[v] - ay[u];
    const double len2 = ex * ex + ey * ey;
    double t = 0.0;
    if (len2 > 1e-30)
      t = std::clamp(((qx - ax[u]) * ex + (qy - ay[u]) * ey) / len2, 0.0, 1.0);
    const double dx = qx - (ax[u] + t * ex), dy = qy - (ay[u] + t * ey);
    const double d2 = dx * dx + dy * dy;
    if (best < 0.0 || d2 < best) {
      best = d2;
      hit.edge = e;
      hit.t = t;
    }
  }
  hit.dist = std::sqrt(best);

  const double denom = cross2(ax[1] - ax[0], ay[1] - ay[0], ax[2] - ax[0],
                              ay[2] - ay[0]);
  const double orient = denom >= 0.0 ? 1.0 : -1.0;
  hit.inside = true;
  for (int e = 0; e < 3; ++e) {
    const int u = e, v = (e + 1) % 3;
    if (orient * cross2(ax[v] - ax[u], ay[v] - ay[u], qx - ax[u],
                        qy - ay[u]) < 0.0) {
      hit.inside = false;
      break;
    }
  }
  return hit;
}

TriSample sample_triangle(const Projected& p, const std::array<int, 3>& f,
                          double qx, double qy, double temperature) {
  TriSample s;
  const double ax[3] = {p.sx[f[0]], p.sx[f[1]], p.sx[f[2]]};
  const double ay[3] = {p.sy[f[0]], p.sy[f[1]], p.sy[f[2]]};

  const EdgeHit hit = nearest_edge(ax, ay, qx, qy);
  s.d = hit.inside ? hit.dist : -hit.dist;
  const double arg = s.d / temperature;
  s.cov = arg >= 0.0 ? 1.0 / (1.0 + std::exp(-arg))
                     : std::exp(arg) / (1.0 + std::exp(arg));

  const double denom = cross2(ax[1] - ax[0], ay[1] - ay[0], ax[2] - ax[0],
                              ay[2] - ay[0]);
  if (std::fabs(denom) < kDegenerateArea) {
    s.degenerate = true;
    s.lam[0] = s.lam[1] = s.lam[2] = 1.0 / 3.0;
  } else {
    const double raw[3] = {
        cross2(ax[1] - qx, ay[1] - qy, ax[2] - qx, ay[2] - qy) / denom,
        cross2(ax[2] - qx, ay[2] - qy, ax[0] - qx, ay[0] - qy) / denom,
        cross2(ax[0] - qx, ay[0] - qy, ax[1] - qx, ay[1] - qy) / denom};
    double total = 0.0;
    for (int k = 0; k < 3; ++k) total += std::max(raw[k], 0.0);
    for (int k = 0; k < 3; ++k) s.lam[k] = std::max(raw[k], 0.0) / total;
  }
  for (int k = 0; k < 3; ++k) {
    s.z += s.lam[k] * p.z[f[k]];
    s.n += p.n_cam[f[k]] * s.lam[k];
  }
  return s;
}

double far_depth(const Camera& cam) { return norm(cam.position) + 1.0; }

// forward aggregation for one pixel; contributions kept in bin order
void aggregate_pixel(const std::vector<TriSample>& tris, double z_far,
                     double gamma, double out[4]) {
  double keep = 1.0;
  double zmin = z_far;
  for (const TriSample& t : tris) {
    keep *= 1.0 - t.cov;
    zmin = std::min(zmin, t.z);
  }
  double s_sum = std::exp(-(z_far - zmin) / gamma);  // background
  Vec3 acc;
  for (const TriSample& t : tris) {
    const double s = t.cov * std::exp(-(t.z - zmin) / gamma);
    acc += t.n * s;
    s_sum += s;
  }
  out[0] = acc.x / s_sum;
  out[1] = acc.y / s_sum;
  out[2] = acc.z / s_sum;
  out[3] = 1.0 - keep;
}

Tensor raster_soft_forward(const double* verts, int nv,
                           const std::vector<std::array<int, 3>>& faces,
                           const Camera& cam, const SoftRasterConfig& cfg) {
  require(cfg.temperature > 0.0, "rasterize_soft: temperature must be > 0, got ",
          cfg.temperature);
  require(!faces.empty(), "rasterize_soft: mesh has no faces");
  const Basis basis = raster::make_basis(cam);
  require(basis.perspective, "rasterize_soft: perspective cameras only");
  const Projected proj =
      raster::project_vertices(verts, nv, faces, cam, basis);
  const double pad = kCoverageCutoff * cfg.temperature;
  const RowBins bins =
      raster::build_row_bins(proj, faces, cam.width, cam.height, pad);
  const double z_far = far_depth(cam);

  Tensor out({cam.height, cam.width, 4});
  std::vector<TriSample> tris;
  for (int row = 0; row < cam.height; ++row) {
    const double qy = raster::ndc_y(row, cam.height);
    for (int col = 0; col < cam.width; ++col) {
      const double qx = raster::ndc_x(col, cam.width);
      tris.clear();
      for (const auto& e : bins.rows[row]) {
        if (col < e.col0 || col > e.col1) continue;
        tris.push_back(
            sample_triangle(proj, faces[e.tri], qx, qy, cfg.temperature));
      }
      aggregate_pixel(tris, z_far, cfg.depth_sharpness,
                      out.data() + (row * cam.width + col) * 4);
    }
  }
  return out;
}

// ---- backward --------------------------------------------------------------

struct VertexGrads {
  std::vector<double> sx, sy, z;  // per-vertex screen/depth grads
  std::vector<Vec3> n_cam;        // per-vertex camera-space normal grads
};

void backward_pixel(const Projected& proj,
                    const std::vector<std::array<int, 3>>& faces,
                    const std::vector<int>& tri_ids,
                    const std::vector<TriSample>& tris, double qx, double qy,
                    double z_far, const SoftRasterConfig& cfg,
                    const double* g4, VertexGrads& vg) {
  const Vec3 gn{g4[0], g4[1], g4[2]};
  const double gm = g4[3];
  const std::size_t n = tris.size();
  if (n == 0) return;

  // recompute the aggregation state
  double zmin = z_far;
  int zero_factors = 0;
  double prod_nonzero = 1.0;
  for (const TriSample& t : tris) {
    zmin = std::min(zmin, t.z);
    const double factor = 1.0 - t.cov;
    if (factor == 0.0)
      ++zero_factors;
    else
      prod_nonzero *= factor;
  }
  const double gamma = cfg.depth_sharpness;
  double s_sum = std::exp(-(z_far - zmin) / gamma);
  std::vector<double> s(n);
  Vec3 normal_acc;
  for (std::size_t j = 0; j < n; ++j) {
    s[j] = tris[j].cov * std::exp(-(tris[j].z - zmin) / gamma);
    s_sum += s[j];
    normal_acc += tris[j].n * s[j];
  }
  const Vec3 normal = normal_acc * (1.0 / s_sum);

  for (std::size_t j = 0; j < n; ++j) {
    const TriSample& t = tris[j];
    const auto& f = faces[tri_ids[j]];

    // mask = 1 - prod(1 - cov)
    double dmask_dcov;
    const double factor = 1.0 - t.cov;
    if (zero_factors == 0)
      dmask_dcov = prod_nonzero / factor;
    else if (zero_factors == 1 && factor == 0.0)
      dmask_dcov = prod_nonzero;
    else
      dmask_dcov = 0.0;
    double gcov = gm * dmask_dcov;

    // normal = sum_j (s_j / S) n_j with a background entry at zero normal;
    // the zmin shift cancels exactly, so it gets no gradient
    const double gs = dot(gn, t.n - normal) / s_sum;
    gcov += gs * std::exp(-(t.z - zmin) / gamma);
    double gz_interp = -gs * s[j] / gamma;
    const Vec3 gtri_n = gn * (s[j] / s_sum);

    // coverage = sigmoid(d / temperature)
    const double gd = gcov * t.cov * (1.0 - t.cov) / cfg.temperature;

    // interpolated depth and normal -> barycentrics + vertex quantities
    double glam[3];
    for (int k = 0; k < 3; ++k) {
      glam[k] = gz_interp * proj.z[f[k]] + dot(gtri_n, proj.n_cam[f[k]]);
      vg.z[f[k]] += gz_interp * t.lam[k];
      vg.n_cam[f[k]] += gtri_n * t.lam[k];
    }

    const double ax[3] = {proj.sx[f[0]], proj.sx[f[1]], proj.sx[f[2]]};
    const double ay[3] = {proj.sy[f[0]], proj.sy[f[1]], proj.sy[f[2]]};

    // barycentric backward (skip the degenerate fallback, which is constant)
    if (!t.degenerate) {
      const double denom = cross2(ax[1] - ax[0], ay[1] - ay[0], ax[2] - ax[0],
                                  ay[2] - ay[0]);
      double raw[3] = {
          cross2(ax[1] - qx, ay[1] - qy, ax[2] - qx, ay[2] - qy) / denom,
          cross2(ax[2] - qx, ay[2] - qy, ax[0] - qx, ay[0] - qy) / denom,
          cross2(ax[0] - qx, ay[0] - qy, ax[1] - qx, ay[1] - qy) / denom};
      double total = 0.0;
      for (int k = 0; k < 3; ++k) total += std::max(raw[k], 0.0);
      // lam_k = max(raw_k,0)/total
      double graw[3];
      double gdot = 0.0;
      for (int k = 0; k < 3; ++k) gdot += glam[k] * t.lam[k];
      for (int k = 0; k < 3; ++k)
        graw[k] = raw[k] > 0.0 ? (glam[k] - gdot) / total : 0.0;
      // raw_0 = cross2(v1-q, v2-q)/denom etc.; accumulate into screen verts
      double gax[3] = {0, 0, 0}, gay[3] = {0, 0, 0};
      double gdenom = 0.0;
      for (int k = 0; k < 3; ++k) {
        if (graw[k] == 0.0) continue;
        const int i1 = (k + 1) % 3, i2 = (k + 2) % 3;
        const double u1x = ax[i1] - qx, u1y = ay[i1] - qy;
        const double u2x = ax[i2] - qx, u2y = ay[i2] - qy;
        const double gnum = graw[k] / denom;
        // cross2(u1,u2) = u1x*u2y - u1y*u2x
        gax[i1] += gnum * u2y;
        gay[i1] += -gnum * u2x;
        gax[i2] += -gnum * u1y;
        gay[i2] += gnum * u1x;
        gdenom += -graw[k] * raw[k] / denom;
      }
      // denom = cross2(v1-v0, v2-v0)
      if (gdenom != 0.0) {
        const double e1x = ax[1] - ax[0], e1y = ay[1] - ay[0];
        const double e2x = ax[2] - ax[0], e2y = ay[2] - ay[0];
        gax[1] += gdenom * e2y;
        gay[1] += -gdenom * e2x;
        gax[2] += -gdenom * e1y;
        gay[2] += gdenom * e1x;
        gax[0] += gdenom * (e1y - e2y);
        gay[0] += gdenom * (e2x - e1x);
      }
      for (int k = 0; k < 3; ++k) {
        vg.sx[f[k]] += gax[k];
        vg.sy[f[k]] += gay[k];
      }
    }

    // signed distance backward through the nearest edge
    if (gd != 0.0) {
      const EdgeHit hit = nearest_edge(ax, ay, qx, qy);
      const double sign = hit.inside ? 1.0 : -1.0;
      const int u = hit.edge, v = (hit.edge + 1) % 3;
      const double ex = ax[v] - ax[u], ey = ay[v] - ay[u];
      const double cxp = qx - (ax[u] + hit.t * ex);
      const double cyp = qy - (ay[u] + hit.t * ey);
      const double dist = std::max(hit.dist, 1e-12);
      // d = sign * |q - (u + t e)|; dd/dclosest = -sign * (q-closest)/dist
      const double gclx = -gd * sign * cxp / dist;
      const double gcly = -gd * sign * cyp / dist;
      if (hit.t <= 0.0) {
        vg.sx[f[u]] += gclx;
        vg.sy[f[u]] += gcly;
      } else if (hit.t >= 1.0) {
        vg.sx[f[v]] += gclx;
        vg.sy[f[v]] += gcly;
      } else {
        // interior: t = dot(q-u, e)/|e|^2 also moves with the endpoints
        const double len2 = ex * ex + ey * ey;
        const double gt = gclx * ex + gcly * ey;  // dclosest/dt = e
        const double dqux = qx - ax[u], dquy = qy - ay[u];
        // dt/du and dt/dv through both the dot product and |e|^2
        const double dt_dux = (-ex - dqux + 2.0 * hit.t * ex) / len2;
        const double dt_duy = (-ey - dquy + 2.0 * hit.t * ey) / len2;
        const double dt_dvx = (dqux - 2.0 * hit.t * ex) / len2;
        const double dt_dvy = (dquy - 2.0 * hit.t * ey) / len2;
        vg.sx[f[u]] += gclx * (1.0 - hit.t) + gt * dt_dux;
        vg.sy[f[u]] += gcly * (1.0 - hit.t) + gt * dt_duy;
        vg.sx[f[v]] += gclx * hit.t + gt * dt_dvx;
        vg.sy[f[v]] += gcly * hit.t + gt * dt_dvy;
      }
    }
  }
}

void raster_soft_backward(const double* verts, int nv,
                          const std::vector<std::array<int, 3>>& faces,
                          const Camera& cam, const SoftRasterConfig& cfg,
                          const Tensor& grad_out, double* gverts) {
  const Basis basis = raster::make_basis(cam);
  const Projected proj =
      raster::project_vertices(verts, nv, faces, cam, basis);
  const double pad = kCoverageCutoff * cfg.temperature;
  const RowBins bins =
      raster::build_row_bins(proj, faces, cam.width, cam.height, pad);
  const double z_far = far_depth(cam);

  VertexGrads vg;
  vg.sx.assign(nv, 0.0);
  vg.sy.assign(nv, 0.0);
  vg.z.assign(nv, 0.0);
  vg.n_cam.assign(nv, Vec3{});

  std::vector<TriSample> tris;
  std::vector<int> tri_ids;
  for (int row = 0; row < cam.height; ++row) {
    const double qy = raster::ndc_y(row, cam.height);
    for (int col = 0; col < cam.width; ++col) {
      const double qx = raster::ndc_x(col, cam.width);
      tris.clear();
      tri_ids.clear();
      for (const auto& e : bins.rows[row]) {
        if (col < e.col0 || col > e.col1) continue;
        tris.push_back(
            sample_triangle(proj, faces[e.tri], qx, qy, cfg.temperature));
        tri_ids.push_back(e.tri);
      }
      backward_pixel(proj, faces, tri_ids, tris, qx, qy, z_far, cfg,
                     grad_out.data() + (row * cam.width + col) * 4, vg);
    }
  }

  // screen/depth/normal gradients -> world vertices
  std::vector<Vec3> gn_world(nv);
  for (int i = 0; i < nv; ++i) {
    // n_cam = R n_world
    gn_world[i] = basis.right * vg.n_cam[i].x + basis.up * vg.n_cam[i].y +
                  basis.forward * vg.n_cam[i].z;
    // through the normalization n = a/|a|
    const Vec3 a = proj.n_accum[i];
    const double len = norm(a);
    if (len > 0.0) {
      const Vec3 nunit = a * (1.0 / len);
      gn_world[i] =
          (gn_world[i] - nunit * dot(gn_world[i], nunit)) * (1.0 / len);
    } else {
      gn_world[i] = Vec3{};
    }
  }
  // accumulator = sum of face cross products
  std::vector<Vec3> gv(nv);
  for (const auto& f : faces) {
    const Vec3 gc = gn_world[f[0]] + gn_world[f[1]] + gn_world[f[2]];
    if (gc.x == 0.0 && gc.y == 0.0 && gc.z == 0.0) continue;
    const Vec3 a{verts[f[0] * 3], verts[f[0] * 3 + 1], verts[f[0] * 3 + 2]};
    const Vec3 v1{verts[f[1] * 3], verts[f[1] * 3 + 1], verts[f[1] * 3 + 2]};
    const Vec3 v2{verts[f[2] * 3], verts[f[2] * 3 + 1], verts[f[2] * 3 + 2]};
    const Vec3 e1 = v1 - a, e2 = v2 - a;
    const Vec3 ge1 = cross(e2, gc);  // d cross(e1,e2) . gc / d e1
    const Vec3 ge2 = cross(gc, e1);
    gv[f[1]] += ge1;
    gv[f[2]] += ge2;
    gv[f[0]] += (ge1 + ge2) * -1.0;
  }
  // projection chain
  for (int i = 0; i < nv; ++i) {
    double gx_cam, gy_cam, gz_cam = vg.z[i];
    if (basis.perspective) {
      const double zz = std::max(proj.z[i], raster::kZNear);
      gx_cam = vg.sx[i] / (zz * basis.half_w);
      gy_cam = vg.sy[i] / (zz * basis.half_h);
      if (proj.z[i] > raster::kZNear) {
        gz_cam += -vg.sx[i] * proj.sx[i] / zz - vg.sy[i] * proj.sy[i] / zz;
      }
    } else {
      gx_cam = vg.sx[i] / basis.ortho_half;
      gy_cam = vg.sy[i] / basis.ortho_half;
    }
    const Vec3 g = basis.right * gx_cam + basis.up * gy_cam +
                   basis.forward * gz_cam + gv[i];
    gverts[i * 3] += g.x;
    gverts[i * 3 + 1] += g.y;
    gverts[i * 3 + 2] += g.z;
  }
}

class RasterSoftOp : public CustomOp {
 public:
  RasterSoftOp(std::vector<std::array<int, 3>> faces, Camera cam,
               SoftRasterConfig cfg)
      : faces_(std::move(faces)), cam_(cam), cfg_(cfg) {}

  const char* name() const override { return "rasterize_soft"; }

  Tensor forward(const std::vector<const Tensor*>& in) override {
    const Tensor& v = *in[0];
    require(v.rank() == 2 && v.cols() == 3,
            "rasterize_soft: vertices must be [V,3], got ",
            shape_str(v.shape()));
    return raster_soft_forward(v.data(), v.rows(), faces_, cam_, cfg_);
  }

  void backward(const Tensor& g, const std::vector<const Tensor*>& in,
                const Tensor&, const std::vector<Tensor*>& gi) override {
    const Tensor& v = *in[0];
    raster_soft_backward(v.data(), v.rows(), faces_, cam_, cfg_, g,
                         gi[0]->data());
  }

 private:
  std::vector<std::array<int, 3>> faces_;
  Camera cam_;
  SoftRasterConfig cfg_;
};

}  // namespace

Value rasterize_soft_op(Value vertices,
                        const std::vector<std::array<int, 3>>& faces,
                        const Camera& cam, const SoftRasterConfig& cfg) {
  return vertices.tape->custom(
      std::make_shared<RasterSoftOp>(faces, cam, cfg), {vertices});
}

RenderBuffers rasterize_soft(const Mesh& mesh, const Camera& cam,
                             double temperature, double depth_sharpness) {
  require(!mesh.vertices.empty(), "rasterize_soft: empty mesh");
  SoftRasterConfig cfg;
  cfg.temperature = temperature;
  cfg.depth_sharpness = depth_sharpness;
  Tensor verts({static_cast<int>(mesh.vertices.size()), 3});
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    verts[i * 3] = mesh.vertices[i].x;
    verts[i * 3 + 1] = mesh.vertices[i].y;
    verts[i * 3 + 2] = mesh.vertices[i].z;
  }
  return split_raster(raster_soft_forward(verts.data(), verts.rows(),
                                          mesh.faces, cam, cfg));
}

}  // namespace sfield
