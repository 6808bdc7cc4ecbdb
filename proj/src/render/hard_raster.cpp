#include <limits>

#include "raster_common.hpp"
#include "sfield/render.hpp"

namespace sfield {

namespace {

using raster::cross2;

struct HardHit {
  double depth = std::numeric_limits<double>::infinity();
  Vec3 normal;
  bool covered = false;
};

}  // namespace

RenderBuffers rasterize_hard(const Mesh& mesh, const Camera& cam) {
  require(!mesh.vertices.empty(), "rasterize_hard: empty mesh");
  const raster::Basis basis = raster::make_basis(cam);
  Tensor verts({static_cast<int>(mesh.vertices.size()), 3});
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    verts[i * 3] = mesh.vertices[i].x;
    verts[i * 3 + 1] = mesh.vertices[i].y;
    verts[i * 3 + 2] = mesh.vertices[i].z;
  }
  const raster::Projected proj = raster::project_vertices(
      verts.data(), verts.rows(), mesh.faces, cam, basis);
  const raster::RowBins bins =
      raster::build_row_bins(proj, mesh.faces, cam.width, cam.height, 0.0);

  RenderBuffers out;
  out.normal = Tensor({cam.height, cam.width, 3});
  out.mask = Tensor({cam.height, cam.width});

  for (int row = 0; row < cam.height; ++row) {
    const double qy = raster::ndc_y(row, cam.height);
    for (int col = 0; col < cam.width; ++col) {
      const double qx = raster::ndc_x(col, cam.width);
      HardHit hit;
      for (const auto& e : bins.rows[row]) {
        if (col < e.col0 || col > e.col1) continue;
        const auto& f = mesh.faces[e.tri];
        const double ax[3] = {proj.sx[f[0]], proj.sx[f[1]], proj.sx[f[2]]};
        const double ay[3] = {proj.sy[f[0]], proj.sy[f[1]], proj.sy[f[2]]};
        const double denom =
            cross2(ax[1] - ax[0], ay[1] - ay[0], ax[2] - ax[0], ay[2] - ay[0]);
        if (std::fabs(denom) < 1e-14) continue;
        const double l0 =
            cross2(ax[1] - qx, ay[1] - qy, ax[2] - qx, ay[2] - qy) / denom;
        const double l1 =
            cross2(ax[2] - qx, ay[2] - qy, ax[0] - qx, ay[0] - qy) / denom;
        const double l2 = 1.0 - l0 - l1;
        if (l0 < 0.0 || l1 < 0.0 || l2 < 0.0) continue;
        const double z =
            l0 * proj.z[f[0]] + l1 * proj.z[f[1]] + l2 * proj.z[f[2]];
        if (z < hit.depth) {
          hit.depth = z;
          hit.normal = normalized(proj.n_cam[f[0]] * l0 +
                                  proj.n_cam[f[1]] * l1 +
                                  proj.n_cam[f[2]] * l2);
          hit.covered = true;
        }
      }
      if (hit.covered) {
        const std::int64_t px = row * cam.width + col;
        out.normal[px * 3] = hit.normal.x;
        out.normal[px * 3 + 1] = hit.normal.y;
        out.normal[px * 3 + 2] = hit.normal.z;
        out.mask[px] = 1.0;
      }
    }
  }
  return out;
}

Tensor topdown_render(const Scene& scene, int resolution) {
  const Camera cam = topdown_camera(resolution);
  Tensor image({resolution, resolution, 3});
  if (scene.objects.empty()) return image;

  // assemble one mesh; hard rasterization resolves occlusion by depth
  Mesh merged;
  for (const SceneObject& obj : scene.objects) {
    const Mesh placed = obj.placed_mesh();
    const int base = static_cast<int>(merged.vertices.size());
    merged.vertices.insert(merged.vertices.end(), placed.vertices.begin(),
                           placed.vertices.end());
    for (const auto& f : placed.faces)
      merged.faces.push_back({f[0] + base, f[1] + base, f[2] + base});
  }
  const RenderBuffers buf = rasterize_hard(merged, cam);
  return buf.normal;
}

double render_loss(const RenderBuffers& pred, const RenderBuffers& gt) {
  require(pred.normal.same_shape(gt.normal) && pred.mask.same_shape(gt.mask),
          "render_loss: resolution mismatch ", shape_str(pred.normal.shape()),
          " vs ", shape_str(gt.normal.shape()));
  double l1 = 0.0;
  for (std::int64_t i = 0; i < pred.normal.size(); ++i)
    l1 += std::fabs(pred.normal[i] - gt.normal[i]);
  l1 /= static_cast<double>(pred.normal.size());

  double inter = 0.0, uni = 0.0;
  for (std::int64_t i = 0; i < pred.mask.size(); ++i) {
    inter += std::min(pred.mask[i], gt.mask[i]);
    uni += std::max(pred.mask[i], gt.mask[i]);
  }
  const double iou_loss = uni > 0.0 ? 1.0 - inter / uni : 0.0;
  return l1 + iou_loss;
}

Value render_loss_op(Value pred, const RenderBuffers& gt) {
  Tape& t = *pred.tape;
  const Tensor& pv = t.value(pred);
  require(pv.rank() == 3 && pv.dim(2) == 4,
          "render_loss_op: pred must be [H,W,4], got ", shape_str(pv.shape()));
  require(pv.dim(0) == gt.normal.dim(0) && pv.dim(1) == gt.normal.dim(1),
          "render_loss_op: resolution mismatch ", shape_str(pv.shape()),
          " vs ", shape_str(gt.normal.shape()));
  Value normals = slice(pred, 2, 0, 3);
  Value mask = slice(pred, 2, 3, 1);
  Value l1 = l1_distance(normals, t.constant(gt.normal));

  Tensor gt_mask_hw1({gt.mask.dim(0), gt.mask.dim(1), 1});
  std::copy_n(gt.mask.data(), gt.mask.size(), gt_mask_hw1.data());
  Value gt_mask = t.constant(gt_mask_hw1);
  Value inter = sum(emin(mask, gt_mask));
  Value uni = sum(emax(mask, gt_mask));
  if (t.value(uni).item() == 0.0)  // both masks empty: IoU term vanishes
    return l1;
  return add(l1, add_const(neg(div(inter, uni)), 1.0));
}

}  // namespace sfield
