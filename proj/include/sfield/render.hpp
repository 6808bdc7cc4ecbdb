#pragma once
// Differentiable soft rasterizer (sigmoid edge coverage, depth-softmax
// normal aggregation), a hard z-buffer oracle, and the orthographic
// top-down render used by the metrics.
//
// Buffers are row-major with row 0 at the top of the image. Normals are
// camera-space; the background is the zero vector. The soft rasterizer is
// perspective-only; the hard path also supports orthographic cameras.

#include <cstdint>

#include "sfield/geometry.hpp"
#include "sfield/tape.hpp"

namespace sfield {

struct Camera {
  enum class Mode { kPerspective, kOrthographic };

  Vec3 position{0.0, 0.0, 1.5};
  Vec3 look_at;            // origin
  Vec3 up_hint{0.0, 1.0, 0.0};
  double fov_deg = 40.0;   // vertical, perspective mode
  double ortho_half = 0.5; // half window extent, orthographic mode
  int width = 64;
  int height = 64;
  Mode mode = Mode::kPerspective;

  // orthonormal basis; right/up/forward rows form the view rotation
  Vec3 forward() const { return normalized(look_at - position); }
  Vec3 right() const;
  Vec3 up() const { return cross(right(), forward()); }
};

// Position area-uniform on the sphere of the given radius, looking at the
// origin; deterministic per seed.
Camera sample_camera(std::uint64_t seed, double radius, int width, int height,
                     double fov_deg);

Camera topdown_camera(int resolution);

struct RenderBuffers {
  Tensor normal;  // [H,W,3]
  Tensor mask;    // [H,W]
};

struct SoftRasterConfig {
  double temperature = 1e-2;     // sigmoid edge softness, NDC units
  double depth_sharpness = 2e-2; // depth softmax scale, view-depth units
};

// Differentiable: records a single [H,W,4] node (normal channels 0-2,
// mask channel 3) on the tape of `vertices`.
Value rasterize_soft_op(Value vertices, const std::vector<std::array<int, 3>>& faces,
                        const Camera& cam, const SoftRasterConfig& cfg);

// Same forward math without a tape.
RenderBuffers rasterize_soft(const Mesh& mesh, const Camera& cam,
                             double temperature,
                             double depth_sharpness = 2e-2);

// Classical z-buffered rasterization; mask is 0/1; not differentiable.
RenderBuffers rasterize_hard(const Mesh& mesh, const Camera& cam);

// Orthographic top-down hard render of the assembled scene's normals over
// the window [-0.5,0.5]^2.
Tensor topdown_render(const Scene& scene, int resolution);

// Mean absolute normal difference plus soft-mask IoU loss
// 1 - sum(min) / sum(max). Zero iff the buffers are equal.
double render_loss(const RenderBuffers& pred, const RenderBuffers& gt);

// Tape form; `pred` is a [H,W,4] raster node, gt enters as constants.
Value render_loss_op(Value pred, const RenderBuffers& gt);

// Split an [H,W,4] raster tensor into buffers.
RenderBuffers split_raster(const Tensor& raster);

}  // namespace sfield
