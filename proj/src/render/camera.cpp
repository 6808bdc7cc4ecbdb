#include "sfield/render.hpp"

#include "sfield/rng.hpp"

namespace sfield {

Vec3 Camera::right() const {
  const Vec3 f = forward();
  Vec3 hint = up_hint;
  if (std::fabs(dot(f, normalized(hint))) > 0.999) hint = {1.0, 0.0, 0.0};
  return normalized(cross(f, hint));
}

Camera sample_camera(std::uint64_t seed, double radius, int width, int height,
                     double fov_deg) {
  Rng rng(seed);
  // area-uniform: y uniform in [-1,1], azimuth uniform
  const double y = rng.uniform(-1.0, 1.0);
  const double phi = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  const double s = std::sqrt(std::max(0.0, 1.0 - y * y));
  Camera cam;
  cam.position = Vec3{s * std::cos(phi), y, s * std::sin(phi)} * radius;
  cam.look_at = {0.0, 0.0, 0.0};
  cam.fov_deg = fov_deg;
  cam.width = width;
  cam.height = height;
  return cam;
}

Camera topdown_camera(int resolution) {
  Camera cam;
  cam.position = {0.0, 2.0, 0.0};
  cam.look_at = {0.0, 0.0, 0.0};
  cam.up_hint = {0.0, 0.0, -1.0};
  cam.mode = Camera::Mode::kOrthographic;
  cam.ortho_half = 0.5;
  cam.width = resolution;
  cam.height = resolution;
  return cam;
}

RenderBuffers split_raster(const Tensor& raster) {
  require(raster.rank() == 3 && raster.dim(2) == 4,
          "split_raster: expected [H,W,4], got ", shape_str(raster.shape()));
  const int h = raster.dim(0), w = raster.dim(1);
  RenderBuffers out;
  out.normal = Tensor({h, w, 3});
  out.mask = Tensor({h, w});
  for (int i = 0; i < h * w; ++i) {
    out.normal[i * 3] = raster[i * 4];
    out.normal[i * 3 + 1] = raster[i * 4 + 1];
    out.normal[i * 3 + 2] = raster[i * 4 + 2];
    out.mask[i] = raster[i * 4 + 3];
  }
  return out;
}

}  // namespace sfield
