#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "sfield/dataio.hpp"

// PFM: float32 little-endian (scale -1.0), rows bottom-to-top per the
// format convention. PGM/PPM: binary 8-bit with maxval 255.

static_assert(std::endian::native == std::endian::little,
              "image and checkpoint writers assume a little-endian host");

namespace sfield {

namespace {

std::uint8_t quantize01(double v) {
  const double c = std::min(std::max(v, 0.0), 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

void write_pfm_stream(const Tensor& image, std::ofstream& out) {
  const bool color = image.rank() == 3;
  require(color ? image.dim(2) == 3 : image.rank() == 2,
          "write_pfm: image must be [H,W,3] or [H,W], got ",
          shape_str(image.shape()));
  const int h = image.dim(0), w = image.dim(1);
  out << (color ? "PF" : "Pf") << '\n' << w << ' ' << h << '\n' << "-1.0\n";
  const int channels = color ? 3 : 1;
  std::vector<float> row(static_cast<std::size_t>(w) * channels);
  for (int r = h - 1; r >= 0; --r) {  // bottom-to-top
    const double* src = image.data() + static_cast<std::int64_t>(r) * w * channels;
    for (int i = 0; i < w * channels; ++i) row[i] = static_cast<float>(src[i]);
    out.write(reinterpret_cast<const char*>(row.data()),
              row.size() * sizeof(float));
  }
}

}  // namespace

void write_pfm(const Tensor& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write ", path.string());
  write_pfm_stream(image, out);
  require(out.good(), "write failed for ", path.string());
}

Tensor read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open ", path.string());
  std::string magic;
  int w = 0, h = 0;
  double scanline_scale = 0.0;
  in >> magic >> w >> h >> scanline_scale;
  require(magic == "PF" || magic == "Pf", path.string(),
          ": not a PFM file (magic '", magic, "')");
  require(w > 0 && h > 0, path.string(), ": bad dimensions");
  require(scanline_scale < 0.0, path.string(),
          ": big-endian PFM payloads are not supported");
  in.get();  // the single whitespace byte after the scale
  const int channels = magic == "PF" ? 3 : 1;
  Tensor image(channels == 3 ? std::vector<int>{h, w, 3}
                             : std::vector<int>{h, w});
  std::vector<float> row(static_cast<std::size_t>(w) * channels);
  for (int r = h - 1; r >= 0; --r) {
    in.read(reinterpret_cast<char*>(row.data()), row.size() * sizeof(float));
    require(in.good(), path.string(), ": truncated payload");
    double* dst = image.data() + static_cast<std::int64_t>(r) * w * channels;
    for (int i = 0; i < w * channels; ++i) dst[i] = row[i];
  }
  return image;
}

void write_image(const RenderBuffers& buffers,
                 const std::filesystem::path& path, ImageFormat format) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write ", path.string());
  switch (format) {
    case ImageFormat::kPfm:
      write_pfm_stream(buffers.normal, out);
      break;
    case ImageFormat::kPgm: {
      const int h = buffers.mask.dim(0), w = buffers.mask.dim(1);
      out << "P5\n" << w << ' ' << h << "\n255\n";
      for (std::int64_t i = 0; i < buffers.mask.size(); ++i)
        out.put(static_cast<char>(quantize01(buffers.mask[i])));
      break;
    }
    case ImageFormat::kPpm: {
      const int h = buffers.normal.dim(0), w = buffers.normal.dim(1);
      out << "P6\n" << w << ' ' << h << "\n255\n";
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w; ++i)
        for (int c = 0; c < 3; ++c)
          out.put(static_cast<char>(
              quantize01(0.5 * (buffers.normal[i * 3 + c] + 1.0))));
      break;
    }
  }
  require(out.good(), "write failed for ", path.string());
}

}  // namespace sfield
