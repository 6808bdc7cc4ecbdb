#include "sfield/model.hpp"

#include <algorithm>
#include <cmath>

#include "sfield/losses.hpp"

namespace sfield {

const char* mode_name(ModelMode mode) {
  switch (mode) {
    case ModelMode::kFull: return "full";
    case ModelMode::kLayoutOnly: return "layout_only";
    case ModelMode::kFieldOnly: return "field_only";
  }
  return "?";
}

ModelMode mode_from_name(const std::string& name) {
  if (name == "full") return ModelMode::kFull;
  if (name == "layout_only") return ModelMode::kLayoutOnly;
  if (name == "field_only") return ModelMode::kFieldOnly;
  fail("unknown mode '", name, "' (expected full, layout_only, field_only)");
}

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kEncChannels[3] = {8, 16, 32};
constexpr int kDecChannels[3] = {64, 48, 32};
constexpr int kSlotHidden = 256;
constexpr int kFfnMult = 2;

Tensor uniform_init(Rng& rng, std::vector<int> shape, int fan_in) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (std::int64_t i = 0; i < t.size(); ++i)
    t[i] = rng.uniform(-bound, bound);
  return t;
}

Tensor canonical_slot_grid(int m) {
  // fixed x-z grid of mid-sized always-on slots (the frozen-layout mode)
  const int cols = static_cast<int>(std::ceil(std::sqrt(double(m))));
  const int rows = (m + cols - 1) / cols;
  Tensor t({m, 7});
  const double ls = std::log(0.15);
  for (int i = 0; i < m; ++i) {
    const int cx = i % cols, cz = i / cols;
    t[i * 7 + 0] = cols > 1 ? -0.35 + 0.7 * cx / (cols - 1) : 0.0;
    t[i * 7 + 1] = 0.0;
    t[i * 7 + 2] = rows > 1 ? -0.35 + 0.7 * cz / (rows - 1) : 0.0;
    t[i * 7 + 3] = ls;
    t[i * 7 + 4] = ls;
    t[i * 7 + 5] = ls;
    t[i * 7 + 6] = 30.0;
  }
  return t;
}

}  // namespace

SceneModel::SceneModel(const ModelConfig& cfg, std::uint64_t init_seed)
    : cfg_(cfg) {
  require(cfg.latent_width > 0 && cfg.slot_capacity > 0, "bad model config");
  require(cfg.plane_resolution >= 8 && cfg.plane_resolution % 8 == 0,
          "plane resolution must be a positive multiple of 8, got ",
          cfg.plane_resolution);
  require(cfg.voxel_resolution >= 8 && cfg.voxel_resolution % 8 == 0,
          "voxel resolution must be a positive multiple of 8, got ",
          cfg.voxel_resolution);
  require(cfg.tf_width % cfg.tf_heads == 0,
          "transformer width must divide evenly into heads");
  template_ = icosphere(cfg.template_subdivisions);
  canonical_slots_ = canonical_slot_grid(cfg.slot_capacity);

  Rng rng(init_seed);
  const int d = cfg.latent_width;
  auto add_linear = [&](const std::string& name, int in, int out,
                        bool zero = false) {
    if (zero) {
      store_.add(name + ".w", Tensor({in, out}));
      store_.add(name + ".b", Tensor({out}));
    } else {
      store_.add(name + ".w", uniform_init(rng, {in, out}, in));
      store_.add(name + ".b", uniform_init(rng, {out}, in));
    }
  };

  // encoder: three strided 3x3x3 convolutions, then a linear head
  int ch_in = 1;
  for (int i = 0; i < 3; ++i) {
    const int ch_out = kEncChannels[i];
    const int fan = ch_in * 27;
    store_.add("enc.conv" + std::to_string(i) + ".w",
               uniform_init(rng, {ch_out, ch_in, 3, 3, 3}, fan));
    store_.add("enc.conv" + std::to_string(i) + ".b",
               uniform_init(rng, {ch_out}, fan));
    ch_in = ch_out;
  }
  const int enc_spatial = cfg.voxel_resolution / 8;
  const int enc_flat = kEncChannels[2] * enc_spatial * enc_spatial * enc_spatial;
  add_linear("enc.fc", enc_flat, 2 * d);

  // plane generator: linear seed then three stride-2 transposed convs
  const int seed_spatial = cfg.plane_resolution / 8;
  add_linear("dec.fc", d, kDecChannels[0] * seed_spatial * seed_spatial);
  const int dec_out[3] = {kDecChannels[1], kDecChannels[2],
                          3 * cfg.plane_channels};
  ch_in = kDecChannels[0];
  for (int i = 0; i < 3; ++i) {
    const int fan = ch_in * 16;
    store_.add("dec.convt" + std::to_string(i) + ".w",
               uniform_init(rng, {ch_in, dec_out[i], 4, 4}, fan));
    store_.add("dec.convt" + std::to_string(i) + ".b",
               uniform_init(rng, {dec_out[i]}, fan));
    ch_in = dec_out[i];
  }

  // slot head
  add_linear("slot.fc0", d, kSlotHidden);
  add_linear("slot.fc1", kSlotHidden, 7 * cfg.slot_capacity);

  // vertex-token transformer
  add_linear("tf.in", cfg.token_width(), cfg.tf_width);
  for (int l = 0; l < cfg.tf_layers; ++l) {
    const std::string base = "tf.l" + std::to_string(l) + ".";
    for (const char* part : {"q", "k", "v", "o"})
      add_linear(base + part, cfg.tf_width, cfg.tf_width);
    add_linear(base + "ffn0", cfg.tf_width, kFfnMult * cfg.tf_width);
    add_linear(base + "ffn1", kFfnMult * cfg.tf_width, cfg.tf_width);
  }
  // displacement head starts at zero: initial shapes equal the
  // slot-transformed templates exactly
  add_linear("head", cfg.tf_width, 3, /*zero=*/true);
}

int SceneModel::pidx(const std::string& name) const {
  const int i = store_.find(name);
  require(i >= 0, "unknown parameter ", name);
  return i;
}

std::vector<Value> SceneModel::bind(Tape& tape) const {
  std::vector<Value> vals;
  vals.reserve(store_.count());
  for (int i = 0; i < store_.count(); ++i)
    vals.push_back(tape.input(store_[i].value));
  return vals;
}

Value SceneModel::linear(Tape&, const std::vector<Value>& p, Value x,
                         const std::string& name) const {
  return add_row(matmul(x, p[pidx(name + ".w")]), p[pidx(name + ".b")]);
}

std::pair<Value, Value> SceneModel::encoder_forward(
    Tape& tape, const std::vector<Value>& p, const Tensor& occupancy) const {
  const int r = cfg_.voxel_resolution;
  require(occupancy.rank() == 4 && occupancy.dim(0) == 1 &&
              occupancy.dim(1) == r && occupancy.dim(2) == r &&
              occupancy.dim(3) == r,
          "encoder: occupancy must be [1,R,R,R], got ",
          shape_str(occupancy.shape()));
  Value x = tape.constant(occupancy);
  for (int i = 0; i < 3; ++i) {
    const std::string base = "enc.conv" + std::to_string(i);
    x = relu(conv3d(x, p[pidx(base + ".w")], p[pidx(base + ".b")], 2, 1));
  }
  const Tensor& xv = tape.value(x);
  x = reshape(x, {1, static_cast<int>(xv.size())});
  Value out = linear(tape, p, x, "enc.fc");  // [1, 2d]
  Value mean = slice(out, 1, 0, cfg_.latent_width);
  Value logvar = clamp(slice(out, 1, cfg_.latent_width, cfg_.latent_width),
                       -30.0, 20.0);
  return {mean, logvar};
}

Value SceneModel::reparameterize_op(Tape& tape, Value mean, Value logvar,
                                    const Tensor& eps) const {
  Value sigma = exp(scale(logvar, 0.5));
  return add(mean, mul(sigma, tape.constant(eps)));
}

SceneModel::Decoded SceneModel::decode_relationships_op(
    Tape& tape, const std::vector<Value>& p, Value z) const {
  require(tape.shape(z) == std::vector<int>({1, cfg_.latent_width}),
          "decode: z must be [1,", cfg_.latent_width, "], got ",
          shape_str(tape.shape(z)));
  Decoded dec;

  if (cfg_.mode == ModelMode::kLayoutOnly) {
    const int n = cfg_.plane_resolution, c = cfg_.plane_channels;
    for (int e = 0; e < 3; ++e)
      dec.planes[e] = tape.constant(Tensor({n, n, c}));
  } else {
    const int s0 = cfg_.plane_resolution / 8;
    Value x = linear(tape, p, z, "dec.fc");
    x = relu(reshape(x, {kDecChannels[0], s0, s0}));
    for (int i = 0; i < 3; ++i) {
      const std::string base = "dec.convt" + std::to_string(i);
      x = conv_transpose2d(x, p[pidx(base + ".w")], p[pidx(base + ".b")], 2,
                           1);
      if (i < 2) x = relu(x);
    }
    Value hwc = chw_to_hwc(x);  // [N, N, 3C]
    for (int e = 0; e < 3; ++e)
      dec.planes[e] = slice(hwc, 2, e * cfg_.plane_channels,
                            cfg_.plane_channels);
  }

  if (cfg_.mode == ModelMode::kFieldOnly) {
    dec.slot_params = tape.constant(canonical_slots_);
  } else {
    Value h = relu(linear(tape, p, z, "slot.fc0"));
    Value raw = reshape(linear(tape, p, h, "slot.fc1"),
                        {cfg_.slot_capacity, 7});
    Tensor offset({cfg_.slot_capacity, 7});
    for (int s = 0; s < cfg_.slot_capacity; ++s)
      for (int k = 3; k < 6; ++k) offset[s * 7 + k] = kLogScaleBias;
    dec.slot_params = add(raw, tape.constant(offset));
  }
  return dec;
}

Value SceneModel::transformer_op(Tape& tape, const std::vector<Value>& p,
                                 Value tokens) const {
  const int w = cfg_.tf_width;
  const int dh = w / cfg_.tf_heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Value x = linear(tape, p, tokens, "tf.in");
  for (int l = 0; l < cfg_.tf_layers; ++l) {
    const std::string base = "tf.l" + std::to_string(l) + ".";
    Value ln1 = layer_norm(x);
    Value q = linear(tape, p, ln1, base + "q");
    Value k = linear(tape, p, ln1, base + "k");
    Value v = linear(tape, p, ln1, base + "v");
    Value heads;
    for (int h = 0; h < cfg_.tf_heads; ++h) {
      Value qh = slice(q, 1, h * dh, dh);
      Value kh = slice(k, 1, h * dh, dh);
      Value vh = slice(v, 1, h * dh, dh);
      Value scores = scale(matmul(qh, transpose(kh)), att_scale);
      Value oh = matmul(softmax(scores), vh);
      heads = h == 0 ? oh : concat(heads, oh, 1);
    }
    x = add(x, linear(tape, p, heads, base + "o"));
    Value ln2 = layer_norm(x);
    Value f = relu(linear(tape, p, ln2, base + "ffn0"));
    x = add(x, linear(tape, p, f, base + "ffn1"));
  }
  return linear(tape, p, x, "head");
}

Value SceneModel::deform_slot_op(Tape& tape, const std::vector<Value>& p,
                                 const Decoded& dec, int slot_index) const {
  const int m = cfg_.slot_capacity;
  require(slot_index >= 0 && slot_index < m, "deform: bad slot index ",
          slot_index);
  Value row = slice(dec.slot_params, 0, slot_index, 1);  // [1,7]
  Value center = reshape(slice(row, 1, 0, 3), {3});
  Value half = exp(clamp(reshape(slice(row, 1, 3, 3), {3}), -20.0, 5.0));

  const int nv = static_cast<int>(template_.vertices.size());
  Tensor tverts({nv, 3});
  for (int i = 0; i < nv; ++i) {
    tverts[i * 3] = template_.vertices[i].x;
    tverts[i * 3 + 1] = template_.vertices[i].y;
    tverts[i * 3 + 2] = template_.vertices[i].z;
  }
  Value positions =
      add_row(mul_row(tape.constant(tverts), half), center);  // [V,3]

  Value feats = sample_field_batch(dec.planes[0], dec.planes[1],
                                   dec.planes[2], positions);  // [V,C]

  // sinusoidal octaves of the vertex positions
  Value pe;
  for (int band = 0; band < cfg_.pe_bands; ++band) {
    const double freq = kPi * std::pow(2.0, band);
    Value scaled = scale(positions, freq);
    Value sc = concat(sin(scaled), cos(scaled), 1);  // [V,6]
    pe = band == 0 ? sc : concat(pe, sc, 1);
  }
  Value tokens = concat(feats, pe, 1);  // [V, C + 6*bands]

  Value disp = transformer_op(tape, p, tokens);
  return add(positions, disp);
}

// ---- plain paths -----------------------------------------------------------

Tensor SceneModel::voxelize(const Scene& scene) const {
  const int r = cfg_.voxel_resolution;
  Tensor occ({1, r, r, r});
  for (const SceneObject& obj : scene.objects) {
    const Mesh placed = obj.placed_mesh();
    for (const auto& f : placed.faces) {
      const Vec3& a = placed.vertices[f[0]];
      const Vec3& b = placed.vertices[f[1]];
      const Vec3& c = placed.vertices[f[2]];
      const double edge = std::max({norm(b - a), norm(c - a), norm(c - b)});
      const int steps =
          std::max(1, static_cast<int>(std::ceil(edge * r * 2.0)));
      for (int i = 0; i <= steps; ++i)
        for (int j = 0; i + j <= steps; ++j) {
          const double u = static_cast<double>(i) / steps;
          const double v = static_cast<double>(j) / steps;
          const Vec3 pt = a + (b - a) * u + (c - a) * v;
          const int ix = std::clamp(static_cast<int>((pt.x + 0.5) * r), 0, r - 1);
          const int iy = std::clamp(static_cast<int>((pt.y + 0.5) * r), 0, r - 1);
          const int iz = std::clamp(static_cast<int>((pt.z + 0.5) * r), 0, r - 1);
          occ[(static_cast<std::int64_t>(ix) * r + iy) * r + iz] = 1.0;
        }
    }
  }
  return occ;
}

std::pair<std::vector<double>, std::vector<double>> SceneModel::encode(
    const Scene& scene) const {
  require(!scene.objects.empty(), "encode: scene has no objects");
  Tape tape;
  const std::vector<Value> p = bind(tape);
  auto [mean, logvar] = encoder_forward(tape, p, voxelize(scene));
  const Tensor& mv = tape.value(mean);
  const Tensor& lv = tape.value(logvar);
  return {{mv.data(), mv.data() + mv.size()},
          {lv.data(), lv.data() + lv.size()}};
}

std::vector<double> SceneModel::reparameterize(
    const std::vector<double>& mean, const std::vector<double>& logvar,
    std::uint64_t seed) const {
  require(mean.size() == logvar.size(), "reparameterize: width mismatch ",
          mean.size(), " vs ", logvar.size());
  Rng rng(seed);
  std::vector<double> z(mean.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double lv = std::clamp(logvar[i], -30.0, 20.0);
    z[i] = mean[i] + std::exp(0.5 * lv) * rng.normal();
  }
  return z;
}

std::pair<TriPlaneField, LayoutSlots> SceneModel::decode_relationships(
    const std::vector<double>& z) const {
  require(static_cast<int>(z.size()) == cfg_.latent_width,
          "decode: z width ", z.size(), " != ", cfg_.latent_width);
  Tape tape;
  const std::vector<Value> p = bind(tape);
  Tensor zt({1, cfg_.latent_width});
  std::copy(z.begin(), z.end(), zt.data());
  const Decoded dec = decode_relationships_op(tape, p, tape.constant(zt));
  TriPlaneField field(cfg_.plane_resolution, cfg_.plane_channels);
  for (int e = 0; e < 3; ++e) field.planes[e] = tape.value(dec.planes[e]);
  return {field, slots_from_tensor(tape.value(dec.slot_params))};
}

std::vector<Mesh> SceneModel::decode_instances(const TriPlaneField& field,
                                               const LayoutSlots& layout) const {
  require(layout.capacity() == cfg_.slot_capacity,
          "decode_instances: slot capacity mismatch");
  const std::vector<int> active = layout.active_indices();
  std::vector<Mesh> shapes;
  if (active.empty()) return shapes;

  Tape tape;
  const std::vector<Value> p = bind(tape);
  Decoded dec;
  for (int e = 0; e < 3; ++e) dec.planes[e] = tape.constant(field.planes[e]);
  Tensor sp({layout.capacity(), 7});
  for (int s = 0; s < layout.capacity(); ++s) {
    const LayoutSlot& slot = layout.slots[s];
    double* row = sp.data() + s * 7;
    row[0] = slot.center.x;
    row[1] = slot.center.y;
    row[2] = slot.center.z;
    row[3] = slot.log_scale.x;
    row[4] = slot.log_scale.y;
    row[5] = slot.log_scale.z;
    row[6] = slot.presence_logit;
  }
  dec.slot_params = tape.constant(sp);

  for (int s : active) {
    Value verts = deform_slot_op(tape, p, dec, s);
    const Tensor& vv = tape.value(verts);
    Mesh m;
    m.faces = template_.faces;
    m.vertices.resize(template_.vertices.size());
    for (std::size_t i = 0; i < m.vertices.size(); ++i)
      m.vertices[i] = {vv[i * 3], vv[i * 3 + 1], vv[i * 3 + 2]};
    compute_vertex_normals(m);
    shapes.push_back(std::move(m));
  }
  return shapes;
}

std::pair<std::vector<Mesh>, LayoutSlots> SceneModel::generate(
    const std::vector<double>& z) const {
  auto [field, layout] = decode_relationships(z);
  return {decode_instances(field, layout), layout};
}

SceneModel::ForwardOutput SceneModel::forward(const Scene& scene,
                                              std::uint64_t seed) const {
  ForwardOutput out;
  auto [mean, logvar] = encode(scene);
  out.latent.mean = mean;
  out.latent.logvar = logvar;
  out.latent.z = reparameterize(mean, logvar, seed);
  auto [field, layout] = decode_relationships(out.latent.z);
  out.layout = layout;
  out.shapes = decode_instances(field, layout);
  return out;
}

}  // namespace sfield
