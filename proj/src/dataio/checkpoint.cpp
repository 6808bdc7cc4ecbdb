#include <cstring>
#include <fstream>

#include "sfield/dataio.hpp"

// Binary container: magic, version, model config, optimizer config and
// step counter, then per-parameter name/shape and the value/m/v payloads
// as raw little-endian doubles. Round trips are bit-exact.

namespace sfield {

namespace {

constexpr char kMagic[8] = {'S', 'F', 'C', 'K', 'P', 'T', '0', '1'};

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::ifstream& in, const char* what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  require(in.good(), "checkpoint: truncated while reading ", what);
  return v;
}

void put_string(std::ofstream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), s.size());
}

std::string take_string(std::ifstream& in, const char* what) {
  const auto len = take<std::uint32_t>(in, what);
  require(len < 4096, "checkpoint: implausible string length for ", what);
  std::string s(len, '\0');
  in.read(s.data(), len);
  require(in.good(), "checkpoint: truncated while reading ", what);
  return s;
}

void put_tensor(std::ofstream& out, const Tensor& t) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i)
    put<std::int64_t>(out, t.dim(i));
  out.write(reinterpret_cast<const char*>(t.data()),
            t.size() * sizeof(double));
}

Tensor take_tensor(std::ifstream& in, const std::string& name) {
  const auto rank = take<std::uint32_t>(in, name.c_str());
  require(rank >= 1 && rank <= 8, "checkpoint: implausible rank ", rank,
          " for ", name);
  std::vector<int> shape;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const auto d = take<std::int64_t>(in, name.c_str());
    require(d > 0 && d < (1 << 28), "checkpoint: bad dimension ", d, " for ",
            name);
    shape.push_back(static_cast<int>(d));
  }
  Tensor t(shape);
  in.read(reinterpret_cast<char*>(t.data()), t.size() * sizeof(double));
  require(in.good(), "checkpoint: truncated payload for ", name);
  return t;
}

}  // namespace

void save_checkpoint(const SceneModel& model, const AdamW& optimizer,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write checkpoint ", path.string());
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);

  const ModelConfig& cfg = model.config();
  put_string(out, mode_name(cfg.mode));
  for (int v : {cfg.latent_width, cfg.slot_capacity, cfg.plane_resolution,
                cfg.plane_channels, cfg.template_subdivisions,
                cfg.voxel_resolution, cfg.tf_layers, cfg.tf_heads,
                cfg.tf_width, cfg.pe_bands})
    put<std::int32_t>(out, v);

  const AdamWConfig& ac = optimizer.config();
  for (double v : {ac.lr, ac.beta1, ac.beta2, ac.eps, ac.weight_decay})
    put<double>(out, v);
  put<std::int64_t>(out, optimizer.step_count());

  const ParameterStore& store = model.params();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(store.count()));
  for (int i = 0; i < store.count(); ++i) {
    const Param& p = store[i];
    put_string(out, p.name);
    put_tensor(out, p.value);
    put_tensor(out, p.m);
    put_tensor(out, p.v);
  }
  require(out.good(), "write failed for ", path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open checkpoint ", path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  require(in.good() && std::memcmp(magic, kMagic, 6) == 0,
          "checkpoint: bad magic in ", path.string());
  const auto version = take<std::uint32_t>(in, "version");
  require(version == kCheckpointVersion, "checkpoint version ", version,
          " is not supported (expected ", kCheckpointVersion, ")");

  Checkpoint ckpt;
  ckpt.config.mode = mode_from_name(take_string(in, "mode"));
  int* fields[10] = {&ckpt.config.latent_width,
                     &ckpt.config.slot_capacity,
                     &ckpt.config.plane_resolution,
                     &ckpt.config.plane_channels,
                     &ckpt.config.template_subdivisions,
                     &ckpt.config.voxel_resolution,
                     &ckpt.config.tf_layers,
                     &ckpt.config.tf_heads,
                     &ckpt.config.tf_width,
                     &ckpt.config.pe_bands};
  for (int* f : fields) *f = take<std::int32_t>(in, "model config");

  ckpt.adamw.lr = take<double>(in, "lr");
  ckpt.adamw.beta1 = take<double>(in, "beta1");
  ckpt.adamw.beta2 = take<double>(in, "beta2");
  ckpt.adamw.eps = take<double>(in, "eps");
  ckpt.adamw.weight_decay = take<double>(in, "weight_decay");
  ckpt.step_count = take<std::int64_t>(in, "step counter");

  const auto count = take<std::uint32_t>(in, "parameter count");
  require(count < 100000, "checkpoint: implausible parameter count ", count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Param p;
    p.name = take_string(in, "parameter name");
    p.value = take_tensor(in, p.name);
    p.m = take_tensor(in, p.name);
    p.v = take_tensor(in, p.name);
    ckpt.params.push_back(std::move(p));
  }
  return ckpt;
}

void Checkpoint::restore_into(SceneModel& model, AdamW& optimizer) const {
  ParameterStore& store = model.params();
  require(static_cast<int>(params.size()) == store.count(),
          "checkpoint holds ", params.size(), " parameters, model expects ",
          store.count());
  for (int i = 0; i < store.count(); ++i) {
    Param& dst = store[i];
    const Param& src = params[i];
    require(src.name == dst.name, "checkpoint parameter order mismatch: '",
            src.name, "' vs '", dst.name, "'");
    require(src.value.same_shape(dst.value), "checkpoint shape mismatch for ",
            src.name);
    dst.value = src.value;
    dst.m = src.m;
    dst.v = src.v;
  }
  optimizer = AdamW(adamw);
  optimizer.set_step_count(step_count);
}

SceneModel Checkpoint::restore() const {
  SceneModel model(config, init_seed);
  AdamW opt(adamw);
  restore_into(model, opt);
  return model;
}

}  // namespace sfield
