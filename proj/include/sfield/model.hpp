#pragma once
// The learned pipeline: occupancy encoder -> Gaussian latent ->
// relationship decoder (feature planes + layout slots) -> instance decoder
// (field-conditioned template deformation with a transformer over vertex
// tokens). Three modes cover the decoder ablations: the full model, a
// layout-only variant with the planes pinned to zero, and a field-only
// variant with the slots frozen at a canonical grid. Every mode registers
// the same parameter set, so parameter counts match exactly.

#include <array>
#include <cstdint>

#include "sfield/optim.hpp"
#include "sfield/rng.hpp"
#include "sfield/slots.hpp"
#include "sfield/tape.hpp"
#include "sfield/triplane.hpp"

namespace sfield {

enum class ModelMode { kFull, kLayoutOnly, kFieldOnly };

const char* mode_name(ModelMode mode);
ModelMode mode_from_name(const std::string& name);

struct ModelConfig {
  ModelMode mode = ModelMode::kFull;
  int latent_width = 128;        // d
  int slot_capacity = 12;        // M
  int plane_resolution = 32;     // N
  int plane_channels = 16;       // C
  int template_subdivisions = 2;
  int voxel_resolution = 32;
  int tf_layers = 2;
  int tf_heads = 4;
  int tf_width = 64;
  int pe_bands = 4;  // sinusoidal position-encoding octaves

  int token_width() const { return plane_channels + 6 * pe_bands; }
};

struct LatentCode {
  std::vector<double> mean, logvar, z;
};

// log-scale decode offset: slots start wide enough to overlap any in-cube
// box, giving the IoU loss a live gradient everywhere (shrink-to-fit)
constexpr double kLogScaleBias = -0.7985076962177716;  // log(0.45)

class SceneModel {
 public:
  explicit SceneModel(const ModelConfig& cfg, std::uint64_t init_seed = 1);

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  const Mesh& shape_template() const { return template_; }
  const Tensor& canonical_slots() const { return canonical_slots_; }

  // parameter nodes bound onto a tape, in store order
  std::vector<Value> bind(Tape& tape) const;

  // ---- tape builders (training path) ----
  // occupancy [1,R,R,R] -> (mean [1,d], logvar [1,d] clamped to [-30,20])
  std::pair<Value, Value> encoder_forward(Tape& tape,
                                          const std::vector<Value>& p,
                                          const Tensor& occupancy) const;
  // z = mean + exp(logvar/2) * eps, eps constant on the tape
  Value reparameterize_op(Tape& tape, Value mean, Value logvar,
                          const Tensor& eps) const;
  // z [1,d] -> (three planes [N,N,C], slot params [M,7]); mode contracts
  // are applied here
  struct Decoded {
    std::array<Value, 3> planes;
    Value slot_params;
  };
  Decoded decode_relationships_op(Tape& tape, const std::vector<Value>& p,
                                  Value z) const;
  // one slot's deformed template vertices [V,3]
  Value deform_slot_op(Tape& tape, const std::vector<Value>& p,
                       const Decoded& dec, int slot_index) const;
  // full self-attention stack over tokens [V, token_width] -> [V,3]
  // displacements (exposed for the permutation-equivariance property)
  Value transformer_op(Tape& tape, const std::vector<Value>& p,
                       Value tokens) const;

  // ---- plain paths (inference; each runs a private tape) ----
  std::pair<std::vector<double>, std::vector<double>> encode(
      const Scene& scene) const;
  std::vector<double> reparameterize(const std::vector<double>& mean,
                                     const std::vector<double>& logvar,
                                     std::uint64_t seed) const;
  std::pair<TriPlaneField, LayoutSlots> decode_relationships(
      const std::vector<double>& z) const;
  std::vector<Mesh> decode_instances(const TriPlaneField& field,
                                     const LayoutSlots& layout) const;
  // decode_relationships + decode_instances over the active slots
  std::pair<std::vector<Mesh>, LayoutSlots> generate(
      const std::vector<double>& z) const;
  // encode -> reparameterize -> decode; returns everything the loss stack
  // needs for inspection
  struct ForwardOutput {
    std::vector<Mesh> shapes;
    LayoutSlots layout;
    LatentCode latent;
  };
  ForwardOutput forward(const Scene& scene, std::uint64_t seed) const;

  // 32^3-style occupancy grid of the placed meshes, shape [1,R,R,R]
  Tensor voxelize(const Scene& scene) const;

 private:
  Value linear(Tape& tape, const std::vector<Value>& p, Value x,
               const std::string& name) const;
  int pidx(const std::string& name) const;

  ModelConfig cfg_;
  ParameterStore store_;
  Mesh template_;
  Tensor canonical_slots_;
};

}  // namespace sfield
