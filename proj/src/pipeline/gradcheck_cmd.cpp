#include <cstdio>
#include <iostream>

#include "sfield/dataio.hpp"
#include "sfield/gradcheck.hpp"
#include "sfield/pipeline.hpp"
#include "sfield/rng.hpp"
#include "sfield/render.hpp"
#include "sfield/triplane.hpp"

// Gradient audit across every differentiable component, small
// configurations so the whole table runs in seconds. Analytic tensor ops
// check at 1e-5, losses and the latent-to-vertex chain at 1e-4, anything
// through the rasterizer at 1e-3 (its coverage cutoff sets the finite-
// difference noise floor).

namespace sfield::pipeline {

namespace {

Tensor rnd(Rng& rng, std::vector<int> shape, double lo = -1.0,
           double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

Tensor rnd_off_zero(Rng& rng, std::vector<int> shape) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) {
    const double mag = rng.uniform(0.15, 1.5);
    t[i] = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

ModelConfig audit_model_config() {
  ModelConfig cfg;
  cfg.latent_width = 16;
  cfg.slot_capacity = 4;
  cfg.plane_resolution = 8;
  cfg.plane_channels = 4;
  cfg.template_subdivisions = 1;
  cfg.voxel_resolution = 16;
  cfg.tf_layers = 1;
  cfg.tf_heads = 2;
  cfg.tf_width = 32;
  cfg.pe_bands = 2;
  return cfg;
}

struct Audit {
  std::vector<GradCheckRow> rows;

  void check(const std::string& name, double err, double threshold) {
    rows.push_back({name, err, threshold, err < threshold});
  }
};

void audit_core_ops(Audit& audit) {
  Rng rng(101);
  const double tol = 1e-5;
  const Tensor x = rnd_off_zero(rng, {3, 4});
  const Tensor y = rnd_off_zero(rng, {3, 4});
  const Tensor right = rnd(rng, {4, 2});
  const Tensor pos = rnd(rng, {3, 4}, 0.2, 2.0);
  auto run = [&](const char* name, const ScalarFn& f, const Tensor& at) {
    audit.check(std::string("op.") + name, gradient_check(f, at, 1e-5), tol);
  };
  run("add", [&](Tape& t, Value v) { return sum(add(v, t.constant(y))); }, x);
  run("sub", [&](Tape& t, Value v) { return sum(sub(t.constant(y), v)); }, x);
  run("mul", [&](Tape& t, Value v) { return sum(mul(v, t.constant(y))); }, x);
  run("div", [&](Tape& t, Value v) { return sum(div(t.constant(y), v)); }, x);
  run("relu", [](Tape&, Value v) { return sum(relu(v)); }, x);
  run("sigmoid", [](Tape&, Value v) { return sum(sigmoid(v)); }, x);
  run("exp", [](Tape&, Value v) { return sum(exp(v)); }, x);
  run("log", [](Tape&, Value v) { return sum(log(v)); }, pos);
  run("softmax", [&](Tape& t, Value v) {
    return sum(mul(softmax(v), t.constant(y)));
  }, x);
  run("layer_norm", [&](Tape& t, Value v) {
    return sum(mul(layer_norm(v), t.constant(y)));
  }, x);
  run("concat", [&](Tape& t, Value v) {
    return sum(mul(concat(v, t.constant(y), 1),
                   t.constant(rnd(rng, {3, 8}))));
  }, x);
  run("slice", [](Tape&, Value v) { return sum(slice(v, 1, 1, 2)); }, x);
  run("sum", [](Tape&, Value v) { return sum(v); }, x);
  run("mean", [](Tape&, Value v) { return mean(v); }, x);
  run("l1_distance",
      [&](Tape& t, Value v) { return l1_distance(v, t.constant(y)); }, x);
  run("l2_norm", [](Tape&, Value v) { return l2_norm(v); }, x);
  run("matmul",
      [&](Tape& t, Value v) { return sum(matmul(v, t.constant(right))); }, x);

  const Tensor x3 = rnd(rng, {2, 5, 5, 5});
  const Tensor w3 = rnd(rng, {3, 2, 3, 3, 3}, -0.4, 0.4);
  const Tensor b3 = rnd(rng, {3});
  run("conv3d", [&](Tape& t, Value v) {
    return sum(sigmoid(conv3d(v, t.constant(w3), t.constant(b3), 2, 1)));
  }, x3);
  const Tensor x2 = rnd(rng, {2, 3, 3});
  const Tensor w2 = rnd(rng, {2, 3, 4, 4}, -0.4, 0.4);
  const Tensor b2 = rnd(rng, {3});
  run("conv_transpose2d", [&](Tape& t, Value v) {
    return sum(sigmoid(conv_transpose2d(v, t.constant(w2), t.constant(b2), 2,
                                        1)));
  }, x2);
}

void audit_triplane(Audit& audit) {
  Rng rng(202);
  const int n = 6, c = 3;
  std::array<Tensor, 3> planes;
  for (Tensor& p : planes) p = rnd(rng, {n, n, c});
  Tensor pts({8, 3});
  for (int i = 0; i < 8; ++i)
    for (int k = 0; k < 3; ++k) {
      // keep the probes off the grid lines
      double v;
      do {
        v = rng.uniform(-0.45, 0.45);
      } while (std::fabs((v + 0.5) * (n - 1) -
                         std::round((v + 0.5) * (n - 1))) < 1e-3);
      pts[i * 3 + k] = v;
    }
  const Tensor w = rnd(rng, {8, c});
  audit.check("triplane.features",
              gradient_check(
                  [&](Tape& t, Value v) {
                    return sum(mul(
                        sample_field_batch(v, t.constant(planes[1]),
                                           t.constant(planes[2]),
                                           t.constant(pts)),
                        t.constant(w)));
                  },
                  planes[0], 1e-5),
              1e-5);
  audit.check("triplane.points",
              gradient_check(
                  [&](Tape& t, Value v) {
                    return sum(mul(
                        sample_field_batch(t.constant(planes[0]),
                                           t.constant(planes[1]),
                                           t.constant(planes[2]), v),
                        t.constant(w)));
                  },
                  pts, 1e-6),
              1e-5);
}

void audit_raster(Audit& audit) {
  Camera cam;
  cam.position = {0.0, 0.0, 1.5};
  cam.width = 20;
  cam.height = 20;
  SoftRasterConfig cfg;
  cfg.temperature = 1e-2;
  Mesh m = icosphere(0);
  for (Vec3& v : m.vertices) v = v * 0.25 + Vec3{0.04, -0.02, 0.0};
  Tensor verts({static_cast<int>(m.vertices.size()), 3});
  for (std::size_t i = 0; i < m.vertices.size(); ++i) {
    verts[i * 3] = m.vertices[i].x;
    verts[i * 3 + 1] = m.vertices[i].y;
    verts[i * 3 + 2] = m.vertices[i].z;
  }
  audit.check("raster.mask",
              gradient_check(
                  [&](Tape&, Value v) {
                    return sum(slice(rasterize_soft_op(v, m.faces, cam, cfg),
                                     2, 3, 1));
                  },
                  verts, 1e-6),
              1e-3);
  Rng rng(303);
  const Tensor w = rnd(rng, {20, 20, 3});
  audit.check("raster.normals",
              gradient_check(
                  [&](Tape& t, Value v) {
                    return sum(mul(slice(rasterize_soft_op(v, m.faces, cam,
                                                           cfg),
                                         2, 0, 3),
                                   t.constant(w)));
                  },
                  verts, 1e-6),
              1e-3);
}

void audit_losses(Audit& audit) {
  Rng rng(404);
  const Tensor mean_t = rnd(rng, {1, 8});
  const Tensor logvar_t = rnd(rng, {1, 8});
  audit.check("loss.kl",
              gradient_check(
                  [&](Tape& t, Value v) {
                    return kl_loss_op(v, t.constant(logvar_t));
                  },
                  mean_t, 1e-5),
              1e-4);

  Tensor slot_params({4, 7});
  for (std::int64_t i = 0; i < slot_params.size(); ++i)
    slot_params[i] = rng.uniform(-0.7, 0.7);
  std::vector<AABB> boxes;
  for (int g = 0; g < 2; ++g) {
    const Vec3 c{rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3),
                 rng.uniform(-0.3, 0.3)};
    const Vec3 h{0.15, 0.12, 0.1};
    boxes.push_back({c - h, c + h});
  }
  const auto matching = match_slots(slots_from_tensor(slot_params), boxes);
  audit.check("loss.layout",
              gradient_check(
                  [&](Tape&, Value v) {
                    return layout_loss_op(v, boxes, matching);
                  },
                  slot_params, 1e-6),
              1e-4);

  RenderBuffers gt;
  gt.normal = rnd(rng, {6, 6, 3});
  gt.mask = rnd(rng, {6, 6}, 0.0, 1.0);
  Tensor pred = rnd(rng, {6, 6, 4}, 0.05, 0.95);
  audit.check("loss.render",
              gradient_check(
                  [&](Tape&, Value v) { return render_loss_op(v, gt); },
                  pred, 1e-6),
              1e-4);
}

void audit_end_to_end(Audit& audit, bool inject_fault) {
  const ModelConfig mc = audit_model_config();
  const SceneModel model(mc, 7);
  Rng rng(505);
  Tensor z({1, mc.latent_width});
  for (std::int64_t i = 0; i < z.size(); ++i) z[i] = rng.normal() * 0.5;
  const Tensor w =
      rnd(rng, {static_cast<int>(model.shape_template().vertices.size()), 3});

  audit.check("e2e.latent_to_vertices",
              gradient_check(
                  [&](Tape& t, Value v) {
                    auto p = model.bind(t);
                    auto dec = model.decode_relationships_op(t, p, v);
                    return sum(mul(model.deform_slot_op(t, p, dec, 0),
                                   t.constant(w)));
                  },
                  z, 1e-5),
              1e-4);

  // encoder -> latent -> decoder -> instance chain, spot-checked per
  // parameter group
  SynthConfig sc;
  sc.count = 1;
  sc.seed = 9;
  const Scene scene = synth_dataset(sc)[0];
  const Tensor occ = model.voxelize(scene);
  double worst = 0.0;
  for (const char* name : {"enc.fc.w", "dec.convt1.w", "slot.fc1.w",
                           "tf.l0.v.w"}) {
    const int idx = model.params().find(name);
    const Tensor& value = model.params()[idx].value;
    std::vector<std::int64_t> coords;
    for (int k = 0; k < 4; ++k)
      coords.push_back(rng.uniform_int(0, static_cast<int>(value.size()) - 1));
    const double err = gradient_check_at(
        [&](Tape& t, Value v) {
          auto p = model.bind(t);
          p[idx] = v;
          auto [mean_v, logvar_v] = model.encoder_forward(t, p, occ);
          Value zv = model.reparameterize_op(t, mean_v, logvar_v,
                                             Tensor({1, mc.latent_width}));
          auto dec = model.decode_relationships_op(t, p, zv);
          return sum(mul(model.deform_slot_op(t, p, dec, 1), t.constant(w)));
        },
        value, 1e-5, coords);
    worst = std::max(worst, err);
  }
  audit.check("e2e.params_to_vertices", worst, 1e-4);

  // the full objective including the rasterizer inherits its tolerance
  {
    Camera cam;
    cam.position = {0.0, 0.3, 1.45};
    cam.width = 16;
    cam.height = 16;
    SoftRasterConfig rcfg;
    rcfg.temperature = 1e-2;
    const std::vector<AABB> boxes = {scene.objects[0].transform.box()};
    const RenderBuffers gtbuf = rasterize_soft(
        scene.objects[0].placed_mesh(), cam, rcfg.temperature,
        rcfg.depth_sharpness);
    const int idx = model.params().find("slot.fc1.b");
    const Tensor& value = model.params()[idx].value;
    std::vector<std::int64_t> coords;
    for (int k = 0; k < 6; ++k)
      coords.push_back(rng.uniform_int(0, static_cast<int>(value.size()) - 1));
    const double err = gradient_check_at(
        [&](Tape& t, Value v) {
          auto p = model.bind(t);
          p[idx] = v;
          auto [mean_v, logvar_v] = model.encoder_forward(t, p, occ);
          Value zv = model.reparameterize_op(t, mean_v, logvar_v,
                                             Tensor({1, mc.latent_width}));
          auto dec = model.decode_relationships_op(t, p, zv);
          const auto matching =
              match_slots(slots_from_tensor(t.value(dec.slot_params)), boxes);
          Value layout = layout_loss_op(dec.slot_params, boxes, matching);
          Value verts =
              model.deform_slot_op(t, p, dec, matching[0].first);
          Value raster = rasterize_soft_op(
              verts, model.shape_template().faces, cam, rcfg);
          Value render = render_loss_op(raster, gtbuf);
          Value kl = kl_loss_op(mean_v, logvar_v);
          return add(add(scale(kl, kKlWeight), render), layout);
        },
        value, 1e-5, coords);
    audit.check("e2e.full_objective", err, 1e-3);
  }

  if (inject_fault) {
    // identity forward with a doubled backward; the harness must flag it
    struct Broken : CustomOp {
      const char* name() const override { return "fault_injection"; }
      Tensor forward(const std::vector<const Tensor*>& in) override {
        return *in[0];
      }
      void backward(const Tensor& g, const std::vector<const Tensor*>&,
                    const Tensor&, const std::vector<Tensor*>& gi) override {
        for (std::int64_t i = 0; i < g.size(); ++i) (*gi[0])[i] += 2.0 * g[i];
      }
    };
    audit.check("fault_injection",
                gradient_check(
                    [](Tape& t, Value v) {
                      return sum(t.custom(std::make_shared<Broken>(), {v}));
                    },
                    rnd(rng, {5}), 1e-5),
                1e-5);
  }
}

}  // namespace

std::vector<GradCheckRow> run_gradcheck(bool inject_fault) {
  Audit audit;
  audit_core_ops(audit);
  audit_triplane(audit);
  audit_raster(audit);
  audit_losses(audit);
  audit_end_to_end(audit, inject_fault);
  return audit.rows;
}

void cmd_gradcheck(bool inject_fault) {
  const std::vector<GradCheckRow> rows = run_gradcheck(inject_fault);
  int failures = 0;
  std::printf("%-28s %14s %12s  %s\n", "component", "max_rel_err",
              "threshold", "status");
  for (const GradCheckRow& row : rows) {
    std::printf("%-28s %14.3e %12.0e  %s\n", row.name.c_str(),
                row.max_rel_error, row.threshold,
                row.pass ? "PASS" : "FAIL");
    failures += !row.pass;
  }
  require(failures == 0, failures, " gradient check(s) failed");
}

}  // namespace sfield::pipeline
