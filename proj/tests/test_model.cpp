#include <cstring>
#include <numeric>

#include "doctest.h"
#include "sfield/gradcheck.hpp"
#include "sfield/losses.hpp"
#include "sfield/model.hpp"
#include "sfield/rng.hpp"

using namespace sfield;

namespace {

ModelConfig tiny_config(ModelMode mode = ModelMode::kFull) {
  ModelConfig cfg;
  cfg.mode = mode;
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

Scene two_box_scene() {
  Scene s;
  s.id = "test";
  for (int i = 0; i < 2; ++i) {
    SceneObject o;
    o.category = "box";
    o.transform.center = {i == 0 ? -0.25 : 0.25, 0.0, 0.1 * i};
    o.transform.scale = {0.15, 0.1, 0.12};
    o.mesh = canonicalize(make_box({0.15, 0.1, 0.12}));
    s.objects.push_back(o);
  }
  s.normalized = true;
  return s;
}

std::vector<double> random_z(Rng& rng, int d) {
  std::vector<double> z(d);
  for (double& v : z) v = rng.normal();
  return z;
}

}  // namespace

TEST_CASE("encoder") {
  const SceneModel model(tiny_config(), 3);

  SUBCASE("zero occupancy with a zeroed final layer gives zero latents") {
    SceneModel m(tiny_config(), 3);
    Param& w = m.params()[m.params().find("enc.fc.w")];
    Param& b = m.params()[m.params().find("enc.fc.b")];
    std::fill_n(w.value.data(), w.value.size(), 0.0);
    std::fill_n(b.value.data(), b.value.size(), 0.0);
    Tape t;
    auto p = m.bind(t);
    auto [mean, logvar] =
        m.encoder_forward(t, p, Tensor({1, 16, 16, 16}));
    for (int i = 0; i < 16; ++i) {
      CHECK(t.value(mean)[i] == 0.0);
      CHECK(t.value(logvar)[i] == 0.0);
    }
  }

  SUBCASE("translated scenes produce different means") {
    Scene a = two_box_scene();
    Scene b = a;
    for (auto& o : b.objects) o.transform.center.x += 0.2;
    const auto [ma, la] = model.encode(a);
    const auto [mb, lb] = model.encode(b);
    double diff = 0.0;
    for (std::size_t i = 0; i < ma.size(); ++i)
      diff += std::fabs(ma[i] - mb[i]);
    CHECK(diff > 1e-6);
  }

  SUBCASE("rejects empty scenes") {
    CHECK_THROWS_AS(model.encode(Scene{}), Error);
  }

  SUBCASE("parameter gradients pass spot finite-difference checks") {
    const Tensor occ = model.voxelize(two_box_scene());
    Rng rng(5);
    Tensor probe_w({16, 2 * 16});
    for (const char* name : {"enc.conv0.w", "enc.conv2.b", "enc.fc.w"}) {
      const int idx = model.params().find(name);
      REQUIRE(idx >= 0);
      const Tensor& value = model.params()[idx].value;
      std::vector<std::int64_t> coords;
      for (int k = 0; k < 6; ++k)
        coords.push_back(rng.uniform_int(0, static_cast<int>(value.size()) - 1));
      auto fn = [&](Tape& t, Value x) {
        auto p = model.bind(t);
        p[idx] = x;
        auto [mean, logvar] = model.encoder_forward(t, p, occ);
        return sum(sigmoid(concat(mean, logvar, 1)));
      };
      CHECK(gradient_check_at(fn, value, 1e-5, coords) < 1e-5);
    }
  }
}

TEST_CASE("reparameterize") {
  const SceneModel model(tiny_config(), 3);

  SUBCASE("collapsed variance returns the mean") {
    std::vector<double> mean(16, 0.7), logvar(16, -40.0);  // clamps to -30
    const auto z = model.reparameterize(mean, logvar, 9);
    for (double v : z) CHECK(v == doctest::Approx(0.7).epsilon(1e-6));
  }

  SUBCASE("unit Gaussian statistics") {
    std::vector<double> mean(2, 0.0), logvar(2, 0.0);
    double m1 = 0.0, m2 = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const auto z = model.reparameterize(mean, logvar, 1000 + i);
      m1 += z[0];
      m2 += z[0] * z[0];
    }
    m1 /= n;
    m2 /= n;
    CHECK(std::fabs(m1) < 0.02);
    CHECK(std::fabs(m2 - m1 * m1 - 1.0) < 0.02);
  }

  SUBCASE("deterministic per seed") {
    std::vector<double> mean(16, 0.1), logvar(16, -1.0);
    const auto a = model.reparameterize(mean, logvar, 77);
    const auto b = model.reparameterize(mean, logvar, 77);
    CHECK(a == b);
  }
}

TEST_CASE("decode_relationships") {
  Rng rng(7);

  SUBCASE("pure function of z") {
    const SceneModel model(tiny_config(), 3);
    const auto z = random_z(rng, 16);
    const auto [f1, s1] = model.decode_relationships(z);
    const auto [f2, s2] = model.decode_relationships(z);
    for (int e = 0; e < 3; ++e)
      CHECK(std::memcmp(f1.planes[e].data(), f2.planes[e].data(),
                        f1.planes[e].size() * sizeof(double)) == 0);
    for (int s = 0; s < 4; ++s)
      CHECK(norm(s1.slots[s].center - s2.slots[s].center) == 0.0);
  }

  SUBCASE("output shapes") {
    const SceneModel model(tiny_config(), 3);
    const auto [field, slots] = model.decode_relationships(random_z(rng, 16));
    CHECK(field.n() == 8);
    CHECK(field.c() == 4);
    CHECK(slots.capacity() == 4);
  }

  SUBCASE("layout_only pins the planes to zero") {
    const SceneModel model(tiny_config(ModelMode::kLayoutOnly), 3);
    const auto [field, slots] = model.decode_relationships(random_z(rng, 16));
    for (int e = 0; e < 3; ++e)
      for (std::int64_t i = 0; i < field.planes[e].size(); ++i)
        CHECK(field.planes[e][i] == 0.0);
  }

  SUBCASE("field_only freezes slots at the canonical grid") {
    const SceneModel model(tiny_config(ModelMode::kFieldOnly), 3);
    const auto a = model.decode_relationships(random_z(rng, 16));
    const auto b = model.decode_relationships(random_z(rng, 16));
    for (int s = 0; s < 4; ++s) {
      CHECK(norm(a.second.slots[s].center - b.second.slots[s].center) == 0.0);
      CHECK(a.second.slots[s].active());
    }
  }

  SUBCASE("parameter counts are identical across modes") {
    const std::int64_t full =
        SceneModel(tiny_config(ModelMode::kFull), 3).params().total_size();
    const std::int64_t layout =
        SceneModel(tiny_config(ModelMode::kLayoutOnly), 3).params().total_size();
    const std::int64_t field =
        SceneModel(tiny_config(ModelMode::kFieldOnly), 3).params().total_size();
    CHECK(full == layout);
    CHECK(full == field);
  }
}

TEST_CASE("decode_instances") {
  Rng rng(11);
  const SceneModel model(tiny_config(), 3);

  SUBCASE("zero-initialized head reproduces slot-transformed templates") {
    const auto [field, slots] = model.decode_relationships(random_z(rng, 16));
    const auto shapes = model.decode_instances(field, slots);
    const auto active = slots.active_indices();
    REQUIRE(shapes.size() == active.size());
    for (std::size_t k = 0; k < active.size(); ++k) {
      const LayoutSlot& slot = slots.slots[active[k]];
      const Mesh expect = apply_slot(model.shape_template(),
                                     {slot.center, slot.scale()});
      REQUIRE(shapes[k].vertices.size() == expect.vertices.size());
      for (std::size_t i = 0; i < expect.vertices.size(); ++i)
        CHECK(norm(shapes[k].vertices[i] - expect.vertices[i]) == 0.0);
    }
  }

  SUBCASE("vertex counts match the template") {
    const auto [field, slots] = model.decode_relationships(random_z(rng, 16));
    for (const Mesh& m : model.decode_instances(field, slots))
      CHECK(m.vertices.size() == model.shape_template().vertices.size());
  }

  SUBCASE("no active slots give an empty list") {
    TriPlaneField field(8, 4);
    LayoutSlots slots;
    for (int i = 0; i < 4; ++i) {
      LayoutSlot s;
      s.presence_logit = -30.0;
      slots.slots.push_back(s);
    }
    CHECK(model.decode_instances(field, slots).empty());
  }
}

TEST_CASE("generate and forward") {
  Rng rng(13);
  const SceneModel model(tiny_config(), 3);

  SUBCASE("zero latent generates without error") {
    const auto [shapes, slots] = model.generate(std::vector<double>(16, 0.0));
    CHECK(shapes.size() == slots.active_indices().size());
  }

  SUBCASE("identical z gives identical scenes") {
    const auto z = random_z(rng, 16);
    const auto a = model.generate(z);
    const auto b = model.generate(z);
    REQUIRE(a.first.size() == b.first.size());
    for (std::size_t k = 0; k < a.first.size(); ++k)
      for (std::size_t i = 0; i < a.first[k].vertices.size(); ++i)
        CHECK(norm(a.first[k].vertices[i] - b.first[k].vertices[i]) == 0.0);
  }

  SUBCASE("rejects wrong latent width") {
    CHECK_THROWS_AS(model.generate(std::vector<double>(7, 0.0)), Error);
  }

  SUBCASE("forward is deterministic and aligned") {
    const Scene scene = two_box_scene();
    const auto a = model.forward(scene, 21);
    const auto b = model.forward(scene, 21);
    CHECK(a.latent.z == b.latent.z);
    CHECK(a.shapes.size() == a.layout.active_indices().size());
  }
}

TEST_CASE("transformer permutation equivariance") {
  const SceneModel model(tiny_config(), 3);
  Rng rng(17);
  const int v = 10, tw = model.config().token_width();
  Tensor tokens({v, tw});
  for (std::int64_t i = 0; i < tokens.size(); ++i)
    tokens[i] = rng.uniform(-1, 1);

  std::vector<int> perm(v);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = v - 1; i > 0; --i)
    std::swap(perm[i], perm[rng.uniform_int(0, i)]);
  Tensor permuted({v, tw});
  for (int i = 0; i < v; ++i)
    std::copy_n(tokens.data() + perm[i] * tw, tw, permuted.data() + i * tw);

  Tape t1, t2;
  auto p1 = model.bind(t1);
  auto p2 = model.bind(t2);
  const Tensor out = t1.value(model.transformer_op(t1, p1, t1.constant(tokens)));
  const Tensor out_p =
      t2.value(model.transformer_op(t2, p2, t2.constant(permuted)));
  for (int i = 0; i < v; ++i)
    for (int k = 0; k < 3; ++k)
      CHECK(out_p[i * 3 + k] ==
            doctest::Approx(out[perm[i] * 3 + k]).epsilon(1e-12));
}

TEST_CASE("end-to-end gradients reach z and the parameters") {
  const SceneModel model(tiny_config(), 3);
  Rng rng(19);
  Tensor z({1, 16});
  for (int i = 0; i < 16; ++i) z[i] = rng.normal() * 0.5;
  Tensor weights({static_cast<int>(model.shape_template().vertices.size()), 3});
  for (std::int64_t i = 0; i < weights.size(); ++i)
    weights[i] = rng.uniform(-1, 1);

  SUBCASE("with respect to z") {
    auto fn = [&](Tape& t, Value zv) {
      auto p = model.bind(t);
      auto dec = model.decode_relationships_op(t, p, zv);
      Value verts = model.deform_slot_op(t, p, dec, 1);
      return sum(mul(verts, t.constant(weights)));
    };
    CHECK(gradient_check(fn, z, 1e-5) < 1e-4);
  }

  SUBCASE("with respect to sampled parameters") {
    for (const char* name :
         {"dec.convt2.w", "slot.fc1.w", "tf.l0.q.w", "tf.in.b"}) {
      const int idx = model.params().find(name);
      REQUIRE(idx >= 0);
      const Tensor& value = model.params()[idx].value;
      std::vector<std::int64_t> coords;
      for (int k = 0; k < 5; ++k)
        coords.push_back(rng.uniform_int(0, static_cast<int>(value.size()) - 1));
      auto fn = [&](Tape& t, Value x) {
        auto p = model.bind(t);
        p[idx] = x;
        auto dec = model.decode_relationships_op(t, p, t.constant(z));
        Value verts = model.deform_slot_op(t, p, dec, 0);
        return sum(mul(verts, t.constant(weights)));
      };
      CHECK(gradient_check_at(fn, value, 1e-5, coords) < 1e-4);
    }
  }
}
