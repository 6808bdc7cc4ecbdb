#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "sfield/gradcheck.hpp"
#include "sfield/losses.hpp"
#include "sfield/optim.hpp"
#include "sfield/rng.hpp"

using namespace sfield;

namespace {

LayoutSlots grid_slots(int m) {
  // deterministic spread of slot centers
  LayoutSlots s;
  for (int i = 0; i < m; ++i) {
    LayoutSlot slot;
    slot.center = {-0.4 + 0.8 * (i % 4) / 3.0, 0.0,
                   -0.4 + 0.8 * (i / 4) / 2.0};
    slot.log_scale = {std::log(0.1), std::log(0.1), std::log(0.1)};
    s.slots.push_back(slot);
  }
  return s;
}

AABB box_at(const Vec3& c, const Vec3& h) { return {c - h, c + h}; }

}  // namespace

TEST_CASE("kl_loss") {
  SUBCASE("standard normal parameters give zero") {
    CHECK(kl_loss({0, 0, 0}, {0, 0, 0}) == 0.0);
  }

  SUBCASE("unit mean offset gives one half") {
    CHECK(kl_loss({1.0}, {0.0}) == doctest::Approx(0.5).epsilon(1e-15));
  }

  SUBCASE("matches numeric integration of the KL integral") {
    Rng rng(3);
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<double> mean(4), logvar(4);
      for (int i = 0; i < 4; ++i) {
        mean[i] = rng.uniform(-1.5, 1.5);
        logvar[i] = rng.uniform(-1.0, 1.0);
      }
      // per-dimension quadrature of p ln(p/q) on a wide grid
      double integral = 0.0;
      for (int i = 0; i < 4; ++i) {
        const double sigma = std::exp(0.5 * logvar[i]);
        const double lo = mean[i] - 14 * sigma - 14, hi = mean[i] + 14 * sigma + 14;
        const int steps = 400000;
        const double h = (hi - lo) / steps;
        double acc = 0.0;
        for (int k = 0; k <= steps; ++k) {
          const double x = lo + k * h;
          const double zp = (x - mean[i]) / sigma;
          const double logp =
              -0.5 * zp * zp - std::log(sigma) - 0.5 * std::log(2 * M_PI);
          const double logq = -0.5 * x * x - 0.5 * std::log(2 * M_PI);
          const double w = (k == 0 || k == steps) ? 0.5 : 1.0;
          acc += w * std::exp(logp) * (logp - logq);
        }
        integral += acc * h;
      }
      CHECK(std::fabs(kl_loss(mean, logvar) - integral) < 1e-4);
    }
  }

  SUBCASE("nonnegative with equality only at the prior") {
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
      std::vector<double> mean{rng.uniform(-2, 2)}, logvar{rng.uniform(-2, 2)};
      const double v = kl_loss(mean, logvar);
      CHECK(v >= 0.0);
      if (mean[0] != 0.0 || logvar[0] != 0.0) CHECK(v > 0.0);
    }
  }

  SUBCASE("tape form agrees and is differentiable") {
    Rng rng(7);
    Tensor mean({6}), logvar({6});
    for (int i = 0; i < 6; ++i) {
      mean[i] = rng.uniform(-1, 1);
      logvar[i] = rng.uniform(-1, 1);
    }
    Tape t;
    Value v = kl_loss_op(t.input(mean), t.input(logvar));
    std::vector<double> mv(mean.data(), mean.data() + 6);
    std::vector<double> lv(logvar.data(), logvar.data() + 6);
    CHECK(t.value(v).item() == doctest::Approx(kl_loss(mv, lv)).epsilon(1e-12));

    CHECK(gradient_check(
              [&](Tape& tp, Value x) {
                return kl_loss_op(x, tp.constant(logvar));
              },
              mean, 1e-5) < 1e-6);
  }
}

TEST_CASE("match_slots") {
  const LayoutSlots slots = grid_slots(12);

  SUBCASE("single object matches the nearest-center slot") {
    const AABB gt = box_at(slots.slots[5].center + Vec3{0.01, 0, 0},
                           {0.05, 0.05, 0.05});
    const auto matching = match_slots(slots, {gt});
    REQUIRE(matching.size() == 1);
    CHECK(matching[0].first == 5);
    CHECK(matching[0].second == 0);
  }

  SUBCASE("permutation invariance as a set") {
    Rng rng(11);
    std::vector<AABB> gt;
    for (int i = 0; i < 5; ++i)
      gt.push_back(box_at({rng.uniform(-0.4, 0.4), 0, rng.uniform(-0.4, 0.4)},
                          {0.05, 0.05, 0.05}));
    const auto base = match_slots(slots, gt);
    std::vector<AABB> perm{gt[3], gt[0], gt[4], gt[2], gt[1]};
    const int back[5] = {3, 0, 4, 2, 1};
    const auto permuted = match_slots(slots, perm);
    for (const auto& [s, g] : permuted) {
      const int orig_g = back[g];
      bool found = false;
      for (const auto& [s2, g2] : base) found |= (s2 == s && g2 == orig_g);
      CHECK(found);
    }
  }

  SUBCASE("matches exhaustive enumeration over assignments") {
    Rng rng(13);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<AABB> gt;
      for (int i = 0; i < 5; ++i)
        gt.push_back(
            box_at({rng.uniform(-0.45, 0.45), rng.uniform(-0.2, 0.2),
                    rng.uniform(-0.45, 0.45)},
                   {0.05, 0.05, 0.05}));
      LayoutSlots rs;
      for (int i = 0; i < 12; ++i) {
        LayoutSlot slot;
        slot.center = {rng.uniform(-0.45, 0.45), rng.uniform(-0.2, 0.2),
                       rng.uniform(-0.45, 0.45)};
        slot.log_scale = {-2, -2, -2};
        rs.slots.push_back(slot);
      }
      // brute force over ordered slot selections
      double best = 1e300;
      std::vector<int> chosen(5, -1), best_sel;
      std::vector<char> used(12, 0);
      auto recurse = [&](auto&& self, int g, double acc) -> void {
        if (acc >= best) return;
        if (g == 5) {
          best = acc;
          best_sel = chosen;
          return;
        }
        for (int s = 0; s < 12; ++s) {
          if (used[s]) continue;
          used[s] = 1;
          chosen[g] = s;
          self(self, g + 1, acc + norm(rs.slots[s].center - gt[g].center()));
          used[s] = 0;
        }
      };
      recurse(recurse, 0, 0.0);

      const auto matching = match_slots(rs, gt);
      double total = 0.0;
      for (const auto& [s, g] : matching)
        total += norm(rs.slots[s].center - gt[g].center());
      CHECK(total == doctest::Approx(best).epsilon(1e-12));
      for (const auto& [s, g] : matching) CHECK(s == best_sel[g]);
    }
  }

  SUBCASE("rejects overfull instances") {
    std::vector<AABB> gt(13, box_at({0, 0, 0}, {0.1, 0.1, 0.1}));
    CHECK_THROWS_AS(match_slots(slots, gt), Error);
  }
}

TEST_CASE("layout_loss") {
  SUBCASE("exact slots with saturated logits give near-zero loss") {
    LayoutSlots s;
    std::vector<AABB> gt;
    for (int i = 0; i < 3; ++i) {
      LayoutSlot slot;
      slot.center = {0.2 * i - 0.2, 0.0, 0.1};
      slot.log_scale = {std::log(0.08), std::log(0.05), std::log(0.07)};
      slot.presence_logit = 30.0;
      s.slots.push_back(slot);
      gt.push_back(slot.box());
    }
    // plus inactive extras
    for (int i = 0; i < 3; ++i) {
      LayoutSlot slot;
      slot.center = {0.4, 0.4, 0.4};
      slot.log_scale = {-3, -3, -3};
      slot.presence_logit = -30.0;
      s.slots.push_back(slot);
    }
    const auto matching = match_slots(s, gt);
    CHECK(layout_loss(s, gt, matching) < 1e-6);
  }

  SUBCASE("disjoint slots give an IoU term of exactly 1") {
    LayoutSlots s = grid_slots(4);
    for (auto& slot : s.slots) slot.center.y = 5.0;  // far away
    const std::vector<AABB> gt{box_at({0, 0, 0}, {0.1, 0.1, 0.1})};
    const auto matching = match_slots(s, gt);
    const double loss = layout_loss(s, gt, matching);
    // subtract the BCE of all-zero logits: ln 2
    const double bce = std::log(2.0);
    CHECK(loss == doctest::Approx(1.0 + bce).epsilon(1e-12));
  }

  SUBCASE("plain and tape routes agree to 1e-12; per-pair recomputation") {
    Rng rng(17);
    for (int trial = 0; trial < 5; ++trial) {
      const int m = 8;
      Tensor params({m, 7});
      for (std::int64_t i = 0; i < params.size(); ++i)
        params[i] = rng.uniform(-1.0, 1.0);
      const LayoutSlots slots = slots_from_tensor(params);
      std::vector<AABB> gt;
      for (int g = 0; g < 4; ++g)
        gt.push_back(box_at({rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4),
                             rng.uniform(-0.4, 0.4)},
                            {rng.uniform(0.05, 0.2), rng.uniform(0.05, 0.2),
                             rng.uniform(0.05, 0.2)}));
      const auto matching = match_slots(slots, gt);

      // independent per-pair recomputation
      double iou_sum = 0.0;
      for (const auto& [s, g] : matching)
        iou_sum += 1.0 - iou3d(slots.slots[s].box(), gt[g]);
      double bce = 0.0;
      for (int s = 0; s < m; ++s) {
        bool matched = false;
        for (const auto& [ms, mg] : matching) matched |= ms == s;
        const double x = params[s * 7 + 6];
        const double y = matched ? 1.0 : 0.0;
        bce += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::fabs(x)));
      }
      const double expect = iou_sum / matching.size() + bce / m;

      CHECK(std::fabs(layout_loss(slots, gt, matching) - expect) < 1e-12);

      Tape t;
      Value loss = layout_loss_op(t.input(params), gt, matching);
      CHECK(std::fabs(t.value(loss).item() - expect) < 1e-12);
    }
  }

  SUBCASE("tape route is differentiable") {
    Rng rng(19);
    const int m = 6;
    Tensor params({m, 7});
    for (std::int64_t i = 0; i < params.size(); ++i)
      params[i] = rng.uniform(-0.8, 0.8);
    std::vector<AABB> gt;
    for (int g = 0; g < 3; ++g)
      gt.push_back(box_at({rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3),
                           rng.uniform(-0.3, 0.3)},
                          {0.15, 0.12, 0.1}));
    const auto matching = match_slots(slots_from_tensor(params), gt);
    CHECK(gradient_check(
              [&](Tape&, Value v) { return layout_loss_op(v, gt, matching); },
              params, 1e-6) < 1e-4);
  }
}

TEST_CASE("total_loss") {
  SUBCASE("zeros") { CHECK(total_loss(0, 0, 0) == 0.0); }

  SUBCASE("alpha weighting from the objective") {
    CHECK(total_loss(1e4, 0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  }

  SUBCASE("linear form") {
    Rng rng(23);
    for (int i = 0; i < 20; ++i) {
      const double k = rng.uniform(0, 10), r = rng.uniform(0, 2),
                   l = rng.uniform(0, 2);
      CHECK(std::fabs(total_loss(k, r, l) - (1e-4 * k + r + l)) < 1e-12);
    }
  }

  SUBCASE("rejects non-finite components by name") {
    try {
      total_loss(std::numeric_limits<double>::quiet_NaN(), 0, 0);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("kl") != std::string::npos);
    }
  }
}

// direct slot optimization: Hungarian + IoU + BCE drives slots onto the
// targets without any decoder in the loop
TEST_CASE("layout loss sanity optimization") {
  Rng rng(29);
  std::vector<AABB> gt;
  for (int g = 0; g < 3; ++g)
    gt.push_back(box_at({rng.uniform(-0.35, 0.35), rng.uniform(-0.1, 0.1),
                         rng.uniform(-0.35, 0.35)},
                        {0.12, 0.08, 0.1}));
  // slots start large enough to overlap every box: the IoU term has no
  // gradient across disjoint pairs, so optimization shrinks-to-fit
  const int m = 6;
  Tensor params({m, 7});
  for (int s = 0; s < m; ++s) {
    params[s * 7 + 0] = rng.uniform(-0.05, 0.05);
    params[s * 7 + 1] = rng.uniform(-0.05, 0.05);
    params[s * 7 + 2] = rng.uniform(-0.05, 0.05);
    params[s * 7 + 3] = std::log(0.4);
    params[s * 7 + 4] = std::log(0.4);
    params[s * 7 + 5] = std::log(0.4);
    params[s * 7 + 6] = 0.0;
  }
  ParameterStore store;
  store.add("slots", params);
  AdamWConfig cfg;
  cfg.lr = 2e-3;
  cfg.weight_decay = 0.0;
  AdamW opt(cfg);
  for (int step = 0; step < 1000; ++step) {
    Tape t;
    Value v = t.input(store[0].value);
    const auto matching = match_slots(slots_from_tensor(store[0].value), gt);
    Value loss = layout_loss_op(v, gt, matching);
    t.backward(loss);
    opt.step(store, {t.grad(v)});
  }
  const LayoutSlots final_slots = slots_from_tensor(store[0].value);
  const auto matching = match_slots(final_slots, gt);
  double err = 0.0;
  for (const auto& [s, g] : matching)
    err += norm(final_slots.slots[s].center - gt[g].center());
  err /= matching.size();
  CHECK(err < 1e-3);
}
