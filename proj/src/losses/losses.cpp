#include "sfield/losses.hpp"

#include <algorithm>
#include <cmath>

namespace sfield {

double kl_loss(const std::vector<double>& mean,
               const std::vector<double>& logvar) {
  require(mean.size() == logvar.size(), "kl_loss: width mismatch ",
          mean.size(), " vs ", logvar.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i)
    acc += mean[i] * mean[i] + std::exp(logvar[i]) - 1.0 - logvar[i];
  return 0.5 * acc;
}

Value kl_loss_op(Value mean, Value logvar) {
  Tape& t = *mean.tape;
  require(t.value(mean).same_shape(t.value(logvar)),
          "kl_loss: width mismatch ", shape_str(t.value(mean).shape()),
          " vs ", shape_str(t.value(logvar).shape()));
  Value m2 = mul(mean, mean);
  Value ev = exp(logvar);
  Value inner = sub(add(m2, ev), add_const(logvar, 1.0));
  return scale(sum(inner), 0.5);
}

std::vector<std::pair<int, int>> match_slots(const LayoutSlots& slots,
                                             const std::vector<AABB>& gt) {
  require(!gt.empty(), "match_slots: no ground-truth objects");
  const int m = slots.capacity();
  require(static_cast<int>(gt.size()) <= m, "match_slots: ", gt.size(),
          " objects exceed the slot capacity ", m);
  std::vector<std::vector<double>> cost(gt.size(),
                                        std::vector<double>(m, 0.0));
  for (std::size_t g = 0; g < gt.size(); ++g)
    for (int s = 0; s < m; ++s)
      cost[g][s] = norm(slots.slots[s].center - gt[g].center());
  const std::vector<int> assignment = hungarian(cost);
  std::vector<std::pair<int, int>> matching;
  for (std::size_t g = 0; g < gt.size(); ++g)
    matching.emplace_back(assignment[g], static_cast<int>(g));
  return matching;
}

double layout_loss(const LayoutSlots& slots, const std::vector<AABB>& gt,
                   const std::vector<std::pair<int, int>>& matching) {
  double iou_term = 0.0;
  std::vector<char> matched(slots.capacity(), 0);
  for (const auto& [s, g] : matching) {
    iou_term += 1.0 - iou3d(slots.slots[s].box(), gt[g]);
    matched[s] = 1;
  }
  iou_term /= static_cast<double>(matching.size());

  double bce = 0.0;
  for (int s = 0; s < slots.capacity(); ++s) {
    const double x = slots.slots[s].presence_logit;
    const double y = matched[s] ? 1.0 : 0.0;
    bce += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::fabs(x)));
  }
  bce /= static_cast<double>(slots.capacity());
  return iou_term + bce;
}

namespace {

// product of the three components of a [1,3] row
Value prod3(Value v) {
  return mul(mul(slice(v, 1, 0, 1), slice(v, 1, 1, 1)), slice(v, 1, 2, 1));
}

Tensor row3(const Vec3& v) { return Tensor({1, 3}, {v.x, v.y, v.z}); }

}  // namespace

Value layout_loss_op(Value slot_params, const std::vector<AABB>& gt,
                     const std::vector<std::pair<int, int>>& matching) {
  Tape& t = *slot_params.tape;
  const Tensor& sp = t.value(slot_params);
  require(sp.rank() == 2 && sp.cols() == 7,
          "layout_loss: slot params must be [M,7], got ",
          shape_str(sp.shape()));
  require(!matching.empty(), "layout_loss: empty matching");
  const int m = sp.rows();

  Value iou_acc;
  bool first = true;
  std::vector<char> matched(m, 0);
  for (const auto& [s, g] : matching) {
    require(s >= 0 && s < m, "layout_loss: matching names slot ", s);
    matched[s] = 1;
    Value row = slice(slot_params, 0, s, 1);        // [1,7]
    Value center = slice(row, 1, 0, 3);             // [1,3]
    Value log_scale = clamp(slice(row, 1, 3, 3), -20.0, 5.0);
    Value half = exp(log_scale);
    Value lo = sub(center, half);
    Value hi = add(center, half);
    const AABB& box = gt[g];
    Value ix = relu(sub(emin(hi, t.constant(row3(box.hi))),
                        emax(lo, t.constant(row3(box.lo)))));
    Value inter = prod3(ix);
    Value vol_a = prod3(scale(half, 2.0));
    // union >= vol_a > 0 because the decoded half-extents are exp(...)
    Value uni = sub(add(vol_a, t.constant(Tensor({1, 1}, {box.volume()}))), inter);
    Value iou = div(inter, uni);
    Value term = add_const(neg(iou), 1.0);
    iou_acc = first ? term : add(iou_acc, term);
    first = false;
  }
  Value iou_mean = scale(iou_acc, 1.0 / static_cast<double>(matching.size()));

  Value logits = reshape(slice(slot_params, 1, 6, 1), {m});
  Tensor indicator({m});
  for (int s = 0; s < m; ++s) indicator[s] = matched[s] ? 1.0 : 0.0;
  Value bce = bce_logits(logits, t.constant(indicator));
  return add(reshape(iou_mean, {1}), bce);
}

double total_loss(double kl, double render, double layout, double alpha) {
  require(std::isfinite(kl), "total_loss: non-finite kl component");
  require(std::isfinite(render), "total_loss: non-finite render component");
  require(std::isfinite(layout), "total_loss: non-finite layout component");
  return alpha * kl + render + layout;
}

LayoutSlots slots_from_tensor(const Tensor& params) {
  require(params.rank() == 2 && params.cols() == 7,
          "slots_from_tensor: expected [M,7], got ",
          shape_str(params.shape()));
  LayoutSlots out;
  for (int s = 0; s < params.rows(); ++s) {
    const double* row = params.data() + s * 7;
    LayoutSlot slot;
    slot.center = {row[0], row[1], row[2]};
    slot.log_scale = {std::clamp(row[3], -20.0, 5.0),
                      std::clamp(row[4], -20.0, 5.0),
                      std::clamp(row[5], -20.0, 5.0)};
    slot.presence_logit = row[6];
    out.slots.push_back(slot);
  }
  return out;
}

}  // namespace sfield
