#pragma once
// Training objective: Gaussian-prior KL term, Hungarian-matched layout
// loss (box IoU + presence cross-entropy), and the weighted total.

#include <utility>
#include <vector>

#include "sfield/slots.hpp"
#include "sfield/tape.hpp"

namespace sfield {

constexpr double kKlWeight = 1e-4;

struct LossReport {
  double kl = 0.0;
  double render = 0.0;
  double layout = 0.0;
  double total = 0.0;
  std::vector<std::pair<int, int>> matching;  // (slot index, gt index)
};

// 0.5 * sum(mean^2 + exp(logvar) - 1 - logvar)
double kl_loss(const std::vector<double>& mean,
               const std::vector<double>& logvar);
Value kl_loss_op(Value mean, Value logvar);

// Minimum-cost injective assignment of ground-truth boxes to slots, cost
// = center distance. Rejects instances with more objects than slots.
// Returned pairs are sorted by ground-truth index.
std::vector<std::pair<int, int>> match_slots(const LayoutSlots& slots,
                                             const std::vector<AABB>& gt);

// mean over matched pairs of (1 - iou3d) plus the presence BCE over all
// slots against the matched/unmatched indicator.
double layout_loss(const LayoutSlots& slots, const std::vector<AABB>& gt,
                   const std::vector<std::pair<int, int>>& matching);

// Differentiable form over the raw [M,7] slot tensor
// (center | log_scale | presence_logit per row).
Value layout_loss_op(Value slot_params, const std::vector<AABB>& gt,
                     const std::vector<std::pair<int, int>>& matching);

// alpha * kl + render + layout; rejects non-finite components by name.
double total_loss(double kl, double render, double layout,
                  double alpha = kKlWeight);

// Exact rectangular Hungarian (rows = objects, cols = slots, rows <=
// cols); returns the assigned column per row.
std::vector<int> hungarian(const std::vector<std::vector<double>>& cost);

LayoutSlots slots_from_tensor(const Tensor& params);  // [M,7]

}  // namespace sfield
