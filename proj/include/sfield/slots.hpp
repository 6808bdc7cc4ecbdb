#pragma once
// Fixed-capacity object slots: center, per-axis log-scale, presence logit.
// A slot is active when sigmoid(presence_logit) clears the threshold.

#include <vector>

#include "sfield/geometry.hpp"

namespace sfield {

constexpr double kPresenceThreshold = 0.5;

struct LayoutSlot {
  Vec3 center;
  Vec3 log_scale;
  double presence_logit = 0.0;

  Vec3 scale() const {
    return {std::exp(log_scale.x), std::exp(log_scale.y),
            std::exp(log_scale.z)};
  }
  AABB box() const {
    const Vec3 s = scale();
    return {center - s, center + s};
  }
  bool active(double threshold = kPresenceThreshold) const {
    const double p = 1.0 / (1.0 + std::exp(-presence_logit));
    return p > threshold;
  }
};

struct LayoutSlots {
  std::vector<LayoutSlot> slots;

  int capacity() const { return static_cast<int>(slots.size()); }
  std::vector<int> active_indices(double threshold = kPresenceThreshold) const {
    std::vector<int> idx;
    for (int i = 0; i < capacity(); ++i)
      if (slots[i].active(threshold)) idx.push_back(i);
    return idx;
  }
};

}  // namespace sfield
