#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "sfield/tensor.hpp"

namespace sfield {

// Named parameter with its optimizer accumulators. Accumulators always
// share the parameter's shape.
struct Param {
  std::string name;
  Tensor value;
  Tensor m;  // first moment
  Tensor v;  // second moment
};

// Insertion-ordered parameter set; iteration order is the registration
// order, which keeps gradient merging and checkpoints deterministic.
class ParameterStore {
 public:
  int add(const std::string& name, Tensor init);
  int find(const std::string& name) const;  // -1 when absent

  Param& operator[](int i) { return params_[i]; }
  const Param& operator[](int i) const { return params_[i]; }
  int count() const { return static_cast<int>(params_.size()); }

  std::int64_t total_size() const;

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, int> index_;
};

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  // One decoupled-weight-decay update over every parameter. grads must be
  // index-aligned with the store.
  void step(ParameterStore& params, const std::vector<Tensor>& grads);

  long step_count() const { return step_; }
  void set_step_count(long t) { step_ = t; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  long step_ = 0;
};

}  // namespace sfield
