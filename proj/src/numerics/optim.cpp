#include "sfield/optim.hpp"

#include <cmath>

#include "sfield/kernels.hpp"

namespace sfield {

int ParameterStore::add(const std::string& name, Tensor init) {
  require(index_.find(name) == index_.end(), "duplicate parameter ", name);
  Param p;
  p.name = name;
  p.m = Tensor(init.shape());
  p.v = Tensor(init.shape());
  p.value = std::move(init);
  params_.push_back(std::move(p));
  const int idx = static_cast<int>(params_.size()) - 1;
  index_[name] = idx;
  return idx;
}

int ParameterStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

std::int64_t ParameterStore::total_size() const {
  std::int64_t n = 0;
  for (const Param& p : params_) n += p.value.size();
  return n;
}

void AdamW::step(ParameterStore& params, const std::vector<Tensor>& grads) {
  require(static_cast<int>(grads.size()) == params.count(),
          "adamw: expected ", params.count(), " gradients, got ",
          grads.size());
  ++step_;
  const double inv_bc1 = 1.0 / (1.0 - std::pow(cfg_.beta1, step_));
  const double inv_bc2 = 1.0 / (1.0 - std::pow(cfg_.beta2, step_));
  for (int i = 0; i < params.count(); ++i) {
    Param& p = params[i];
    require(grads[i].same_shape(p.value), "adamw: gradient shape ",
            shape_str(grads[i].shape()), " does not match parameter ",
            p.name, " ", shape_str(p.value.shape()));
    kernels::active().adamw(p.value.data(), p.m.data(), p.v.data(),
                            grads[i].data(), p.value.size(), cfg_.lr,
                            cfg_.beta1, cfg_.beta2, cfg_.eps,
                            cfg_.weight_decay, inv_bc1, inv_bc2);
  }
}

}  // namespace sfield
