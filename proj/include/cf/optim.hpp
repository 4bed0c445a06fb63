#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "cf/model.hpp"

namespace cf {

struct OptimHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("optimizer lr must be > 0");
    if (beta1 < 0.0 || beta1 >= 1.0) throw ConfigError("optimizer beta1 must be in [0, 1)");
    if (beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("optimizer beta2 must be in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("optimizer eps must be > 0");
    if (weight_decay < 0.0) throw ConfigError("optimizer weight_decay must be >= 0");
  }
};

// Adam with bias correction and *decoupled* weight decay: the decay term
// multiplies the parameter directly and never enters the moment estimates.
// Each instance owns its own step counter; moments live in the ParamStates.
class AdamW {
 public:
  explicit AdamW(OptimHyper hyper) : hyper_(hyper) { hyper_.validate(); }

  void step(const std::vector<ParamState*>& group) {
    ++t_;
    const double bc1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(t_));
    for (ParamState* p : group) {
      if (!p->grad.defined()) {
        throw ContractError("gradients not populated for " + p->name);
      }
      if (!p->m.defined()) p->m = Tensor::zeros(p->value.shape);
      if (!p->v.defined()) p->v = Tensor::zeros(p->value.shape);
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        const double g = p->grad.data[i];
        p->m.data[i] = hyper_.beta1 * p->m.data[i] + (1.0 - hyper_.beta1) * g;
        p->v.data[i] = hyper_.beta2 * p->v.data[i] + (1.0 - hyper_.beta2) * g * g;
        const double mhat = p->m.data[i] / bc1;
        const double vhat = p->v.data[i] / bc2;
        p->value.data[i] -= hyper_.lr * mhat / (std::sqrt(vhat) + hyper_.eps) +
                            hyper_.lr * hyper_.weight_decay * p->value.data[i];
      }
    }
  }

  std::size_t step_count() const { return t_; }
  const OptimHyper& hyper() const { return hyper_; }

 private:
  OptimHyper hyper_;
  std::size_t t_ = 0;
};

}  // namespace cf
