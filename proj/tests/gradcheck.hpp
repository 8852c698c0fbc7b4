#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "fcd/nn/param.hpp"
#include "fcd/rng.hpp"

namespace fcd::testing {

// Central-difference gradient check, independent of the backward path it
// validates. `loss_fn()` must evaluate the loss from the current parameter
// values; `grad_fn()` must return the analytic loss with gradients
// accumulated into the params. Returns the worst relative error over
// `probes` randomly chosen parameters.
template <typename S, typename LossFn, typename GradFn>
double max_rel_grad_error(std::vector<nn::Param<S>*>& params, LossFn&& loss_fn, GradFn&& grad_fn,
                          int probes, uint64_t seed, double h = 1e-5) {
  nn::zero_grads(params);
  grad_fn();

  struct Slot {
    nn::Param<S>* p;
    size_t j;
  };
  std::vector<Slot> slots;
  for (auto* p : params)
    for (size_t j = 0; j < p->size(); ++j) slots.push_back({p, j});

  Rng rng(seed);
  double worst = 0.0;
  for (int probe = 0; probe < probes; ++probe) {
    const Slot& s = slots[rng.uniform_index(slots.size())];
    double analytic = static_cast<double>(s.p->grad[s.j]);
    S saved = s.p->value[s.j];
    s.p->value[s.j] = saved + static_cast<S>(h);
    double lp = loss_fn();
    s.p->value[s.j] = saved - static_cast<S>(h);
    double lm = loss_fn();
    s.p->value[s.j] = saved;
    double numeric = (lp - lm) / (2.0 * h);
    double denom = std::max({1e-6, std::abs(analytic), std::abs(numeric)});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  }
  return worst;
}

}  // namespace fcd::testing
