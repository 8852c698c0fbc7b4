#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "fcd/common.hpp"

namespace fcd::nn {

template <typename S>
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<S> value;
  std::vector<S> grad;

  void resize(std::string n, std::vector<int> sh) {
    name = std::move(n);
    shape = std::move(sh);
    size_t count = 1;
    for (int d : shape) count *= static_cast<size_t>(d);
    value.assign(count, S(0));
    grad.assign(count, S(0));
  }
  size_t size() const { return value.size(); }
};

template <typename S>
void zero_grads(const std::vector<Param<S>*>& params) {
  for (auto* p : params) std::fill(p->grad.begin(), p->grad.end(), S(0));
}

template <typename S>
size_t total_param_count(const std::vector<Param<S>*>& params) {
  size_t n = 0;
  for (auto* p : params) n += p->size();
  return n;
}

// Adds the gradients of `src` into `dst` (same network replicated across
// workers). Order is fixed by the param list, so the reduction is
// reproducible.
template <typename S>
void accumulate_grads(const std::vector<Param<S>*>& dst, const std::vector<Param<S>*>& src) {
  check(dst.size() == src.size(), "accumulate_grads: param list mismatch");
  for (size_t i = 0; i < dst.size(); ++i) {
    check(dst[i]->size() == src[i]->size(), "accumulate_grads: shape mismatch at " + dst[i]->name);
    for (size_t j = 0; j < dst[i]->size(); ++j) dst[i]->grad[j] += src[i]->grad[j];
  }
}

// Copies values from master params into a replica.
template <typename S>
void copy_values(const std::vector<Param<S>*>& dst, const std::vector<Param<S>*>& src) {
  check(dst.size() == src.size(), "copy_values: param list mismatch");
  for (size_t i = 0; i < dst.size(); ++i) dst[i]->value = src[i]->value;
}

// Adam with bias correction. Moment accumulators are kept in double so the
// update path is identical for float and double networks.
template <typename S>
class Adam {
 public:
  Adam(double beta1 = 0.5, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Param<S>*>& params, double lr) {
    size_t n = total_param_count(params);
    if (m_.size() != n) {
      m_.assign(n, 0.0);
      v_.assign(n, 0.0);
      t_ = 0;
    }
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    size_t off = 0;
    for (auto* p : params) {
      for (size_t j = 0; j < p->size(); ++j, ++off) {
        double g = static_cast<double>(p->grad[j]);
        m_[off] = beta1_ * m_[off] + (1.0 - beta1_) * g;
        v_[off] = beta2_ * v_[off] + (1.0 - beta2_) * g * g;
        double mhat = m_[off] / bc1;
        double vhat = v_[off] / bc2;
        p->value[j] = static_cast<S>(static_cast<double>(p->value[j]) - lr * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  int64_t steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<double> m_, v_;
};

// Stage learning-rate rule: halved every `halve_every` epochs (1-based).
inline double lr_for_epoch(double initial, int epoch, int halve_every = 10) {
  int halvings = (epoch - 1) / halve_every;
  return initial * std::pow(0.5, halvings);
}

}  // namespace fcd::nn
