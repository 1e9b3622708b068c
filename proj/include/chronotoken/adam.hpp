#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "chronotoken/params.hpp"

namespace chronotoken {

// Adam with coupled-L2 weight decay: the decay term is added to the
// gradient before the moment updates, matching the classic formulation.
template <typename T>
struct AdamState {
  ParamStore<T> m;
  ParamStore<T> v;
  long long t = 0;

  static AdamState like(const ParamStore<T>& params) {
    return AdamState{params.zeros_like(), params.zeros_like(), 0};
  }
};

template <typename T>
void adam_step(ParamStore<T>& params, const ParamStore<T>& grads, AdamState<T>& state,
               double lr, double weight_decay, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8) {
  ++state.t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < params.count(); ++i) {
    Mat<T>& p = params.tensor(i);
    const Mat<T>& g = grads.tensor(i);
    Mat<T>& m = state.m.tensor(i);
    Mat<T>& v = state.v.tensor(i);
    for (size_t j = 0; j < p.size(); ++j) {
      double gj = static_cast<double>(g.a[j]);
      if (!std::isfinite(gj)) {
        throw std::runtime_error("adam_step: non-finite gradient in tensor " +
                                 params.names()[i]);
      }
      gj += weight_decay * static_cast<double>(p.a[j]);
      double mj = beta1 * static_cast<double>(m.a[j]) + (1.0 - beta1) * gj;
      double vj = beta2 * static_cast<double>(v.a[j]) + (1.0 - beta2) * gj * gj;
      m.a[j] = static_cast<T>(mj);
      v.a[j] = static_cast<T>(vj);
      double mhat = mj / bc1;
      double vhat = vj / bc2;
      p.a[j] = static_cast<T>(static_cast<double>(p.a[j]) -
                              lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
}

}  // namespace chronotoken
