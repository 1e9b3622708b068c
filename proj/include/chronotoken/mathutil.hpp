#pragma once

#include <cmath>

namespace chronotoken {

// log(1 + exp(x)) without overflow for large |x|.
template <typename T>
inline T stable_softplus(T x) {
  T m = x > T(0) ? x : T(0);
  return m + std::log1p(std::exp(-std::abs(x)));
}

// Logistic sigmoid; saturates to exact 0/1 at extreme arguments instead of
// producing NaN through inf/inf.
template <typename T>
inline T stable_sigmoid(T x) {
  if (x >= T(0)) {
    return T(1) / (T(1) + std::exp(-x));
  }
  T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
inline T gelu_value(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(0.70710678118654752440)));
}

template <typename T>
inline T gelu_derivative(T x) {
  T cdf = T(0.5) * (T(1) + std::erf(x * T(0.70710678118654752440)));
  T pdf = std::exp(T(-0.5) * x * x) * T(0.39894228040143267794);
  return cdf + x * pdf;
}

}  // namespace chronotoken
