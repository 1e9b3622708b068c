#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "chronotoken/rng.hpp"

namespace chronotoken {

// Compares analytic gradients against central finite differences on a
// random subset of coordinates. Relative error uses the symmetric
// denominator max(|analytic|, |numeric|, 1e-8). Everything runs in f64;
// finite differences are meaningless at f32.
struct GradCheckResult {
  double max_rel_err = 0.0;
  int worst_coord = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  int checked = 0;
};

inline GradCheckResult grad_check(
    const std::function<double(const std::vector<double>&)>& loss_fn,
    const std::function<std::vector<double>(const std::vector<double>&)>& grad_fn,
    const std::vector<double>& at, int n_coords, double step = 1e-5,
    uint64_t seed = 0) {
  double base = loss_fn(at);
  if (!std::isfinite(base)) {
    throw std::runtime_error("grad_check: non-finite loss at base point");
  }
  std::vector<double> analytic = grad_fn(at);
  if (analytic.size() != at.size()) {
    throw std::runtime_error("grad_check: gradient size mismatch");
  }

  std::vector<size_t> coords(at.size());
  std::iota(coords.begin(), coords.end(), size_t{0});
  if (n_coords < static_cast<int>(at.size())) {
    Rng rng(Rng::hash64(seed ^ 0x6c62272e));
    rng.shuffle(coords);
    coords.resize(n_coords);
  }

  GradCheckResult result;
  std::vector<double> p = at;
  for (size_t c : coords) {
    double keep = p[c];
    p[c] = keep + step;
    double up = loss_fn(p);
    p[c] = keep - step;
    double down = loss_fn(p);
    p[c] = keep;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw std::runtime_error("grad_check: non-finite loss during probing");
    }
    double numeric = (up - down) / (2.0 * step);
    double denom = std::max({std::abs(analytic[c]), std::abs(numeric), 1e-8});
    double rel = std::abs(analytic[c] - numeric) / denom;
    if (rel > result.max_rel_err) {
      result.max_rel_err = rel;
      result.worst_coord = static_cast<int>(c);
      result.worst_analytic = analytic[c];
      result.worst_numeric = numeric;
    }
    ++result.checked;
  }
  return result;
}

}  // namespace chronotoken
