#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "chronotoken/data.hpp"
#include "chronotoken/log.hpp"
#include "chronotoken/mathutil.hpp"

namespace chronotoken {

// Pos-weighted binary cross-entropy on logits for one task, in the
// softplus form that stays finite for any |x|:
//   pw * y * softplus(-x) + (1 - y) * softplus(x)
// With pw == 1 this is exactly the unweighted BCE formula path.
inline double bce_logit_term(double x, double y, double pos_weight) {
  return pos_weight * y * stable_softplus(-x) + (1.0 - y) * stable_softplus(x);
}

inline double bce_logit_grad(double x, double y, double pos_weight) {
  double s = stable_sigmoid(x);
  return pos_weight * y * (s - 1.0) + (1.0 - y) * s;
}

// Sum over tasks of the per-task weighted BCE. Batch averaging is the
// trainer's job.
inline double bce_logits_loss(const std::vector<double>& logits,
                              const std::vector<int>& labels,
                              const std::vector<double>& pos_weight) {
  if (logits.size() != labels.size() || logits.size() != pos_weight.size()) {
    throw std::invalid_argument("bce_logits_loss: size mismatch");
  }
  double loss = 0.0;
  for (size_t k = 0; k < logits.size(); ++k) {
    if (!(pos_weight[k] > 0.0) || !std::isfinite(pos_weight[k])) {
      throw std::invalid_argument("bce_logits_loss: pos_weight must be finite positive");
    }
    loss += bce_logit_term(logits[k], static_cast<double>(labels[k]), pos_weight[k]);
  }
  return loss;
}

// n_negative / n_positive per task over the training labels. Tasks with no
// positives fall back to weight 1 with a warning.
inline std::vector<double> compute_pos_weights(
    const std::vector<std::vector<int>>& label_rows) {
  std::vector<long long> pos(kNumTasks, 0);
  long long n = static_cast<long long>(label_rows.size());
  for (const auto& row : label_rows) {
    for (int k = 0; k < kNumTasks; ++k) pos[k] += row[k];
  }
  std::vector<double> pw(kNumTasks, 1.0);
  for (int k = 0; k < kNumTasks; ++k) {
    if (pos[k] == 0 || pos[k] == n) {
      log_warn("task " + std::to_string(k) +
               ": single-class training labels, pos_weight left at 1");
      continue;
    }
    pw[k] = static_cast<double>(n - pos[k]) / static_cast<double>(pos[k]);
  }
  return pw;
}

}  // namespace chronotoken
