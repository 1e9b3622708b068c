#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "chronotoken/data.hpp"

namespace chronotoken {

// Mann-Whitney AUROC: (wins + 0.5 * ties) / (n_pos * n_neg) over all
// positive-negative pairs. Counting is done over sorted tie groups so the
// result is exactly the pair-count statistic. Returns nullopt when only one
// class is present.
inline std::optional<double> auroc(const std::vector<double>& scores,
                                   const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("auroc: scores/labels size mismatch");
  }
  long long n_pos = 0, n_neg = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (!std::isfinite(scores[i])) {
      throw std::invalid_argument("auroc: non-finite score");
    }
    if (labels[i] == 1) {
      ++n_pos;
    } else if (labels[i] == 0) {
      ++n_neg;
    } else {
      throw std::invalid_argument("auroc: labels must be 0/1");
    }
  }
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  std::vector<size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::sort(idx.begin(), idx.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  double wins = 0.0, ties = 0.0;
  long long neg_below = 0;
  size_t i = 0;
  while (i < idx.size()) {
    size_t j = i;
    long long group_pos = 0, group_neg = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      if (labels[idx[j]] == 1)
        ++group_pos;
      else
        ++group_neg;
      ++j;
    }
    wins += static_cast<double>(group_pos) * static_cast<double>(neg_below);
    ties += static_cast<double>(group_pos) * static_cast<double>(group_neg);
    neg_below += group_neg;
    i = j;
  }
  return (wins + 0.5 * ties) /
         (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Per-task AUROC plus the mean over tasks where it is defined. Undefined
// tasks (single-class labels) are excluded from the mean with a warning
// rather than silently counted as 0.5.
struct Metrics {
  std::vector<std::optional<double>> per_task;
  std::optional<double> mean;
  std::vector<std::string> warnings;

  static Metrics from_scores(const std::vector<std::vector<double>>& scores,
                             const std::vector<std::vector<int>>& labels) {
    Metrics m;
    m.per_task.resize(scores.size());
    double sum = 0.0;
    int defined = 0;
    for (size_t k = 0; k < scores.size(); ++k) {
      m.per_task[k] = auroc(scores[k], labels[k]);
      if (m.per_task[k].has_value()) {
        sum += *m.per_task[k];
        ++defined;
      } else {
        m.warnings.push_back("task " + std::to_string(k) +
                             ": AUROC undefined (single-class labels), excluded from mean");
      }
    }
    if (defined > 0) m.mean = sum / defined;
    return m;
  }
};

inline nlohmann::json metrics_to_json(const Metrics& m) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& v : m.per_task) {
    if (v.has_value())
      per.push_back(*v);
    else
      per.push_back(nullptr);
  }
  nlohmann::json j{{"auroc_per_task", per}};
  if (m.mean.has_value())
    j["mean_auroc"] = *m.mean;
  else
    j["mean_auroc"] = nullptr;
  if (!m.warnings.empty()) j["warnings"] = m.warnings;
  return j;
}

// Aligned-column rendering, one row per task plus the mean.
inline std::string metrics_to_table(const Metrics& m) {
  char buf[64];
  std::string out = "task      auroc\n";
  for (size_t k = 0; k < m.per_task.size(); ++k) {
    if (m.per_task[k].has_value()) {
      std::snprintf(buf, sizeof(buf), "task%-2zu   %7.4f\n", k, *m.per_task[k]);
    } else {
      std::snprintf(buf, sizeof(buf), "task%-2zu   %7s\n", k, "undef");
    }
    out += buf;
  }
  if (m.mean.has_value()) {
    std::snprintf(buf, sizeof(buf), "mean     %7.4f\n", *m.mean);
  } else {
    std::snprintf(buf, sizeof(buf), "mean     %7s\n", "undef");
  }
  out += buf;
  return out;
}

inline std::string metrics_to_line(const Metrics& m) {
  char buf[64];
  std::string out = "mean=";
  if (m.mean.has_value()) {
    std::snprintf(buf, sizeof(buf), "%.4f", *m.mean);
    out += buf;
  } else {
    out += "undef";
  }
  out += " per-task=[";
  for (size_t k = 0; k < m.per_task.size(); ++k) {
    if (k) out += " ";
    if (m.per_task[k].has_value()) {
      std::snprintf(buf, sizeof(buf), "%.4f", *m.per_task[k]);
      out += buf;
    } else {
      out += "undef";
    }
  }
  out += "]";
  return out;
}

}  // namespace chronotoken
