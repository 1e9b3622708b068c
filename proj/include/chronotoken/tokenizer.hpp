#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "chronotoken/data.hpp"
#include "chronotoken/log.hpp"

namespace chronotoken {

// Variable vocabulary; ids are dense in [0, size).
struct Vocab {
  std::vector<std::string> names;

  int size() const { return static_cast<int>(names.size()); }

  // The fourteen intraoperative vital-sign channels; extra variables get
  // numbered names.
  static Vocab vitals(int n) {
    static const char* kVitals[] = {
        "sbp",  "dbp",  "map",  "heart_rate", "resp_rate",   "o2_flow",
        "fio2", "spo2", "etco2", "mac",       "peep",        "pip",
        "tidal_volume", "body_temp"};
    Vocab v;
    for (int i = 0; i < n; ++i) {
      if (i < 14) {
        v.names.push_back(kVitals[i]);
      } else {
        v.names.push_back("var_" + std::to_string(i));
      }
    }
    return v;
  }
};

struct MeanStd {
  double mean = 0.0;
  double std = 1.0;
};

// Per-variable and timestamp normalization statistics, fitted on the
// training split only. Population standard deviation (divide by n).
struct NormStats {
  std::vector<MeanStd> per_variable;
  MeanStd time;
  std::vector<std::string> warnings;

  int n_variables() const { return static_cast<int>(per_variable.size()); }
};

// The tokenized event stream: four parallel arrays. Positions are dense
// ranks of the event timestamps, so co-timed events share an index.
struct TokenSequence {
  std::vector<int> variable_ids;
  std::vector<double> values;     // z-scored per variable
  std::vector<double> times;      // z-scored timestamps
  std::vector<int> positions;     // non-unique, start at 0, dense

  int length() const { return static_cast<int>(variable_ids.size()); }
};

constexpr double kNormEpsilon = 1e-8;
constexpr int kDefaultMaxLen = 4096;

inline NormStats fit_norm_stats(const std::vector<EncounterRecord>& train,
                                int n_variables) {
  NormStats stats;
  stats.per_variable.assign(n_variables, MeanStd{});
  std::vector<double> sum(n_variables, 0.0), sumsq(n_variables, 0.0);
  std::vector<long long> count(n_variables, 0);
  double tsum = 0.0, tsumsq = 0.0;
  long long tcount = 0;
  for (const auto& rec : train) {
    for (const Event& e : rec.events) {
      if (e.variable_id >= 0 && e.variable_id < n_variables) {
        sum[e.variable_id] += e.value;
        sumsq[e.variable_id] += e.value * e.value;
        ++count[e.variable_id];
      }
      tsum += e.timestamp;
      tsumsq += e.timestamp * e.timestamp;
      ++tcount;
    }
  }
  for (int v = 0; v < n_variables; ++v) {
    if (count[v] == 0) {
      stats.per_variable[v] = {0.0, 1.0};
      std::string w = "variable " + std::to_string(v) +
                      " absent from training split; stats default to (0,1)";
      stats.warnings.push_back(w);
      log_warn(w);
      continue;
    }
    double mean = sum[v] / static_cast<double>(count[v]);
    double var = sumsq[v] / static_cast<double>(count[v]) - mean * mean;
    stats.per_variable[v] = {mean, std::sqrt(std::max(var, 0.0))};
  }
  if (tcount > 0) {
    double mean = tsum / static_cast<double>(tcount);
    double var = tsumsq / static_cast<double>(tcount) - mean * mean;
    stats.time = {mean, std::sqrt(std::max(var, 0.0))};
  } else {
    stats.time = {0.0, 1.0};
    stats.warnings.push_back("no events in training split; time stats default to (0,1)");
  }
  return stats;
}

// Dense rank of each timestamp among the distinct values present. Equal
// timestamps share a rank; ranks start at 0 and are contiguous.
inline std::vector<int> assign_positions(const std::vector<double>& timestamps) {
  for (double t : timestamps) {
    if (std::isnan(t)) throw std::invalid_argument("assign_positions: NaN timestamp");
  }
  std::vector<double> distinct(timestamps);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<int> out(timestamps.size());
  for (size_t i = 0; i < timestamps.size(); ++i) {
    out[i] = static_cast<int>(
        std::lower_bound(distinct.begin(), distinct.end(), timestamps[i]) -
        distinct.begin());
  }
  return out;
}

// Events sorted by (timestamp, variable_id), values and times z-scored,
// positions dense-ranked. Sequences longer than max_len keep the most
// recent tokens and are re-ranked so positions still start at 0.
inline TokenSequence tokenize(const EncounterRecord& record,
                              const NormStats& stats,
                              int max_len = kDefaultMaxLen) {
  std::vector<const Event*> order;
  order.reserve(record.events.size());
  for (const Event& e : record.events) {
    if (e.variable_id < 0 || e.variable_id >= stats.n_variables()) {
      throw std::invalid_argument("tokenize: unknown variable_id " +
                                  std::to_string(e.variable_id));
    }
    if (std::isnan(e.timestamp)) {
      throw std::invalid_argument("tokenize: NaN timestamp");
    }
    order.push_back(&e);
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const Event* a, const Event* b) {
                     if (a->timestamp != b->timestamp)
                       return a->timestamp < b->timestamp;
                     return a->variable_id < b->variable_id;
                   });
  if (static_cast<int>(order.size()) > max_len) {
    order.erase(order.begin(), order.end() - max_len);
  }

  TokenSequence seq;
  const int n = static_cast<int>(order.size());
  seq.variable_ids.resize(n);
  seq.values.resize(n);
  seq.times.resize(n);
  std::vector<double> raw_times(n);
  for (int i = 0; i < n; ++i) {
    const Event& e = *order[i];
    const MeanStd& vs = stats.per_variable[e.variable_id];
    seq.variable_ids[i] = e.variable_id;
    seq.values[i] = (e.value - vs.mean) / std::max(vs.std, kNormEpsilon);
    seq.times[i] =
        (e.timestamp - stats.time.mean) / std::max(stats.time.std, kNormEpsilon);
    raw_times[i] = e.timestamp;
  }
  seq.positions = assign_positions(raw_times);
  return seq;
}

}  // namespace chronotoken
