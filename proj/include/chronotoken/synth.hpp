#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "chronotoken/data.hpp"
#include "chronotoken/dataset.hpp"
#include "chronotoken/mathutil.hpp"
#include "chronotoken/metrics.hpp"
#include "chronotoken/rng.hpp"
#include "chronotoken/tokenizer.hpp"

namespace chronotoken {

// Configuration for the seeded synthetic cohort. Each of the nine tasks has
// three planted signal components: one carried by variable k's values, one
// by variable k's inter-event gaps, and one by the note embeddings.
// note_value_interaction blends the note term from purely linear (0) to a
// pure note x value product (1), which only a fused model can represent.
struct SynthConfig {
  uint64_t seed = 1;
  int n_encounters = 1000;
  int n_variables = 14;
  std::vector<double> rates;  // mean inter-sample interval per variable, seconds
  double dup_cluster_prob = 0.2;
  std::vector<double> prevalence = std::vector<double>(kNumTasks, 0.15);
  std::vector<double> value_signal = std::vector<double>(kNumTasks, 0.0);
  std::vector<double> gap_signal = std::vector<double>(kNumTasks, 0.0);
  std::vector<double> note_signal = std::vector<double>(kNumTasks, 0.0);
  double note_value_interaction = 0.0;  // in [0,1]
  int d_note = 16;

  // Cohort-shape knobs.
  int n_static = 8;
  double duration_target = 14400.0;      // horizon used to size per-variable counts
  int max_events_per_variable = 64;
  double global_dilation_sigma = 0.5;    // lognormal sigma of the encounter clock
  double var_gap_sigma = 0.25;           // lognormal sigma of per-variable gaps
  double value_coupling = 0.7;           // fraction of value variance from the latent
  double note_absent_prob = 0.1;
  int max_note_chunks = 4;
  double train_frac = 0.70;
  double val_frac = 0.15;

  std::vector<double> effective_rates() const {
    if (!rates.empty()) return rates;
    static const double kPattern[] = {60,  90,   120,  180,  240,  300,  420,
                                      600, 900,  1200, 1800, 2400, 3600, 7200};
    std::vector<double> r(n_variables);
    for (int v = 0; v < n_variables; ++v) r[v] = kPattern[v % 14];
    return r;
  }
};

inline void validate_synth_config(const SynthConfig& cfg) {
  if (cfg.n_encounters <= 0) {
    throw std::invalid_argument("n_encounters must be positive");
  }
  if (cfg.n_variables <= 0) {
    throw std::invalid_argument("n_variables must be positive");
  }
  if (static_cast<int>(cfg.prevalence.size()) != kNumTasks) {
    throw std::invalid_argument("prevalence: expected " + std::to_string(kNumTasks) +
                                " values");
  }
  for (int k = 0; k < kNumTasks; ++k) {
    if (!(cfg.prevalence[k] > 0.0 && cfg.prevalence[k] < 1.0)) {
      throw std::invalid_argument("prevalence[" + std::to_string(k) +
                                  "] out of (0,1)");
    }
  }
  for (const auto* sig : {&cfg.value_signal, &cfg.gap_signal, &cfg.note_signal}) {
    if (static_cast<int>(sig->size()) != kNumTasks) {
      throw std::invalid_argument("signal strengths: expected " +
                                  std::to_string(kNumTasks) + " values per component");
    }
  }
  if (cfg.note_value_interaction < 0.0 || cfg.note_value_interaction > 1.0) {
    throw std::invalid_argument("note_value_interaction out of [0,1]");
  }
  if (!(cfg.dup_cluster_prob >= 0.0 && cfg.dup_cluster_prob <= 1.0)) {
    throw std::invalid_argument("dup_cluster_prob out of [0,1]");
  }
  auto rates = cfg.effective_rates();
  if (static_cast<int>(rates.size()) != cfg.n_variables) {
    throw std::invalid_argument("rates: expected one per variable");
  }
  for (size_t v = 0; v < rates.size(); ++v) {
    if (!(rates[v] > 0.0)) {
      throw std::invalid_argument("rates[" + std::to_string(v) + "] must be positive");
    }
  }
  if (cfg.d_note <= 0) throw std::invalid_argument("d_note must be positive");
  if (cfg.train_frac <= 0.0 || cfg.val_frac < 0.0 ||
      cfg.train_frac + cfg.val_frac >= 1.0) {
    throw std::invalid_argument("train_frac/val_frac must leave room for a test split");
  }
}

namespace synth_detail {

constexpr uint64_t kStreamCalibration = 0xCA11;
constexpr uint64_t kStreamData = 0xDA7A;
constexpr uint64_t kStreamSplit = 0x5911;
constexpr uint64_t kStreamOracle = 0x0AC1;
constexpr uint64_t kStreamNoteDir = 0x0D12;
constexpr double kEpochBase = 1.6e9;

// Summary statistics the ground-truth label model is a function of.
struct RawStats {
  std::array<double, kNumTasks> value_stat{};
  std::array<double, kNumTasks> gap_stat{};
  double note_stat = 0.0;
};

// Calibrated ground truth: standardization constants for the raw stats and
// the per-task intercepts that hit the configured prevalence. A pure
// function of the config, shared by the generator and the Bayes oracle.
struct SynthModel {
  std::array<double, kNumTasks> value_mu{}, value_sd{};
  std::array<double, kNumTasks> gap_mu{}, gap_sd{};
  double note_mu = 0.0, note_sd = 1.0;
  std::array<double, kNumTasks> intercept{};
  std::vector<double> note_dir;
};

inline double variable_value_mean(int v) { return 50.0 + 7.0 * v; }
inline double variable_value_sd(int v) { return 5.0 + 0.5 * v; }

inline int task_variable(const SynthConfig& cfg, int task) {
  return task % cfg.n_variables;
}

// Draws one encounter. Event counts per variable are fixed by the config so
// that the gap signal lives in the timestamps alone; the encounter-level
// clock dilation then scales every gap without touching token counts or
// ranks. Values share a per-encounter latent per variable.
inline EncounterRecord draw_encounter(const SynthConfig& cfg, Rng& rng,
                                      const std::vector<double>& note_dir,
                                      RawStats* stats_out) {
  const auto rates = cfg.effective_rates();
  const int V = cfg.n_variables;
  EncounterRecord rec;

  const double dilation = std::exp(cfg.global_dilation_sigma * rng.normal());
  const double t0 = kEpochBase + rng.uniform(0.0, cfg.duration_target);
  const double rho = cfg.value_coupling;

  std::vector<std::vector<double>> times(V);
  std::vector<std::vector<double>> values(V);
  for (int v = 0; v < V; ++v) {
    int n_v = static_cast<int>(std::lround(cfg.duration_target / rates[v]));
    n_v = std::clamp(n_v, 2, cfg.max_events_per_variable);
    const double gap_mult = std::exp(cfg.var_gap_sigma * rng.normal());
    const double mean_gap = rates[v] * dilation * gap_mult;
    const double latent = rng.normal();
    double t = t0;
    times[v].resize(n_v);
    values[v].resize(n_v);
    for (int j = 0; j < n_v; ++j) {
      t += rng.exponential(mean_gap);
      times[v][j] = t;
      values[v][j] = variable_value_mean(v) +
                     variable_value_sd(v) * (std::sqrt(rho) * latent +
                                             std::sqrt(1.0 - rho) * rng.normal());
    }
  }

  // Duplicate-timestamp injection: an event snaps onto the previous
  // variable's matching sample, so chains of variables end up sharing one
  // timestamp like a bedside monitor writing several channels at once.
  for (int v = 1; v < V; ++v) {
    const auto& prev = times[v - 1];
    for (size_t j = 0; j < times[v].size(); ++j) {
      if (rng.bernoulli(cfg.dup_cluster_prob)) {
        size_t src = std::min(j, prev.size() - 1);
        times[v][j] = prev[src];
      }
    }
  }

  for (int v = 0; v < V; ++v) {
    for (size_t j = 0; j < times[v].size(); ++j) {
      rec.events.push_back(Event{v, values[v][j], times[v][j]});
    }
  }
  std::stable_sort(rec.events.begin(), rec.events.end(),
                   [](const Event& a, const Event& b) {
                     if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
                     return a.variable_id < b.variable_id;
                   });

  rec.static_features.resize(cfg.n_static);
  for (int s = 0; s < cfg.n_static; ++s) rec.static_features[s] = rng.normal();

  double note_severity = rng.normal();
  bool has_notes = !rng.bernoulli(cfg.note_absent_prob);
  if (has_notes) {
    int m = 1 + rng.uniform_int(std::max(1, cfg.max_note_chunks));
    rec.note_embeddings.resize(m);
    for (int c = 0; c < m; ++c) {
      rec.note_embeddings[c].resize(cfg.d_note);
      for (int d = 0; d < cfg.d_note; ++d) {
        rec.note_embeddings[c][d] =
            note_severity * note_dir[d] + 0.5 * rng.normal();
      }
    }
  }

  if (stats_out != nullptr) {
    for (int k = 0; k < kNumTasks; ++k) {
      int v = task_variable(cfg, k);
      std::vector<double> ts = times[v];
      std::sort(ts.begin(), ts.end());
      double mean_gap = (ts.back() - ts.front()) / static_cast<double>(ts.size() - 1);
      stats_out->gap_stat[k] = std::log(std::max(mean_gap, 1e-6));
      stats_out->value_stat[k] =
          std::accumulate(values[v].begin(), values[v].end(), 0.0) /
          static_cast<double>(values[v].size());
    }
    double dot = 0.0;
    if (!rec.note_embeddings.empty()) {
      for (int d = 0; d < cfg.d_note; ++d) {
        double mean_d = 0.0;
        for (const auto& chunk : rec.note_embeddings) mean_d += chunk[d];
        mean_d /= static_cast<double>(rec.note_embeddings.size());
        dot += note_dir[d] * mean_d;
      }
    }
    stats_out->note_stat = dot;
  }
  return rec;
}

inline std::vector<double> make_note_direction(const SynthConfig& cfg) {
  Rng rng(Rng::mix(cfg.seed, kStreamNoteDir, 0));
  std::vector<double> dir(cfg.d_note);
  double norm = 0.0;
  for (int d = 0; d < cfg.d_note; ++d) {
    dir[d] = rng.normal();
    norm += dir[d] * dir[d];
  }
  norm = std::sqrt(std::max(norm, 1e-12));
  for (double& x : dir) x /= norm;
  return dir;
}

inline std::array<double, kNumTasks> true_logits(const SynthConfig& cfg,
                                                 const SynthModel& model,
                                                 const RawStats& raw) {
  std::array<double, kNumTasks> out{};
  const double gamma = cfg.note_value_interaction;
  const double ns = (raw.note_stat - model.note_mu) / model.note_sd;
  for (int k = 0; k < kNumTasks; ++k) {
    const double vs = (raw.value_stat[k] - model.value_mu[k]) / model.value_sd[k];
    const double gs = (raw.gap_stat[k] - model.gap_mu[k]) / model.gap_sd[k];
    out[k] = cfg.value_signal[k] * vs + cfg.gap_signal[k] * gs +
             cfg.note_signal[k] * ns * ((1.0 - gamma) + gamma * vs) +
             model.intercept[k];
  }
  return out;
}

constexpr int kCalibrationSamples = 20000;

// Standardizes the raw stats over a calibration sample and solves each
// intercept by bisection so the label marginals match the configured
// prevalence.
inline SynthModel calibrate(const SynthConfig& cfg) {
  SynthModel model;
  model.note_dir = make_note_direction(cfg);

  std::vector<RawStats> sample(kCalibrationSamples);
  for (int i = 0; i < kCalibrationSamples; ++i) {
    Rng rng(Rng::mix(cfg.seed, kStreamCalibration, static_cast<uint64_t>(i)));
    (void)draw_encounter(cfg, rng, model.note_dir, &sample[i]);
  }

  auto mean_sd = [&](auto getter, double& mu, double& sd) {
    double s = 0.0, s2 = 0.0;
    for (const auto& r : sample) {
      double x = getter(r);
      s += x;
      s2 += x * x;
    }
    mu = s / sample.size();
    sd = std::sqrt(std::max(s2 / sample.size() - mu * mu, 1e-12));
  };
  for (int k = 0; k < kNumTasks; ++k) {
    mean_sd([&](const RawStats& r) { return r.value_stat[k]; }, model.value_mu[k],
            model.value_sd[k]);
    mean_sd([&](const RawStats& r) { return r.gap_stat[k]; }, model.gap_mu[k],
            model.gap_sd[k]);
  }
  mean_sd([&](const RawStats& r) { return r.note_stat; }, model.note_mu,
          model.note_sd);

  const double gamma = cfg.note_value_interaction;
  for (int k = 0; k < kNumTasks; ++k) {
    std::vector<double> z(sample.size());
    for (size_t i = 0; i < sample.size(); ++i) {
      const RawStats& r = sample[i];
      double vs = (r.value_stat[k] - model.value_mu[k]) / model.value_sd[k];
      double gs = (r.gap_stat[k] - model.gap_mu[k]) / model.gap_sd[k];
      double ns = (r.note_stat - model.note_mu) / model.note_sd;
      z[i] = cfg.value_signal[k] * vs + cfg.gap_signal[k] * gs +
             cfg.note_signal[k] * ns * ((1.0 - gamma) + gamma * vs);
    }
    double lo = -60.0, hi = 60.0;
    for (int iter = 0; iter < 200; ++iter) {
      double mid = 0.5 * (lo + hi);
      double mean_p = 0.0;
      for (double zi : z) mean_p += stable_sigmoid(zi + mid);
      mean_p /= z.size();
      if (mean_p < cfg.prevalence[k])
        lo = mid;
      else
        hi = mid;
    }
    model.intercept[k] = 0.5 * (lo + hi);
  }
  return model;
}

}  // namespace synth_detail

// Deterministic synthetic cohort with planted, oracle-checkable label
// signals. Output is a pure function of the config.
inline DatasetSplit generate_synthetic(const SynthConfig& cfg) {
  using namespace synth_detail;
  validate_synth_config(cfg);
  const SynthModel model = calibrate(cfg);

  std::vector<EncounterRecord> all(cfg.n_encounters);
  for (int i = 0; i < cfg.n_encounters; ++i) {
    Rng rng(Rng::mix(cfg.seed, kStreamData, static_cast<uint64_t>(i)));
    RawStats raw;
    all[i] = draw_encounter(cfg, rng, model.note_dir, &raw);
    char id[32];
    std::snprintf(id, sizeof(id), "enc%07d", i);
    all[i].encounter_id = id;
    auto logits = true_logits(cfg, model, raw);
    all[i].labels.resize(kNumTasks);
    for (int k = 0; k < kNumTasks; ++k) {
      all[i].labels[k] = rng.bernoulli(stable_sigmoid(logits[k])) ? 1 : 0;
    }
  }

  std::vector<int> order(cfg.n_encounters);
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(Rng::mix(cfg.seed, kStreamSplit, 0));
  split_rng.shuffle(order);

  DatasetSplit split;
  const int n_train = static_cast<int>(cfg.n_encounters * cfg.train_frac);
  const int n_val = static_cast<int>(cfg.n_encounters * cfg.val_frac);
  for (int i = 0; i < cfg.n_encounters; ++i) {
    EncounterRecord& rec = all[order[i]];
    if (i < n_train)
      split.train.push_back(std::move(rec));
    else if (i < n_train + n_val)
      split.val.push_back(std::move(rec));
    else
      split.test.push_back(std::move(rec));
  }
  split.n_variables = cfg.n_variables;
  split.d_note = cfg.d_note;
  split.static_dim = cfg.n_static;
  split.stats = fit_norm_stats(split.train, cfg.n_variables);
  return split;
}

// Monte-Carlo estimate of the AUROC attained by the true logit function on
// fresh samples; the ceiling no trained model can beat in expectation.
inline std::array<double, kNumTasks> bayes_auroc_oracle(const SynthConfig& cfg,
                                                        int n_mc) {
  using namespace synth_detail;
  validate_synth_config(cfg);
  if (n_mc < 1000) {
    throw std::invalid_argument("bayes_auroc_oracle: n_mc < 1000 is too noisy");
  }
  const SynthModel model = calibrate(cfg);
  std::vector<std::vector<double>> scores(kNumTasks);
  std::vector<std::vector<int>> labels(kNumTasks);
  for (int i = 0; i < n_mc; ++i) {
    Rng rng(Rng::mix(cfg.seed, kStreamOracle, static_cast<uint64_t>(i)));
    RawStats raw;
    (void)draw_encounter(cfg, rng, model.note_dir, &raw);
    auto logits = true_logits(cfg, model, raw);
    for (int k = 0; k < kNumTasks; ++k) {
      scores[k].push_back(logits[k]);
      labels[k].push_back(rng.bernoulli(stable_sigmoid(logits[k])) ? 1 : 0);
    }
  }
  std::array<double, kNumTasks> out{};
  for (int k = 0; k < kNumTasks; ++k) {
    auto a = auroc(scores[k], labels[k]);
    if (a.has_value()) {
      out[k] = *a;
    } else {
      out[k] = 0.5;
      log_warn("bayes_auroc_oracle: task " + std::to_string(k) +
               " drew a single class; reporting 0.5");
    }
  }
  return out;
}

}  // namespace chronotoken
