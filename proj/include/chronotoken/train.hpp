#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "chronotoken/adam.hpp"
#include "chronotoken/loss.hpp"
#include "chronotoken/metrics.hpp"
#include "chronotoken/model.hpp"

namespace chronotoken {

class TrainingDivergence : public std::runtime_error {
 public:
  TrainingDivergence(int epoch, int batch)
      : std::runtime_error("training diverged: non-finite loss at epoch " +
                           std::to_string(epoch) + ", batch " + std::to_string(batch)),
        epoch(epoch),
        batch(batch) {}
  int epoch;
  int batch;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  Metrics val_metrics;
};

struct TrainResult {
  ParamStore<float> params;  // best-validation checkpoint
  Metrics test_metrics;
  std::vector<EpochLog> log;
  std::vector<double> pos_weight;
  ModelConfig model_cfg;  // effective config (dropout from TrainConfig)
};

namespace train_detail {

constexpr uint64_t kStreamShuffle = 0x544F;
constexpr uint64_t kStreamDropout = 0xD120;

}  // namespace train_detail

// Per-task logit scores in eval mode. With threads > 1 the inputs are
// chunked; results land in preassigned slots so the output is identical to
// the sequential run.
template <typename T>
std::vector<std::vector<double>> model_scores(const ParamStore<T>& params,
                                              const std::vector<ModelInput<T>>& inputs,
                                              const ModelConfig& cfg, int threads = 1) {
  std::vector<std::vector<double>> scores(kNumTasks,
                                          std::vector<double>(inputs.size(), 0.0));
  auto worker = [&](size_t lo, size_t hi) {
    for (size_t i = lo; i < hi; ++i) {
      Tape<T> tape(&params, nullptr, false, 0);
      int logits = model_logits(tape, inputs[i], cfg);
      const Mat<T>& v = tape.val(logits);
      for (int k = 0; k < kNumTasks; ++k) {
        scores[k][i] = static_cast<double>(v[0][k]);
      }
    }
  };
  if (threads <= 1 || inputs.size() < 2) {
    worker(0, inputs.size());
  } else {
    int n_threads = std::min<int>(threads, static_cast<int>(inputs.size()));
    std::vector<std::thread> pool;
    size_t chunk = (inputs.size() + n_threads - 1) / n_threads;
    for (int t = 0; t < n_threads; ++t) {
      size_t lo = t * chunk;
      size_t hi = std::min(inputs.size(), lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back(worker, lo, hi);
    }
    for (auto& th : pool) th.join();
  }
  return scores;
}

template <typename T>
Metrics evaluate(const ParamStore<T>& params, const std::vector<ModelInput<T>>& inputs,
                 const ModelConfig& cfg, int threads = 1) {
  auto scores = model_scores(params, inputs, cfg, threads);
  std::vector<std::vector<int>> labels(kNumTasks, std::vector<int>(inputs.size()));
  for (size_t i = 0; i < inputs.size(); ++i) {
    for (int k = 0; k < kNumTasks; ++k) labels[k][i] = inputs[i].labels[k];
  }
  return Metrics::from_scores(scores, labels);
}

// Multitask training: shuffled mini-batches, Adam with coupled weight
// decay, per-epoch validation, best-validation checkpointing, final test
// metrics. Deterministic for a fixed seed; with threads > 1 gradients are
// still reduced in member order, so a fixed thread count reproduces too.
inline TrainResult train(const DatasetSplit& data, ModelConfig cfg,
                         const TrainConfig& tc) {
  using namespace train_detail;
  validate_train_config(tc);
  if (data.train.empty() || data.val.empty() || data.test.empty()) {
    throw std::invalid_argument("train: every split must be non-empty");
  }
  cfg.attn.dropout = tc.dropout;
  validate_model_config(cfg);

  auto train_in = prepare_inputs<float>(data.train, data.stats, cfg);
  auto val_in = prepare_inputs<float>(data.val, data.stats, cfg);
  auto test_in = prepare_inputs<float>(data.test, data.stats, cfg);

  std::vector<std::vector<int>> train_labels;
  train_labels.reserve(train_in.size());
  for (const auto& in : train_in) train_labels.push_back(in.labels);
  std::vector<double> pos_weight = compute_pos_weights(train_labels);
  std::vector<float> pw_f(pos_weight.begin(), pos_weight.end());

  ParamStore<float> params = build_params<float>(cfg, tc.seed);
  AdamState<float> adam = AdamState<float>::like(params);
  ParamStore<float> grads = params.zeros_like();

  const int n = static_cast<int>(train_in.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.pos_weight = pos_weight;
  result.model_cfg = cfg;
  double best_val = -2.0;

  const int n_threads = std::max(1, tc.threads);
  std::vector<ParamStore<float>> thread_grads;
  if (n_threads > 1) {
    thread_grads.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) thread_grads.push_back(params.zeros_like());
  }

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    Rng shuffle_rng(Rng::mix(tc.seed, kStreamShuffle, static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    int n_batches = 0;
    for (int start = 0; start < n; start += tc.batch_size, ++n_batches) {
      const int end = std::min(n, start + tc.batch_size);
      const int batch = end - start;
      const float inv_batch = 1.0f / static_cast<float>(batch);
      double batch_loss = 0.0;

      auto run_member = [&](int m, ParamStore<float>* gstore) -> double {
        const ModelInput<float>& input = train_in[order[start + m]];
        uint64_t dseed = Rng::mix(tc.seed, kStreamDropout,
                                  (static_cast<uint64_t>(epoch) << 32) ^
                                      static_cast<uint64_t>(start + m));
        Tape<float> tape(&params, gstore, true, dseed);
        int logits = model_logits(tape, input, cfg);
        std::vector<float> y(input.labels.begin(), input.labels.end());
        int loss = tape.bce_with_logits(logits, y, pw_f);
        double lv = static_cast<double>(tape.val(loss).a[0]);
        tape.backward(loss, inv_batch);
        return lv;
      };

      grads.zero();
      if (n_threads <= 1 || batch < 2) {
        for (int m = 0; m < batch; ++m) batch_loss += run_member(m, &grads);
      } else {
        int workers = std::min(n_threads, batch);
        std::vector<double> losses(batch, 0.0);
        std::vector<std::thread> pool;
        int chunk = (batch + workers - 1) / workers;
        for (int t = 0; t < workers; ++t) {
          int lo = t * chunk, hi = std::min(batch, lo + chunk);
          if (lo >= hi) break;
          thread_grads[t].zero();
          pool.emplace_back([&, t, lo, hi] {
            for (int m = lo; m < hi; ++m) losses[m] = run_member(m, &thread_grads[t]);
          });
        }
        for (auto& th : pool) th.join();
        for (double l : losses) batch_loss += l;
        for (int t = 0; t < workers; ++t) {
          for (size_t i = 0; i < grads.count(); ++i) {
            Mat<float>& dst = grads.tensor(i);
            const Mat<float>& src = thread_grads[t].tensor(i);
            for (size_t j = 0; j < dst.size(); ++j) dst.a[j] += src.a[j];
          }
        }
      }

      batch_loss /= batch;
      if (!std::isfinite(batch_loss)) throw TrainingDivergence(epoch, n_batches);
      epoch_loss += batch_loss;
      adam_step(params, grads, adam, tc.lr, tc.weight_decay);
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = n_batches > 0 ? epoch_loss / n_batches : 0.0;
    log.val_metrics = evaluate(params, val_in, cfg, n_threads);
    double val_mean = log.val_metrics.mean.value_or(-1.0);
    if (val_mean > best_val) {
      best_val = val_mean;
      result.params = params;
    }
    result.log.push_back(std::move(log));
    log_info("epoch " + std::to_string(epoch) + " loss " +
             std::to_string(result.log.back().train_loss) + " val " +
             metrics_to_line(result.log.back().val_metrics));
  }

  result.test_metrics = evaluate(result.params, test_in, cfg, n_threads);
  return result;
}

// ---- ablation and fusion comparison suites ----

struct AblationRow {
  std::string name;
  std::vector<Metrics> per_seed;
  std::array<double, kNumTasks> task_mean{};
  std::array<double, kNumTasks> task_std{};
  double mean_auroc = 0.0;       // mean over seeds of the per-run mean AUROC
  double seed_std = 0.0;         // dispersion of that mean across seeds
  double across_task_std = 0.0;  // dispersion of the per-task means across tasks
};

inline void aggregate_row(AblationRow& row) {
  const int s = static_cast<int>(row.per_seed.size());
  std::vector<double> run_means;
  for (int k = 0; k < kNumTasks; ++k) {
    double sum = 0.0, sumsq = 0.0;
    int cnt = 0;
    for (const Metrics& m : row.per_seed) {
      if (m.per_task[k].has_value()) {
        sum += *m.per_task[k];
        sumsq += *m.per_task[k] * *m.per_task[k];
        ++cnt;
      }
    }
    if (cnt > 0) {
      row.task_mean[k] = sum / cnt;
      row.task_std[k] = std::sqrt(std::max(sumsq / cnt - row.task_mean[k] * row.task_mean[k], 0.0));
    }
  }
  double sum = 0.0, sumsq = 0.0;
  for (const Metrics& m : row.per_seed) {
    double v = m.mean.value_or(0.5);
    sum += v;
    sumsq += v * v;
  }
  row.mean_auroc = s > 0 ? sum / s : 0.0;
  row.seed_std = s > 0 ? std::sqrt(std::max(sumsq / s - row.mean_auroc * row.mean_auroc, 0.0)) : 0.0;
  double tsum = 0.0, tsumsq = 0.0;
  for (int k = 0; k < kNumTasks; ++k) {
    tsum += row.task_mean[k];
    tsumsq += row.task_mean[k] * row.task_mean[k];
  }
  double tmean = tsum / kNumTasks;
  row.across_task_std = std::sqrt(std::max(tsumsq / kNumTasks - tmean * tmean, 0.0));
}

// Trains one named configuration across seeds on identical splits.
inline AblationRow run_config_over_seeds(const std::string& name,
                                         const DatasetSplit& data,
                                         const ModelConfig& cfg, const TrainConfig& tc,
                                         const std::vector<uint64_t>& seeds) {
  AblationRow row;
  row.name = name;
  for (uint64_t seed : seeds) {
    TrainConfig tc_seed = tc;
    tc_seed.seed = seed;
    row.per_seed.push_back(train(data, cfg, tc_seed).test_metrics);
  }
  aggregate_row(row);
  return row;
}

// The ablation suite: the full model, single-mechanism ablations, the
// BEHRT-style ablation (shared encoder, no relative positions, no time
// embedding), and the GRU-with-attention baseline on the same splits.
inline std::vector<AblationRow> run_ablation_suite(const DatasetSplit& data,
                                                   const ModelConfig& base,
                                                   const TrainConfig& tc,
                                                   const std::vector<uint64_t>& seeds) {
  if (seeds.size() < 3) {
    throw std::invalid_argument("run_ablation_suite: need at least 3 seeds");
  }
  std::vector<AblationRow> rows;
  auto with_flags = [&](bool t2v, bool relpos, bool shared) {
    ModelConfig cfg = base;
    cfg.arch = ModelArch::kTransformer;
    cfg.ablation = AblationFlags{};
    cfg.ablation.no_time2vec = t2v;
    cfg.ablation.no_relpos = relpos;
    cfg.ablation.shared_encoder = shared;
    return cfg;
  };
  rows.push_back(run_config_over_seeds("full", data, with_flags(false, false, false), tc, seeds));
  rows.push_back(run_config_over_seeds("no_time2vec", data, with_flags(true, false, false), tc, seeds));
  rows.push_back(run_config_over_seeds("no_relpos", data, with_flags(false, true, false), tc, seeds));
  rows.push_back(run_config_over_seeds("shared_encoder", data, with_flags(false, false, true), tc, seeds));
  rows.push_back(run_config_over_seeds("behrt_like", data, with_flags(true, true, true), tc, seeds));
  ModelConfig gru = base;
  gru.arch = ModelArch::kGru;
  gru.ablation = AblationFlags{};
  rows.push_back(run_config_over_seeds("gru_attention", data, gru, tc, seeds));
  return rows;
}

// The fusion suite: unimodal models, late weighted fusion, and the two
// cross-attention fusion architectures.
inline std::vector<AblationRow> run_fusion_suite(const DatasetSplit& data,
                                                 const ModelConfig& base,
                                                 const TrainConfig& tc,
                                                 const std::vector<uint64_t>& seeds) {
  if (seeds.size() < 3) {
    throw std::invalid_argument("run_fusion_suite: need at least 3 seeds");
  }
  std::vector<AblationRow> rows;
  for (FusionVariant v :
       {FusionVariant::kTimeOnly, FusionVariant::kNotesOnly, FusionVariant::kLateWeighted,
        FusionVariant::kCrossThenConcat, FusionVariant::kConcatThenCross}) {
    ModelConfig cfg = base;
    cfg.arch = ModelArch::kTransformer;
    cfg.fusion.variant = v;
    rows.push_back(run_config_over_seeds(fusion_variant_name(v), data, cfg, tc, seeds));
  }
  return rows;
}

inline nlohmann::json ablation_to_json(const std::vector<AblationRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json per_seed = nlohmann::json::array();
    for (const auto& m : row.per_seed) per_seed.push_back(metrics_to_json(m));
    nlohmann::json task_mean = nlohmann::json::array();
    nlohmann::json task_std = nlohmann::json::array();
    for (int k = 0; k < kNumTasks; ++k) {
      task_mean.push_back(row.task_mean[k]);
      task_std.push_back(row.task_std[k]);
    }
    out.push_back(nlohmann::json{{"name", row.name},
                                 {"per_seed", per_seed},
                                 {"task_mean", task_mean},
                                 {"task_std", task_std},
                                 {"mean_auroc", row.mean_auroc},
                                 {"seed_std", row.seed_std},
                                 {"across_task_std", row.across_task_std}});
  }
  return out;
}

inline std::vector<AblationRow> ablation_rows_from_json(const nlohmann::json& j) {
  std::vector<AblationRow> rows;
  for (const auto& rj : j) {
    AblationRow row;
    row.name = rj.at("name").get<std::string>();
    for (int k = 0; k < kNumTasks; ++k) {
      row.task_mean[k] = rj.at("task_mean")[k].get<double>();
      row.task_std[k] = rj.at("task_std")[k].get<double>();
    }
    row.mean_auroc = rj.at("mean_auroc").get<double>();
    row.seed_std = rj.at("seed_std").get<double>();
    row.across_task_std = rj.at("across_task_std").get<double>();
    rows.push_back(std::move(row));
  }
  return rows;
}

// Markdown table: one row per configuration, mean AUROC first, then the
// nine tasks, each cell mean +/- std across seeds.
inline std::string render_ablation_table(const std::string& title,
                                         const std::vector<AblationRow>& rows) {
  std::string out = "## " + title + "\n\n";
  out += "| Configuration | Mean |";
  for (int k = 0; k < kNumTasks; ++k) out += " task" + std::to_string(k) + " |";
  out += "\n|---|---|";
  for (int k = 0; k < kNumTasks; ++k) out += "---|";
  out += "\n";
  char buf[64];
  for (const auto& row : rows) {
    out += "| " + row.name + " | ";
    std::snprintf(buf, sizeof(buf), "%.3f ± %.3f", row.mean_auroc, row.seed_std);
    out += buf;
    for (int k = 0; k < kNumTasks; ++k) {
      std::snprintf(buf, sizeof(buf), " | %.3f ± %.3f", row.task_mean[k], row.task_std[k]);
      out += buf;
    }
    out += " |\n";
  }
  out += "\nDispersion is the standard deviation across seeds; the across-task"
         " std of per-task means is reported in ablation.json.\n";
  return out;
}

}  // namespace chronotoken
