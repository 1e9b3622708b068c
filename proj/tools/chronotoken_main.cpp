// Command-line surface for the chronotoken pipeline: generate synthetic
// datasets, train and evaluate models, and run the ablation / fusion
// comparison suites.
//
// Exit codes: 0 success, 2 configuration or input error, 3 runtime or
// numeric failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "chronotoken/chronotoken.hpp"

namespace fs = std::filesystem;
using namespace chronotoken;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct CliOptions {
  std::string config_path;
  std::string data_dir;
  std::string out_dir;
  std::optional<uint64_t> seed;
  std::string seeds_csv;
  int threads = 0;  // 0 = take from config
  std::string variant;
};

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": malformed JSON: " + std::string(e.what()));
  }
  return run_config_from_json(j);
}

void apply_overrides(RunConfig& cfg, const CliOptions& opt) {
  if (opt.seed.has_value()) {
    cfg.train.seed = *opt.seed;
    cfg.synth.seed = *opt.seed;
  }
  if (opt.threads > 0) cfg.train.threads = opt.threads;
  if (!opt.variant.empty()) {
    cfg.model.fusion.variant = fusion_variant_from_string(opt.variant, "--variant");
  }
  if (!opt.data_dir.empty()) cfg.data_dir = opt.data_dir;
  if (!opt.out_dir.empty()) cfg.out_dir = opt.out_dir;
}

std::vector<uint64_t> parse_seeds(const std::string& csv, uint64_t fallback) {
  if (csv.empty()) return {fallback, fallback + 1, fallback + 2};
  std::vector<uint64_t> seeds;
  size_t pos = 0;
  while (pos <= csv.size()) {
    size_t comma = csv.find(',', pos);
    std::string tok = csv.substr(pos, comma == std::string::npos ? std::string::npos
                                                                 : comma - pos);
    if (!tok.empty()) {
      try {
        seeds.push_back(std::stoull(tok));
      } catch (const std::exception&) {
        throw ConfigError("--seeds: bad value '" + tok + "'");
      }
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (seeds.empty()) throw ConfigError("--seeds: empty list");
  return seeds;
}

// Aligns the model's data-shape fields with the dataset actually on disk.
void sync_model_to_dataset(ModelConfig& model, const DatasetSplit& data) {
  model.vocab_size = data.n_variables;
  model.static_dim = data.static_dim;
  model.fusion.d_note = data.d_note;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

int cmd_generate(const CliOptions& opt) {
  RunConfig cfg = load_run_config(opt.config_path);
  apply_overrides(cfg, opt);
  if (cfg.out_dir.empty()) throw ConfigError("generate: --out directory required");
  DatasetSplit split = generate_synthetic(cfg.synth);
  write_dataset(split, cfg.out_dir);

  auto prevalence = [](const std::vector<EncounterRecord>& recs, int k) {
    if (recs.empty()) return 0.0;
    long long p = 0;
    for (const auto& r : recs) p += r.labels[k];
    return static_cast<double>(p) / recs.size();
  };
  std::printf("dataset written to %s\n", cfg.out_dir.c_str());
  std::printf("encounters: train=%zu val=%zu test=%zu  variables=%d  d_note=%d\n",
              split.train.size(), split.val.size(), split.test.size(),
              split.n_variables, split.d_note);
  std::printf("train prevalence:");
  for (int k = 0; k < kNumTasks; ++k) std::printf(" %.3f", prevalence(split.train, k));
  std::printf("\n");
  return 0;
}

void write_train_outputs(const fs::path& out, const TrainResult& result,
                         const DatasetSplit& data) {
  fs::create_directories(out);
  nlohmann::json model_json = model_config_to_json(result.model_cfg);
  ParamStore<float> params = result.params;
  save_checkpoint(params, model_arch_name(result.model_cfg), model_json,
                  (out / "checkpoint.json").string());

  nlohmann::json metrics = metrics_to_json(result.test_metrics);
  nlohmann::json pw = nlohmann::json::array();
  for (double w : result.pos_weight) pw.push_back(w);
  metrics["pos_weight"] = pw;
  write_text(out / "metrics.json", metrics.dump(2) + "\n");

  std::string log;
  for (const auto& e : result.log) {
    nlohmann::json line{{"epoch", e.epoch}, {"loss", e.train_loss}};
    nlohmann::json val = metrics_to_json(e.val_metrics);
    line["val_mean_auroc"] = val["mean_auroc"];
    line["val_auroc"] = val["auroc_per_task"];
    log += line.dump() + "\n";
  }
  write_text(out / "train_log.jsonl", log);

  Vocab vocab = Vocab::vitals(data.n_variables);
  nlohmann::json vj{{"names", vocab.names}};
  write_text(out / "vocab.json", vj.dump(2) + "\n");
  write_text(out / "norm_stats.json", detail::stats_to_json(data.stats).dump(2) + "\n");
}

int cmd_train(const CliOptions& opt) {
  RunConfig cfg = load_run_config(opt.config_path);
  apply_overrides(cfg, opt);
  if (cfg.data_dir.empty()) throw ConfigError("train: --data directory required");
  if (cfg.out_dir.empty()) throw ConfigError("train: --out directory required");
  DatasetSplit data = read_dataset(cfg.data_dir);
  sync_model_to_dataset(cfg.model, data);
  TrainResult result = train(data, cfg.model, cfg.train);
  write_train_outputs(cfg.out_dir, result, data);
  std::printf("%s", metrics_to_table(result.test_metrics).c_str());
  return 0;
}

int cmd_eval(const CliOptions& opt) {
  CliOptions o = opt;
  RunConfig cfg;
  if (!o.config_path.empty()) cfg = load_run_config(o.config_path);
  apply_overrides(cfg, o);
  if (cfg.data_dir.empty()) throw ConfigError("eval: --data directory required");
  if (cfg.out_dir.empty()) {
    throw ConfigError("eval: --out directory with checkpoint.json required");
  }
  DatasetSplit data = read_dataset(cfg.data_dir);

  fs::path ckpt = fs::path(cfg.out_dir) / "checkpoint.json";
  std::ifstream in(ckpt);
  if (!in) throw ConfigError("eval: cannot open " + ckpt.string());
  nlohmann::json j;
  in >> j;
  ModelConfig model = model_config_from_json(j.at("config"), "checkpoint.config");
  ParamStore<float> params = build_params<float>(model, 0);
  checkpoint_load_into(j, params);

  auto inputs = prepare_inputs<float>(data.test, data.stats, model);
  Metrics m = evaluate(params, inputs, model, cfg.train.threads);
  write_text(fs::path(cfg.out_dir) / "eval_metrics.json", metrics_to_json(m).dump(2) + "\n");
  std::printf("%s", metrics_to_table(m).c_str());
  return 0;
}

int cmd_ablate(const CliOptions& opt) {
  RunConfig cfg = load_run_config(opt.config_path);
  apply_overrides(cfg, opt);
  if (cfg.data_dir.empty()) throw ConfigError("ablate: --data directory required");
  if (cfg.out_dir.empty()) throw ConfigError("ablate: --out directory required");
  DatasetSplit data = read_dataset(cfg.data_dir);
  sync_model_to_dataset(cfg.model, data);
  std::vector<uint64_t> seeds = parse_seeds(opt.seeds_csv, cfg.train.seed);

  auto ablation = run_ablation_suite(data, cfg.model, cfg.train, seeds);
  auto fusion = run_fusion_suite(data, cfg.model, cfg.train, seeds);

  fs::create_directories(cfg.out_dir);
  write_text(fs::path(cfg.out_dir) / "ablation.json", ablation_to_json(ablation).dump(2) + "\n");
  write_text(fs::path(cfg.out_dir) / "fusion.json", ablation_to_json(fusion).dump(2) + "\n");
  std::string report = "# chronotoken report\n\n";
  report += render_ablation_table("Time-series modeling (ablations and baseline)", ablation);
  report += "\n";
  report += render_ablation_table("Multimodal fusion comparison", fusion);
  write_text(fs::path(cfg.out_dir) / "report.md", report);
  std::printf("%s", report.c_str());
  return 0;
}

int cmd_report(const CliOptions& opt) {
  CliOptions o = opt;
  RunConfig cfg;
  if (!o.config_path.empty()) cfg = load_run_config(o.config_path);
  apply_overrides(cfg, o);
  if (cfg.data_dir.empty()) {
    throw ConfigError("report: --data directory with ablation.json/fusion.json required");
  }
  std::string report = "# chronotoken report\n\n";
  bool found = false;
  for (const auto& [file, title] :
       {std::pair<const char*, const char*>{"ablation.json",
                                            "Time-series modeling (ablations and baseline)"},
        std::pair<const char*, const char*>{"fusion.json", "Multimodal fusion comparison"}}) {
    fs::path path = fs::path(cfg.data_dir) / file;
    std::ifstream in(path);
    if (!in) continue;
    nlohmann::json j;
    in >> j;
    if (found) report += "\n";
    report += render_ablation_table(title, ablation_rows_from_json(j));
    found = true;
  }
  if (!found) throw ConfigError("report: no ablation.json or fusion.json in " + cfg.data_dir);
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    write_text(fs::path(cfg.out_dir) / "report.md", report);
  }
  std::printf("%s", report.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chronotoken: dynamic embedding and tokenization for multimodal clinical time series"};
  app.require_subcommand(1);

  CliOptions opt;
  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", opt.config_path, "run configuration JSON");
    if (needs_config) c->required();
    sub->add_option("--data", opt.data_dir, "dataset directory");
    sub->add_option("--out", opt.out_dir, "output directory");
    sub->add_option("--seed", opt.seed, "seed override");
    sub->add_option("--seeds", opt.seeds_csv, "comma-separated seed list");
    sub->add_option("--threads", opt.threads, "worker threads (default from config)");
    sub->add_option("--variant", opt.variant, "fusion variant override");
  };

  CLI::App* generate = app.add_subcommand("generate", "generate a synthetic dataset");
  add_common(generate, true);
  CLI::App* train_cmd = app.add_subcommand("train", "train a model");
  add_common(train_cmd, true);
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(eval_cmd, false);
  CLI::App* ablate = app.add_subcommand("ablate", "run the ablation and fusion suites");
  add_common(ablate, true);
  CLI::App* report = app.add_subcommand("report", "re-render report.md from saved results");
  add_common(report, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (generate->parsed()) return cmd_generate(opt);
    if (train_cmd->parsed()) return cmd_train(opt);
    if (eval_cmd->parsed()) return cmd_eval(opt);
    if (ablate->parsed()) return cmd_ablate(opt);
    if (report->parsed()) return cmd_report(opt);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const DatasetError& e) {
    std::fprintf(stderr, "dataset error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitConfig;
  } catch (const TrainingDivergence& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return 0;
}
