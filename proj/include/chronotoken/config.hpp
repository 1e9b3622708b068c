#pragma once

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "chronotoken/data.hpp"
#include "chronotoken/synth.hpp"

namespace chronotoken {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class EncoderKind { kLinear, kConv1d, kTransformer };
enum class FusionVariant {
  kTimeOnly,
  kNotesOnly,
  kLateWeighted,
  kCrossThenConcat,
  kConcatThenCross
};
enum class ModelArch { kTransformer, kGru };

struct AttentionConfig {
  int d = 64;
  int heads = 1;
  int layers = 1;
  int window_radius = 64;
  int n_global = kNumTasks;
  double dropout = 0.2;
};

struct FusionConfig {
  FusionVariant variant = FusionVariant::kTimeOnly;
  int d_note = 16;
};

struct AblationFlags {
  bool no_time2vec = false;
  bool no_relpos = false;
  bool shared_encoder = false;
  bool no_abs_pos = false;
};

struct ModelConfig {
  ModelArch arch = ModelArch::kTransformer;
  int vocab_size = 14;
  int static_dim = 8;
  AttentionConfig attn;
  int clip_k = 16;
  int max_len = kDefaultMaxLen;
  EncoderKind encoder_kind = EncoderKind::kLinear;
  int conv_kernel = 3;
  int gru_layers = 2;
  FusionConfig fusion;
  AblationFlags ablation;
};

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double dropout = 0.2;
  int epochs = 5;
  int batch_size = 32;
  uint64_t seed = 1;
  int threads = 1;
};

inline void validate_model_config(const ModelConfig& cfg) {
  const auto& a = cfg.attn;
  if (a.d < 2) throw ConfigError("model.d must be >= 2");
  if (a.heads < 1 || a.d % a.heads != 0) {
    throw ConfigError("model.d must be divisible by model.heads");
  }
  if (a.layers < 1) throw ConfigError("model.layers must be >= 1");
  if (a.window_radius < 1) throw ConfigError("model.window_radius must be >= 1");
  if (a.n_global != kNumTasks) {
    throw ConfigError("model.n_global must equal " + std::to_string(kNumTasks));
  }
  if (a.dropout < 0.0 || a.dropout >= 1.0) {
    throw ConfigError("model.dropout out of [0,1)");
  }
  if (cfg.clip_k < 1) throw ConfigError("model.clip_k must be >= 1");
  if (cfg.max_len < 1) throw ConfigError("model.max_len must be >= 1");
  if (cfg.vocab_size < 1) throw ConfigError("model.vocab_size must be >= 1");
  if (cfg.static_dim < 1) throw ConfigError("model.static_dim must be >= 1");
  if (cfg.conv_kernel < 1) throw ConfigError("model.conv_kernel must be >= 1");
  if (cfg.gru_layers < 1) throw ConfigError("model.gru_layers must be >= 1");
  if (cfg.fusion.d_note < 1) throw ConfigError("model.fusion.d_note must be >= 1");
}

inline void validate_train_config(const TrainConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (cfg.weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw ConfigError("train.dropout out of [0,1)");
  if (cfg.epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (cfg.threads < 1) throw ConfigError("train.threads must be >= 1");
}

namespace cfg_detail {

using nlohmann::json;

inline void check_keys(const json& j, const std::string& prefix,
                       const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(prefix + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ConfigError(prefix + "." + it.key() + ": unknown key");
    }
  }
}

template <typename T>
void read_field(const json& j, const std::string& prefix, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(prefix + "." + key + ": wrong type");
  }
}

inline void read_vec(const json& j, const std::string& prefix, const char* key,
                     std::vector<double>& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_array()) throw ConfigError(prefix + "." + key + ": expected array");
  out.clear();
  for (const auto& v : *it) {
    if (!v.is_number()) throw ConfigError(prefix + "." + key + ": expected numbers");
    out.push_back(v.get<double>());
  }
}

}  // namespace cfg_detail

inline SynthConfig synth_config_from_json(const nlohmann::json& j,
                                          const std::string& prefix = "synth") {
  using namespace cfg_detail;
  check_keys(j, prefix,
             {"seed", "n_encounters", "n_variables", "rates", "dup_cluster_prob",
              "prevalence", "signal_strengths", "d_note", "n_static",
              "duration_target", "max_events_per_variable", "global_dilation_sigma",
              "var_gap_sigma", "value_coupling", "note_absent_prob",
              "max_note_chunks", "train_frac", "val_frac"});
  SynthConfig cfg;
  read_field(j, prefix, "seed", cfg.seed);
  read_field(j, prefix, "n_encounters", cfg.n_encounters);
  read_field(j, prefix, "n_variables", cfg.n_variables);
  read_vec(j, prefix, "rates", cfg.rates);
  read_field(j, prefix, "dup_cluster_prob", cfg.dup_cluster_prob);
  read_vec(j, prefix, "prevalence", cfg.prevalence);
  if (j.contains("signal_strengths")) {
    const auto& s = j.at("signal_strengths");
    check_keys(s, prefix + ".signal_strengths",
               {"value", "gap", "note", "note_value_interaction"});
    read_vec(s, prefix + ".signal_strengths", "value", cfg.value_signal);
    read_vec(s, prefix + ".signal_strengths", "gap", cfg.gap_signal);
    read_vec(s, prefix + ".signal_strengths", "note", cfg.note_signal);
    read_field(s, prefix + ".signal_strengths", "note_value_interaction",
               cfg.note_value_interaction);
  }
  read_field(j, prefix, "d_note", cfg.d_note);
  read_field(j, prefix, "n_static", cfg.n_static);
  read_field(j, prefix, "duration_target", cfg.duration_target);
  read_field(j, prefix, "max_events_per_variable", cfg.max_events_per_variable);
  read_field(j, prefix, "global_dilation_sigma", cfg.global_dilation_sigma);
  read_field(j, prefix, "var_gap_sigma", cfg.var_gap_sigma);
  read_field(j, prefix, "value_coupling", cfg.value_coupling);
  read_field(j, prefix, "note_absent_prob", cfg.note_absent_prob);
  read_field(j, prefix, "max_note_chunks", cfg.max_note_chunks);
  read_field(j, prefix, "train_frac", cfg.train_frac);
  read_field(j, prefix, "val_frac", cfg.val_frac);
  try {
    validate_synth_config(cfg);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(prefix + ": " + e.what());
  }
  return cfg;
}

inline EncoderKind encoder_kind_from_string(const std::string& s, const std::string& prefix) {
  if (s == "linear") return EncoderKind::kLinear;
  if (s == "conv1d") return EncoderKind::kConv1d;
  if (s == "transformer") return EncoderKind::kTransformer;
  throw ConfigError(prefix + ": unknown encoder_kind '" + s + "'");
}

inline FusionVariant fusion_variant_from_string(const std::string& s,
                                                const std::string& prefix) {
  if (s == "time_only") return FusionVariant::kTimeOnly;
  if (s == "notes_only") return FusionVariant::kNotesOnly;
  if (s == "late_weighted") return FusionVariant::kLateWeighted;
  if (s == "cross_then_concat") return FusionVariant::kCrossThenConcat;
  if (s == "concat_then_cross") return FusionVariant::kConcatThenCross;
  throw ConfigError(prefix + ": unknown fusion variant '" + s + "'");
}

inline std::string fusion_variant_name(FusionVariant v) {
  switch (v) {
    case FusionVariant::kTimeOnly: return "time_only";
    case FusionVariant::kNotesOnly: return "notes_only";
    case FusionVariant::kLateWeighted: return "late_weighted";
    case FusionVariant::kCrossThenConcat: return "cross_then_concat";
    case FusionVariant::kConcatThenCross: return "concat_then_cross";
  }
  return "?";
}

inline ModelConfig model_config_from_json(const nlohmann::json& j,
                                          const std::string& prefix = "model") {
  using namespace cfg_detail;
  check_keys(j, prefix,
             {"arch", "vocab_size", "static_dim", "d", "heads", "layers",
              "window_radius", "n_global", "dropout", "clip_k", "max_len",
              "encoder_kind", "conv_kernel", "gru_layers", "fusion"});
  ModelConfig cfg;
  std::string arch = "transformer";
  read_field(j, prefix, "arch", arch);
  if (arch == "transformer") {
    cfg.arch = ModelArch::kTransformer;
  } else if (arch == "gru") {
    cfg.arch = ModelArch::kGru;
  } else {
    throw ConfigError(prefix + ".arch: unknown arch '" + arch + "'");
  }
  read_field(j, prefix, "vocab_size", cfg.vocab_size);
  read_field(j, prefix, "static_dim", cfg.static_dim);
  read_field(j, prefix, "d", cfg.attn.d);
  read_field(j, prefix, "heads", cfg.attn.heads);
  read_field(j, prefix, "layers", cfg.attn.layers);
  read_field(j, prefix, "window_radius", cfg.attn.window_radius);
  read_field(j, prefix, "n_global", cfg.attn.n_global);
  read_field(j, prefix, "dropout", cfg.attn.dropout);
  read_field(j, prefix, "clip_k", cfg.clip_k);
  read_field(j, prefix, "max_len", cfg.max_len);
  if (j.contains("encoder_kind")) {
    cfg.encoder_kind = encoder_kind_from_string(
        j.at("encoder_kind").get<std::string>(), prefix + ".encoder_kind");
  }
  read_field(j, prefix, "conv_kernel", cfg.conv_kernel);
  read_field(j, prefix, "gru_layers", cfg.gru_layers);
  if (j.contains("fusion")) {
    const auto& f = j.at("fusion");
    check_keys(f, prefix + ".fusion", {"variant", "d_note"});
    if (f.contains("variant")) {
      cfg.fusion.variant = fusion_variant_from_string(
          f.at("variant").get<std::string>(), prefix + ".fusion.variant");
    }
    read_field(f, prefix + ".fusion", "d_note", cfg.fusion.d_note);
  }
  validate_model_config(cfg);
  return cfg;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j,
                                          const std::string& prefix = "train") {
  using namespace cfg_detail;
  check_keys(j, prefix,
             {"lr", "weight_decay", "dropout", "epochs", "batch_size", "seed",
              "threads"});
  TrainConfig cfg;
  read_field(j, prefix, "lr", cfg.lr);
  read_field(j, prefix, "weight_decay", cfg.weight_decay);
  read_field(j, prefix, "dropout", cfg.dropout);
  read_field(j, prefix, "epochs", cfg.epochs);
  read_field(j, prefix, "batch_size", cfg.batch_size);
  read_field(j, prefix, "seed", cfg.seed);
  read_field(j, prefix, "threads", cfg.threads);
  validate_train_config(cfg);
  return cfg;
}

inline AblationFlags ablation_from_json(const nlohmann::json& j,
                                        const std::string& prefix = "ablation") {
  using namespace cfg_detail;
  check_keys(j, prefix, {"no_time2vec", "no_relpos", "shared_encoder", "no_abs_pos"});
  AblationFlags f;
  read_field(j, prefix, "no_time2vec", f.no_time2vec);
  read_field(j, prefix, "no_relpos", f.no_relpos);
  read_field(j, prefix, "shared_encoder", f.shared_encoder);
  read_field(j, prefix, "no_abs_pos", f.no_abs_pos);
  return f;
}

// Full run configuration: all sections optional and defaulted, every key
// schema-checked before any work happens.
struct RunConfig {
  SynthConfig synth;
  ModelConfig model;
  TrainConfig train;
  std::string data_dir;
  std::string out_dir;
};

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  using namespace cfg_detail;
  check_keys(j, "config", {"synth", "model", "train", "ablation", "paths"});
  RunConfig cfg;
  if (j.contains("synth")) cfg.synth = synth_config_from_json(j.at("synth"));
  if (j.contains("model")) cfg.model = model_config_from_json(j.at("model"));
  if (j.contains("train")) cfg.train = train_config_from_json(j.at("train"));
  if (j.contains("ablation")) cfg.model.ablation = ablation_from_json(j.at("ablation"));
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    check_keys(p, "paths", {"data_dir", "out_dir"});
    read_field(p, "paths", "data_dir", cfg.data_dir);
    read_field(p, "paths", "out_dir", cfg.out_dir);
  }
  // Keep the model consistent with the synthetic cohort unless overridden.
  if (j.contains("synth") && (!j.contains("model") || !j.at("model").contains("vocab_size"))) {
    cfg.model.vocab_size = cfg.synth.n_variables;
  }
  if (j.contains("synth") && (!j.contains("model") || !j.at("model").contains("static_dim"))) {
    cfg.model.static_dim = cfg.synth.n_static;
  }
  if (j.contains("synth") &&
      (!j.contains("model") || !j.at("model").contains("fusion") ||
       !j.at("model").at("fusion").contains("d_note"))) {
    cfg.model.fusion.d_note = cfg.synth.d_note;
  }
  return cfg;
}

inline nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  nlohmann::json f{{"variant", fusion_variant_name(cfg.fusion.variant)},
                   {"d_note", cfg.fusion.d_note}};
  std::string kind = cfg.encoder_kind == EncoderKind::kLinear      ? "linear"
                     : cfg.encoder_kind == EncoderKind::kConv1d    ? "conv1d"
                                                                   : "transformer";
  nlohmann::json j{{"arch", cfg.arch == ModelArch::kTransformer ? "transformer" : "gru"},
                   {"vocab_size", cfg.vocab_size},
                   {"static_dim", cfg.static_dim},
                   {"d", cfg.attn.d},
                   {"heads", cfg.attn.heads},
                   {"layers", cfg.attn.layers},
                   {"window_radius", cfg.attn.window_radius},
                   {"n_global", cfg.attn.n_global},
                   {"dropout", cfg.attn.dropout},
                   {"clip_k", cfg.clip_k},
                   {"max_len", cfg.max_len},
                   {"encoder_kind", kind},
                   {"conv_kernel", cfg.conv_kernel},
                   {"gru_layers", cfg.gru_layers},
                   {"fusion", f}};
  return j;
}

}  // namespace chronotoken
