#pragma once

#include <string>
#include <vector>

#include "chronotoken/dataset.hpp"
#include "chronotoken/fusion.hpp"
#include "chronotoken/gru.hpp"

namespace chronotoken {

namespace model_detail {

inline bool uses_time_branch(const ModelConfig& cfg) {
  if (cfg.arch == ModelArch::kGru) return true;
  return cfg.fusion.variant != FusionVariant::kNotesOnly;
}

inline bool uses_encoder(const ModelConfig& cfg) {
  return cfg.arch == ModelArch::kTransformer &&
         cfg.fusion.variant != FusionVariant::kNotesOnly;
}

inline bool uses_notes(const ModelConfig& cfg) {
  if (cfg.arch == ModelArch::kGru) return false;
  return cfg.fusion.variant != FusionVariant::kTimeOnly;
}

template <typename T>
void init_trunc_normal(Mat<T>& m, Rng& rng, double sd = 0.02) {
  for (auto& v : m.a) v = static_cast<T>(rng.trunc_normal(sd));
}

}  // namespace model_detail

// Creates every learnable tensor the configured architecture uses, in a
// fixed order, initialized with truncated normals (std 0.02) for tables and
// projections, ones for layer-norm gains, zeros for biases.
template <typename T>
ParamStore<T> build_params(const ModelConfig& cfg, uint64_t seed) {
  using namespace model_detail;
  validate_model_config(cfg);
  ParamStore<T> store;
  Rng rng(Rng::hash64(seed ^ 0x9a790c17));
  const int d = cfg.attn.d;

  auto weight = [&](const std::string& name, int r, int c) {
    init_trunc_normal(store.add(name, r, c), rng);
  };
  auto zeros = [&](const std::string& name, int r, int c) { store.add(name, r, c); };
  auto ones = [&](const std::string& name, int r, int c) {
    store.add(name, r, c).fill(T(1));
  };

  if (uses_time_branch(cfg)) {
    if (!cfg.ablation.no_time2vec) {
      weight("t2v.w", 1, d);
      zeros("t2v.b", 1, d);
    }
    const int venc_rows = cfg.ablation.shared_encoder ? 1 : cfg.vocab_size;
    const int taps = cfg.encoder_kind == EncoderKind::kConv1d ? cfg.conv_kernel : 1;
    for (int kappa = 0; kappa < taps; ++kappa) {
      weight("venc.w" + std::to_string(kappa), venc_rows, d);
    }
    zeros("venc.b", venc_rows, d);
    if (cfg.encoder_kind == EncoderKind::kTransformer) {
      weight("venc.attn.wq", venc_rows, d * d);
      weight("venc.attn.wk", venc_rows, d * d);
      weight("venc.attn.wv", venc_rows, d * d);
      ones("venc.ln.g", venc_rows, d);
      zeros("venc.ln.b", venc_rows, d);
    }
    if (!cfg.ablation.no_abs_pos) weight("abs_pos", cfg.max_len, d);
  }

  if (uses_encoder(cfg)) {
    weight("global_tokens", cfg.attn.n_global, d);
    for (int l = 0; l < cfg.attn.layers; ++l) {
      std::string p = "enc" + std::to_string(l);
      ones(p + ".ln1.g", 1, d);
      zeros(p + ".ln1.b", 1, d);
      weight(p + ".attn.wq", d, d);
      weight(p + ".attn.wk", d, d);
      weight(p + ".attn.wv", d, d);
      weight(p + ".attn.wo", d, d);
      zeros(p + ".attn.bq", 1, d);
      zeros(p + ".attn.bv", 1, d);
      zeros(p + ".attn.bo", 1, d);
      zeros(p + ".attn.gk_bias", 1, cfg.attn.heads);
      if (!cfg.ablation.no_relpos) {
        zeros(p + ".rel_bias", 2 * cfg.clip_k + 1, cfg.attn.heads);
      }
      ones(p + ".ln2.g", 1, d);
      zeros(p + ".ln2.b", 1, d);
      weight(p + ".ffn.w1", d, 4 * d);
      zeros(p + ".ffn.b1", 1, 4 * d);
      weight(p + ".ffn.w2", 4 * d, d);
      zeros(p + ".ffn.b2", 1, d);
    }
    ones("final_ln.g", 1, d);
    zeros("final_ln.b", 1, d);
  }

  weight("static_proj.w", cfg.static_dim, d);
  zeros("static_proj.b", 1, d);

  if (cfg.arch == ModelArch::kTransformer) {
    const auto variant = cfg.fusion.variant;
    if (variant == FusionVariant::kTimeOnly ||
        variant == FusionVariant::kLateWeighted ||
        variant == FusionVariant::kConcatThenCross) {
      weight("heads.w", kNumTasks, 2 * d);
      zeros("heads.b", 1, kNumTasks);
    }
    if (uses_notes(cfg)) {
      weight("note_proj.w", cfg.fusion.d_note, d);
      zeros("note_proj.b", 1, d);
      weight("null_note", 1, d);
    }
    if (variant == FusionVariant::kNotesOnly ||
        variant == FusionVariant::kLateWeighted) {
      weight("notes_heads.w", kNumTasks, 2 * d);
      zeros("notes_heads.b", 1, kNumTasks);
    }
    if (variant == FusionVariant::kLateWeighted) {
      zeros("fusion_alpha_raw", 1, 1);  // alpha starts at 0.5
    }
    if (variant == FusionVariant::kCrossThenConcat) {
      for (const char* p : {"cross_tn", "cross_nt"}) {
        std::string prefix(p);
        weight(prefix + ".wq", d, d);
        weight(prefix + ".wk", d, d);
        weight(prefix + ".wv", d, d);
        zeros(prefix + ".bq", 1, d);
        zeros(prefix + ".bv", 1, d);
        ones(prefix + ".ln.g", 1, d);
        zeros(prefix + ".ln.b", 1, d);
      }
      weight("fuse_heads.w", kNumTasks, 3 * d);
      zeros("fuse_heads.b", 1, kNumTasks);
    }
    if (variant == FusionVariant::kConcatThenCross) {
      // Wider init than the 0.02 tables: the type embedding is what lets
      // attention tell note keys from time keys in the joint sequence, so
      // it has to be visible against the content at step one.
      init_trunc_normal(store.add("modality_type", 3, d), rng, 0.5);
    }
  } else {
    for (int l = 0; l < cfg.gru_layers; ++l) {
      std::string p = "gru" + std::to_string(l);
      weight(p + ".wz", d, d);
      weight(p + ".wr", d, d);
      weight(p + ".wh", d, d);
      weight(p + ".uz", d, d);
      weight(p + ".ur", d, d);
      weight(p + ".uh", d, d);
      zeros(p + ".bz", 1, d);
      zeros(p + ".br", 1, d);
      zeros(p + ".bh", 1, d);
      zeros(p + ".h0", 1, d);
    }
    weight("gru.pool.q", 1, d);
    weight("gru.heads.w", kNumTasks, 2 * d);
    zeros("gru.heads.b", 1, kNumTasks);
  }
  return store;
}

// One encounter prepared for the model: tokenized events, note matrix,
// statics, and labels.
template <typename T>
struct ModelInput {
  TokenSequence seq;
  Mat<T> notes;
  std::vector<double> statics;
  std::vector<int> labels;
};

template <typename T>
ModelInput<T> prepare_input(const EncounterRecord& rec, const NormStats& stats,
                            const ModelConfig& cfg) {
  ModelInput<T> input;
  input.seq = tokenize(rec, stats, cfg.max_len);
  input.notes = Mat<T>(static_cast<int>(rec.note_embeddings.size()),
                       rec.note_embeddings.empty()
                           ? cfg.fusion.d_note
                           : static_cast<int>(rec.note_embeddings[0].size()));
  for (int i = 0; i < input.notes.rows; ++i) {
    for (int c = 0; c < input.notes.cols; ++c) {
      input.notes[i][c] = static_cast<T>(rec.note_embeddings[i][c]);
    }
  }
  input.statics = rec.static_features;
  if (static_cast<int>(input.statics.size()) != cfg.static_dim) {
    throw std::invalid_argument("record " + rec.encounter_id + ": expected " +
                                std::to_string(cfg.static_dim) + " static features");
  }
  input.labels = rec.labels;
  return input;
}

template <typename T>
std::vector<ModelInput<T>> prepare_inputs(const std::vector<EncounterRecord>& recs,
                                          const NormStats& stats,
                                          const ModelConfig& cfg) {
  std::vector<ModelInput<T>> out;
  out.reserve(recs.size());
  for (const auto& r : recs) out.push_back(prepare_input<T>(r, stats, cfg));
  return out;
}

// Forward pass to the nine task logits for either architecture.
template <typename T>
int model_logits(Tape<T>& tape, const ModelInput<T>& input, const ModelConfig& cfg) {
  if (cfg.arch == ModelArch::kGru) {
    return gru_logits(tape, input.seq, input.statics, cfg);
  }
  return fused_logits(tape, input.seq, input.notes, input.statics, cfg);
}

inline std::string model_arch_name(const ModelConfig& cfg) {
  if (cfg.arch == ModelArch::kGru) return "gru";
  return "transformer/" + fusion_variant_name(cfg.fusion.variant);
}

}  // namespace chronotoken
