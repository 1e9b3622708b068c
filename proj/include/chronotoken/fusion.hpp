#pragma once

#include <memory>
#include <string>
#include <vector>

#include "chronotoken/attention.hpp"

namespace chronotoken {

// Cross-attention: queries from one modality, keys/values from the other.
// Output rows are convex combinations of the value-projected key rows; the
// residual-and-norm wrapper lives in the fusion paths, not here.
template <typename T>
int cross_attention(Tape<T>& tape, int x_q, int x_kv, const std::string& prefix) {
  if (tape.val(x_kv).rows == 0) {
    throw std::invalid_argument("cross_attention: empty key/value sequence");
  }
  int q = tape.add_row_broadcast(tape.matmul(x_q, tape.param(prefix + ".wq")),
                                 tape.param(prefix + ".bq"));
  // No key bias: a shared offset on every key cancels in the softmax.
  int k = tape.matmul(x_kv, tape.param(prefix + ".wk"));
  int v = tape.add_row_broadcast(tape.matmul(x_kv, tape.param(prefix + ".wv")),
                                 tape.param(prefix + ".bv"));
  return tape.attention(q, k, v,
                        std::make_shared<const MaskPlan>(dense_plan(tape.val(x_kv).rows)));
}

// Note chunks projected into model space; encounters without notes get the
// learned null-note vector so downstream attention never sees an empty key
// set.
template <typename T>
int project_notes(Tape<T>& tape, const Mat<T>& notes, const ModelConfig& cfg) {
  if (notes.rows == 0) return tape.param("null_note");
  if (notes.cols != cfg.fusion.d_note) {
    throw std::invalid_argument("notes: expected dimension " +
                                std::to_string(cfg.fusion.d_note));
  }
  int leaf = tape.leaf(notes);
  return tape.add_row_broadcast(tape.matmul(leaf, tape.param("note_proj.w")),
                                tape.param("note_proj.b"));
}

template <typename T>
int notes_only_logits(Tape<T>& tape, const Mat<T>& notes,
                      const std::vector<double>& statics, const ModelConfig& cfg) {
  int n = project_notes(tape, notes, cfg);
  int pooled = tape.mean_rows(n);
  int sp = static_projection(tape, statics, cfg);
  // Heads read [pooled note | statics]; reuse the readout by stacking the
  // pooled row per task.
  std::vector<int> rows(kNumTasks, pooled);
  int stacked = tape.concat_rows(rows);
  return readout_heads(tape, stacked, sp, "notes_heads");
}

// Enrich each modality with cross-attention from the other, pool, and
// classify on the concatenation. Time side keeps the global-token readout;
// note side mean-pools. An empty event stream skips the time->note block so
// the key set is never empty.
template <typename T>
int cross_then_concat_logits(Tape<T>& tape, const TokenSequence& seq,
                             const Mat<T>& notes, const std::vector<double>& statics,
                             const ModelConfig& cfg) {
  int x = embed_tokens(tape, seq, cfg);
  int n = project_notes(tape, notes, cfg);
  int x_enriched =
      tape.layernorm(tape.add(x, cross_attention(tape, x, n, "cross_tn")),
                     tape.param("cross_tn.ln.g"), tape.param("cross_tn.ln.b"));
  int n_enriched = n;
  if (seq.length() > 0) {
    n_enriched =
        tape.layernorm(tape.add(n, cross_attention(tape, n, x, "cross_nt")),
                       tape.param("cross_nt.ln.g"), tape.param("cross_nt.ln.b"));
  }
  int g = tape.param("global_tokens");
  int joint = tape.concat_rows({g, x_enriched});
  auto plan = token_window_plan(seq, cfg.attn.n_global, cfg);
  int enc = encoder_stack(tape, joint, plan, cfg);
  int note_pool = tape.mean_rows(n_enriched);
  int sp = static_projection(tape, statics, cfg);
  return readout_heads(tape, enc, sp, "fuse_heads", note_pool);
}

// Concatenate projected note chunks as extra tokens after the outcome
// tokens, mark every token with a modality-type embedding, and run the
// shared encoder over the joint sequence. Note tokens are global: they have
// no timestamp, so they sit outside the sliding window and attend broadly.
template <typename T>
int concat_then_cross_logits(Tape<T>& tape, const TokenSequence& seq,
                             const Mat<T>& notes, const std::vector<double>& statics,
                             const ModelConfig& cfg) {
  int x = embed_tokens(tape, seq, cfg);
  int n = project_notes(tape, notes, cfg);
  const int L = tape.val(x).rows;
  const int m = tape.val(n).rows;
  int type_global = tape.gather_rows("modality_type", {0});
  int type_note = tape.gather_rows("modality_type", {1});
  int type_time = tape.gather_rows("modality_type", {2});
  int g = tape.add(tape.param("global_tokens"),
                   tape.repeat_row(type_global, cfg.attn.n_global));
  n = tape.add(n, tape.repeat_row(type_note, m));
  if (L > 0) x = tape.add(x, tape.repeat_row(type_time, L));
  int joint = tape.concat_rows({g, n, x});
  auto plan = std::make_shared<const MaskPlan>(build_window_plan(
      seq.positions, cfg.attn.n_global + m, cfg.attn.window_radius, cfg.clip_k));
  int enc = encoder_stack(tape, joint, plan, cfg);
  int sp = static_projection(tape, statics, cfg);
  return readout_heads(tape, enc, sp, "heads");
}

// Dispatch over the fusion variant. LateWeighted combines the two unimodal
// paths with a learnable convex weight alpha = sigmoid(raw).
template <typename T>
int fused_logits(Tape<T>& tape, const TokenSequence& seq, const Mat<T>& notes,
                 const std::vector<double>& statics, const ModelConfig& cfg) {
  switch (cfg.fusion.variant) {
    case FusionVariant::kTimeOnly:
      return transformer_logits(tape, seq, statics, cfg);
    case FusionVariant::kNotesOnly:
      return notes_only_logits(tape, notes, statics, cfg);
    case FusionVariant::kLateWeighted: {
      int lt = transformer_logits(tape, seq, statics, cfg);
      int ln = notes_only_logits(tape, notes, statics, cfg);
      int alpha = tape.sigmoid_(tape.param("fusion_alpha_raw"));
      int one_minus = tape.scale_add_const(alpha, T(-1), T(1));
      return tape.add(tape.mul_scalar_node(lt, alpha),
                      tape.mul_scalar_node(ln, one_minus));
    }
    case FusionVariant::kCrossThenConcat:
      return cross_then_concat_logits(tape, seq, notes, statics, cfg);
    case FusionVariant::kConcatThenCross:
      return concat_then_cross_logits(tape, seq, notes, statics, cfg);
  }
  throw std::invalid_argument("fused_logits: unknown fusion variant");
}

}  // namespace chronotoken
