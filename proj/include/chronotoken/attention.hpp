#pragma once

#include <memory>
#include <string>
#include <vector>

#include "chronotoken/embedding.hpp"

namespace chronotoken {

// Projected static features: a single affine map shared by every head.
template <typename T>
int static_projection(Tape<T>& tape, const std::vector<double>& statics,
                      const ModelConfig& cfg) {
  if (static_cast<int>(statics.size()) != cfg.static_dim) {
    throw std::invalid_argument("static features: expected " +
                                std::to_string(cfg.static_dim) + " values");
  }
  Mat<T> s(1, cfg.static_dim);
  for (int i = 0; i < cfg.static_dim; ++i) s[0][i] = static_cast<T>(statics[i]);
  int leaf = tape.leaf(std::move(s));
  return tape.add_row_broadcast(tape.matmul(leaf, tape.param("static_proj.w")),
                                tape.param("static_proj.b"));
}

// One multi-head attention block with relative-position bias. Heads are
// column slices of the shared Q/K/V projections; each head reads its own
// bias column.
template <typename T>
int attention_block(Tape<T>& tape, int x, const std::shared_ptr<const MaskPlan>& plan,
                    const ModelConfig& cfg, const std::string& prefix) {
  const int d = cfg.attn.d;
  const int heads = cfg.attn.heads;
  const int dk = d / heads;
  int q = tape.add_row_broadcast(tape.matmul(x, tape.param(prefix + ".attn.wq")),
                                 tape.param(prefix + ".attn.bq"));
  // No key bias: a shared offset on every key cancels in the softmax.
  int k = tape.matmul(x, tape.param(prefix + ".attn.wk"));
  int v = tape.add_row_broadcast(tape.matmul(x, tape.param(prefix + ".attn.wv")),
                                 tape.param(prefix + ".attn.bv"));
  std::string bias = cfg.ablation.no_relpos ? "" : prefix + ".rel_bias";
  std::vector<int> head_outs;
  for (int h = 0; h < heads; ++h) {
    int qh = heads == 1 ? q : tape.slice_cols(q, h * dk, (h + 1) * dk);
    int kh = heads == 1 ? k : tape.slice_cols(k, h * dk, (h + 1) * dk);
    int vh = heads == 1 ? v : tape.slice_cols(v, h * dk, (h + 1) * dk);
    head_outs.push_back(
        tape.attention(qh, kh, vh, plan, bias, h, prefix + ".attn.gk_bias"));
  }
  int att = heads == 1 ? head_outs[0] : tape.concat_cols(head_outs);
  return tape.add_row_broadcast(tape.matmul(att, tape.param(prefix + ".attn.wo")),
                                tape.param(prefix + ".attn.bo"));
}

// Pre-norm encoder stack with GELU feed-forward of width 4d, closed by a
// final layer norm.
template <typename T>
int encoder_stack(Tape<T>& tape, int x, const std::shared_ptr<const MaskPlan>& plan,
                  const ModelConfig& cfg) {
  const double rate = cfg.attn.dropout;
  for (int l = 0; l < cfg.attn.layers; ++l) {
    std::string prefix = "enc" + std::to_string(l);
    int normed = tape.layernorm(x, tape.param(prefix + ".ln1.g"),
                                tape.param(prefix + ".ln1.b"));
    int att = attention_block(tape, normed, plan, cfg, prefix);
    x = tape.add(x, tape.dropout(att, rate));
    int normed2 = tape.layernorm(x, tape.param(prefix + ".ln2.g"),
                                 tape.param(prefix + ".ln2.b"));
    int h = tape.gelu_(
        tape.add_row_broadcast(tape.matmul(normed2, tape.param(prefix + ".ffn.w1")),
                               tape.param(prefix + ".ffn.b1")));
    int f = tape.add_row_broadcast(tape.matmul(h, tape.param(prefix + ".ffn.w2")),
                                   tape.param(prefix + ".ffn.b2"));
    x = tape.add(x, tape.dropout(f, rate));
  }
  return tape.layernorm(x, tape.param("final_ln.g"), tape.param("final_ln.b"));
}

// Reads n_global rows, concatenates each with the projected statics and any
// extra per-task context, and applies that task's affine head. Returns a
// 1 x n_global row of logits.
template <typename T>
int readout_heads(Tape<T>& tape, int x, int static_proj, const std::string& head_name,
                  int extra = -1) {
  int bias = tape.param(head_name + ".b");
  std::vector<int> logits;
  for (int k = 0; k < kNumTasks; ++k) {
    std::vector<int> pieces{tape.slice_rows(x, k, k + 1), static_proj};
    if (extra >= 0) pieces.insert(pieces.begin() + 1, extra);
    int h = tape.concat_cols(pieces);
    int w = tape.gather_rows(head_name + ".w", {k});
    int dot = tape.matmul(h, w, false, true);
    logits.push_back(tape.add(dot, tape.slice_cols(bias, k, k + 1)));
  }
  return tape.concat_cols(logits);
}

// Sliding-window mask over the token positions with the global outcome
// tokens (plus any other global rows) in front.
inline std::shared_ptr<const MaskPlan> token_window_plan(const TokenSequence& seq,
                                                         int global_prefix,
                                                         const ModelConfig& cfg) {
  return std::make_shared<const MaskPlan>(build_window_plan(
      seq.positions, global_prefix, cfg.attn.window_radius, cfg.clip_k));
}

// Unimodal transformer forward: global outcome tokens, embedded events,
// encoder stack, per-task heads.
template <typename T>
int transformer_logits(Tape<T>& tape, const TokenSequence& seq,
                       const std::vector<double>& statics, const ModelConfig& cfg) {
  int x = embed_tokens(tape, seq, cfg);
  int g = tape.param("global_tokens");
  int joint = tape.concat_rows({g, x});
  auto plan = token_window_plan(seq, cfg.attn.n_global, cfg);
  int enc = encoder_stack(tape, joint, plan, cfg);
  int sp = static_projection(tape, statics, cfg);
  return readout_heads(tape, enc, sp, "heads");
}

}  // namespace chronotoken
