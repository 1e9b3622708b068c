#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "chronotoken/config.hpp"
#include "chronotoken/tape.hpp"
#include "chronotoken/tokenizer.hpp"

namespace chronotoken {

// Learnable time embedding: one affine component and d_t-1 sinusoidal
// components with learnable frequency and phase.
struct Time2VecParams {
  double w_np = 0.0;
  double b_np = 0.0;
  std::vector<double> w_p;
  std::vector<double> b_p;

  int dim() const { return 1 + static_cast<int>(w_p.size()); }
};

inline std::vector<double> time2vec(double t, const Time2VecParams& p) {
  if (!std::isfinite(t)) throw std::invalid_argument("time2vec: non-finite t");
  if (p.w_p.size() != p.b_p.size()) {
    throw std::invalid_argument("time2vec: w_p/b_p size mismatch");
  }
  std::vector<double> out(p.dim());
  out[0] = p.w_np * t + p.b_np;
  for (size_t i = 0; i < p.w_p.size(); ++i) {
    out[i + 1] = std::sin(p.w_p[i] * t + p.b_p[i]);
  }
  return out;
}

// Clipped relative distance between two positional indices, shifted into
// [0, 2k]. Distances are measured on the token sequence's dense timestamp
// ranks, so co-timed tokens are at distance zero regardless of array order.
inline int rel_pos_index(int pos_i, int pos_j, int clip_k) {
  if (clip_k < 1) throw std::invalid_argument("rel_pos_index: clip_k must be >= 1");
  return std::clamp(pos_j - pos_i, -clip_k, clip_k) + clip_k;
}

namespace embed_detail {

// Per-token column of the value seen kappa events earlier on the same
// variable (zero-padded). Feeds the causal conv1d encoder taps.
inline std::vector<double> lagged_values(const TokenSequence& seq, int kappa) {
  const int L = seq.length();
  std::vector<double> out(L, 0.0);
  std::vector<std::vector<int>> occurrences;
  for (int i = 0; i < L; ++i) {
    int v = seq.variable_ids[i];
    if (v >= static_cast<int>(occurrences.size())) occurrences.resize(v + 1);
    occurrences[v].push_back(i);
    int o = static_cast<int>(occurrences[v].size()) - 1;
    if (o - kappa >= 0) out[i] = seq.values[occurrences[v][o - kappa]];
  }
  return out;
}

template <typename T>
std::vector<T> to_scalar(const std::vector<double>& v) {
  return std::vector<T>(v.begin(), v.end());
}

}  // namespace embed_detail

// Time2Vec over the whole sequence: column 0 affine in t, the rest
// sin(w*t + b). Tensors t2v.w / t2v.b are 1 x d with column 0 holding the
// non-periodic component.
template <typename T>
int time2vec_rows(Tape<T>& tape, const std::vector<double>& times, int d) {
  const int L = static_cast<int>(times.size());
  int w = tape.param("t2v.w");
  int b = tape.param("t2v.b");
  int rep = tape.repeat_row(w, L);
  int scaled = tape.mul_col_broadcast(rep, embed_detail::to_scalar<T>(times));
  int pre = tape.add_row_broadcast(scaled, b);
  int lin = tape.slice_cols(pre, 0, 1);
  int per = tape.sin_(tape.slice_cols(pre, 1, d));
  return tape.concat_cols({lin, per});
}

// Variable-specific value encoding. All kinds map the scalar normalized
// value to a d-vector with parameters owned by the token's variable:
//   linear       tanh(w_v * x + b_v)
//   conv1d       tanh(sum_kappa w_v[kappa] * x_lag(kappa) + b_v), causal taps
//   transformer  linear lift, then single-head self-attention within the
//                variable's own tokens plus residual and layer norm
// With the shared-encoder ablation every token uses row 0.
template <typename T>
int encode_values(Tape<T>& tape, const TokenSequence& seq, const ModelConfig& cfg) {
  const int L = seq.length();
  const int d = cfg.attn.d;
  std::vector<int> enc_rows(L);
  for (int i = 0; i < L; ++i) {
    enc_rows[i] = cfg.ablation.shared_encoder ? 0 : seq.variable_ids[i];
  }
  const int taps = cfg.encoder_kind == EncoderKind::kConv1d ? cfg.conv_kernel : 1;
  int pre = -1;
  for (int kappa = 0; kappa < taps; ++kappa) {
    std::vector<double> col =
        kappa == 0 ? seq.values : embed_detail::lagged_values(seq, kappa);
    int w = tape.gather_rows("venc.w" + std::to_string(kappa), enc_rows);
    int term = tape.mul_col_broadcast(w, embed_detail::to_scalar<T>(col));
    pre = (pre < 0) ? term : tape.add(pre, term);
  }
  pre = tape.add(pre, tape.gather_rows("venc.b", enc_rows));
  int encoded = tape.tanh_(pre);

  if (cfg.encoder_kind != EncoderKind::kTransformer || L == 0) return encoded;

  // Group tokens by variable and run the per-variable attention block.
  std::vector<std::vector<int>> groups(cfg.vocab_size);
  for (int i = 0; i < L; ++i) groups[seq.variable_ids[i]].push_back(i);
  std::vector<int> parts;
  std::vector<int> order;
  for (int v = 0; v < cfg.vocab_size; ++v) {
    if (groups[v].empty()) continue;
    int row = cfg.ablation.shared_encoder ? 0 : v;
    int sub = tape.select_rows(encoded, groups[v]);
    int n = static_cast<int>(groups[v].size());
    int q = tape.matmul_param_row(sub, "venc.attn.wq", row, d, d);
    int k = tape.matmul_param_row(sub, "venc.attn.wk", row, d, d);
    int val = tape.matmul_param_row(sub, "venc.attn.wv", row, d, d);
    int att = tape.attention(q, k, val, std::make_shared<MaskPlan>(dense_plan(n)));
    int res = tape.add(sub, att);
    int ln = tape.layernorm(res, tape.gather_rows("venc.ln.g", {row}),
                            tape.gather_rows("venc.ln.b", {row}));
    parts.push_back(ln);
    order.insert(order.end(), groups[v].begin(), groups[v].end());
  }
  int stacked = tape.concat_rows(parts);
  std::vector<int> inverse(L);
  for (int i = 0; i < L; ++i) inverse[order[i]] = i;
  return tape.select_rows(stacked, inverse);
}

// Token embedding: variable-specific value encoding plus Time2Vec plus a
// learned absolute-position table, summed (ablations drop terms).
template <typename T>
int embed_tokens(Tape<T>& tape, const TokenSequence& seq, const ModelConfig& cfg) {
  const int L = seq.length();
  for (int i = 0; i < L; ++i) {
    if (seq.variable_ids[i] < 0 || seq.variable_ids[i] >= cfg.vocab_size) {
      throw std::invalid_argument("embed_tokens: unknown variable_id " +
                                  std::to_string(seq.variable_ids[i]));
    }
    if (seq.positions[i] >= cfg.max_len) {
      throw std::invalid_argument("embed_tokens: position " +
                                  std::to_string(seq.positions[i]) +
                                  " >= max_len " + std::to_string(cfg.max_len));
    }
  }
  int x = encode_values(tape, seq, cfg);
  if (!cfg.ablation.no_time2vec) {
    x = tape.add(x, time2vec_rows(tape, seq.times, cfg.attn.d));
  }
  if (!cfg.ablation.no_abs_pos) {
    x = tape.add(x, tape.gather_rows("abs_pos", seq.positions));
  }
  return x;
}

}  // namespace chronotoken
