#pragma once

#include <memory>
#include <string>
#include <vector>

#include "chronotoken/attention.hpp"

namespace chronotoken {

// Node ids of the gate activations, collected when a probe is supplied so
// tests can check the (0,1) range without re-deriving the recurrence.
struct GruProbe {
  std::vector<int> update_gates;
  std::vector<int> reset_gates;
};

// Stacked GRU over the embedded, time-sorted tokens followed by attention
// pooling with a learned query. Shares embed_tokens with the transformer so
// both consume the identical tokenization.
//   z = sigmoid(x Wz + h Uz + bz)
//   r = sigmoid(x Wr + h Ur + br)
//   hc = tanh(x Wh + (r . h) Uh + bh)
//   h' = (1 - z) . h + z . hc
template <typename T>
int gru_logits(Tape<T>& tape, const TokenSequence& seq,
               const std::vector<double>& statics, const ModelConfig& cfg,
               GruProbe* probe = nullptr) {
  const int L = seq.length();
  int x = embed_tokens(tape, seq, cfg);

  std::vector<int> layer_states;
  for (int l = 0; l < cfg.gru_layers; ++l) {
    std::string p = "gru" + std::to_string(l);
    int wz = tape.param(p + ".wz"), wr = tape.param(p + ".wr"), wh = tape.param(p + ".wh");
    int uz = tape.param(p + ".uz"), ur = tape.param(p + ".ur"), uh = tape.param(p + ".uh");
    int bz = tape.param(p + ".bz"), br = tape.param(p + ".br"), bh = tape.param(p + ".bh");
    int h = tape.param(p + ".h0");
    layer_states.clear();
    for (int t = 0; t < L; ++t) {
      int xt = tape.slice_rows(x, t, t + 1);
      int z = tape.sigmoid_(tape.add_row_broadcast(
          tape.add(tape.matmul(xt, wz), tape.matmul(h, uz)), bz));
      int r = tape.sigmoid_(tape.add_row_broadcast(
          tape.add(tape.matmul(xt, wr), tape.matmul(h, ur)), br));
      if (probe != nullptr && l == 0) {
        probe->update_gates.push_back(z);
        probe->reset_gates.push_back(r);
      }
      int hc = tape.tanh_(tape.add_row_broadcast(
          tape.add(tape.matmul(xt, wh), tape.matmul(tape.mul(r, h), uh)), bh));
      int keep = tape.mul(tape.scale_add_const(z, T(-1), T(1)), h);
      h = tape.add(keep, tape.mul(z, hc));
      layer_states.push_back(h);
    }
    if (L == 0) {
      // No events: the learned initial state is the only state.
      layer_states.push_back(h);
    }
    x = tape.concat_rows(layer_states);
  }

  // Attention pooling over the top layer's hidden states.
  int states = x;
  int q = tape.param("gru.pool.q");
  int pooled = tape.attention(q, states, states,
                              std::make_shared<const MaskPlan>(
                                  dense_plan(tape.val(states).rows)));
  int sp = static_projection(tape, statics, cfg);
  std::vector<int> rows(kNumTasks, pooled);
  int stacked = tape.concat_rows(rows);
  return readout_heads(tape, stacked, sp, "gru.heads");
}

}  // namespace chronotoken
