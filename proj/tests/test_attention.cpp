#include <doctest.h>

#include "test_util.hpp"

using namespace chronotoken;
using ctest::tiny_model_config;

TEST_CASE("windowed output equals dense attention when the window covers the span") {
  Rng rng(41);
  for (int trial = 0; trial < 60; ++trial) {
    int g = rng.uniform_int(3);
    int n = 1 + rng.uniform_int(10);
    std::vector<int> pos(n);
    for (auto& p : pos) p = rng.uniform_int(6);
    std::sort(pos.begin(), pos.end());
    int span = pos.back() - pos.front();
    int w = span + rng.uniform_int(3) + (span == 0 ? 1 : 0);
    int clip = 2;
    int L = g + n;

    ParamStore<double> store;
    auto& bias = store.add("bias", 2 * clip + 1, 1);
    for (auto& b : bias.a) b = 0.2 * rng.normal();
    Mat<double> q(L, 5), k(L, 5), v(L, 4);
    for (auto& x : q.a) x = rng.normal();
    for (auto& x : k.a) x = rng.normal();
    for (auto& x : v.a) x = rng.normal();

    MaskPlan windowed = build_window_plan(pos, g, w, clip);
    MaskPlan everything = build_window_plan(pos, g, 1 << 20, clip);

    Tape<double> t(&store, nullptr);
    int out = t.attention(t.leaf(q), t.leaf(k), t.leaf(v),
                          std::make_shared<const MaskPlan>(windowed), "bias", 0);
    Mat<double> dense = ctest::ref_attention(q, k, v, everything, &bias, 0);
    for (int i = 0; i < L; ++i)
      for (int c = 0; c < 4; ++c)
        CHECK(std::abs(t.val(out)[i][c] - dense[i][c]) < 1e-6);
  }
}

TEST_CASE("single key: output equals that value row; tight window masks the rest") {
  ParamStore<double> store;
  Tape<double> t(&store, nullptr);

  // Softmax over one key is 1, so the output is the value row itself.
  Mat<double> q(1, 3), k(1, 3), v(1, 4);
  Rng rng(43);
  for (auto& x : q.a) x = rng.normal();
  for (auto& x : k.a) x = rng.normal();
  for (auto& x : v.a) x = rng.normal();
  int out = t.attention(t.leaf(q), t.leaf(k), t.leaf(v),
                        std::make_shared<const MaskPlan>(dense_plan(1)));
  for (int c = 0; c < 4; ++c) CHECK(t.val(out)[0][c] == doctest::Approx(v[0][c]));

  // Five tokens at positions 0..4, w=1, no globals: the middle query sees
  // exactly positions {1,2,3}. One-hot values expose the weights.
  std::vector<int> pos{0, 1, 2, 3, 4};
  MaskPlan plan = build_window_plan(pos, 0, 1, 2);
  Mat<double> q5(5, 2), k5(5, 2), v5(5, 5);
  for (auto& x : q5.a) x = rng.normal();
  for (auto& x : k5.a) x = rng.normal();
  for (int i = 0; i < 5; ++i) v5[i][i] = 1.0;  // weight on key j lands in column j
  Tape<double> t2(&store, nullptr);
  int out5 = t2.attention(t2.leaf(q5), t2.leaf(k5), t2.leaf(v5),
                          std::make_shared<const MaskPlan>(plan));
  const Mat<double>& w5 = t2.val(out5);
  CHECK(w5[2][0] == 0.0);  // masked keys carry exactly zero weight
  CHECK(w5[2][4] == 0.0);
  CHECK(w5[2][1] > 0.0);
  CHECK(w5[2][2] > 0.0);
  CHECK(w5[2][3] > 0.0);
  CHECK(w5[2][1] + w5[2][2] + w5[2][3] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("transformer forward emits nine logits for any sequence length") {
  ModelConfig cfg = tiny_model_config();
  ParamStore<double> params = build_params<double>(cfg, 51);
  Rng rng(51);
  for (int L : {0, 1, 5, 17}) {
    ctest::TapeHarness h;
    TokenSequence seq = ctest::random_sequence(rng, L, cfg.vocab_size);
    std::vector<double> statics(cfg.static_dim, 0.3);
    Tape<double> t(&params, nullptr);
    int logits = transformer_logits(t, seq, statics, cfg);
    CHECK(t.val(logits).rows == 1);
    CHECK(t.val(logits).cols == kNumTasks);
  }
}

TEST_CASE("zero-initialized heads leave only the head bias") {
  ModelConfig cfg = tiny_model_config();
  ParamStore<double> params = build_params<double>(cfg, 52);
  params.at("heads.w").fill(0.0);
  for (int k = 0; k < kNumTasks; ++k) params.at("heads.b")[0][k] = 0.1 * (k + 1);
  Rng rng(52);
  TokenSequence seq = ctest::random_sequence(rng, 6, cfg.vocab_size);
  std::vector<double> statics(cfg.static_dim, -0.4);
  Tape<double> t(&params, nullptr);
  int logits = transformer_logits(t, seq, statics, cfg);
  for (int k = 0; k < kNumTasks; ++k) {
    CHECK(t.val(logits)[0][k] == doctest::Approx(0.1 * (k + 1)).epsilon(1e-12));
  }
}

TEST_CASE("flatten/unflatten bijection and the analytic parameter count") {
  ModelConfig cfg = tiny_model_config(/*d=*/8, /*vocab=*/3);
  cfg.clip_k = 2;
  ParamStore<double> params = build_params<double>(cfg, 53);

  const int d = 8, V = 3, k = 2, heads = 1, layers = 1;
  const int S = cfg.static_dim, max_len = cfg.max_len, n_global = kNumTasks;
  size_t expected = 0;
  expected += 2 * d;                      // time2vec w, b
  expected += 2 * V * d;                  // linear value encoders w, b
  expected += static_cast<size_t>(max_len) * d;  // absolute position table
  expected += static_cast<size_t>(n_global) * d; // global outcome tokens
  expected += layers * (2 * d                    // ln1
                        + 4 * d * d + 3 * d      // qkvo projections, q/v/o biases
                        + heads                  // global-key logit bias
                        + (2 * k + 1) * heads    // relative position bias
                        + 2 * d                  // ln2
                        + d * 4 * d + 4 * d      // ffn in
                        + 4 * d * d + d);        // ffn out
  expected += 2 * d;                      // final layer norm
  expected += S * d + d;                  // static projection
  expected += kNumTasks * 2 * d + kNumTasks;  // heads
  CHECK(params.total_size() == expected);

  // Round trip and the zero-vector case.
  Rng rng(54);
  std::vector<double> flat = params.flatten();
  for (auto& v : flat) v = rng.normal();
  params.unflatten(flat);
  CHECK(params.flatten() == flat);

  std::vector<double> zeros(flat.size(), 0.0);
  params.unflatten(zeros);
  for (const auto& name : params.names()) {
    for (double v : params.at(name).a) CHECK(v == 0.0);
  }
  zeros.pop_back();
  CHECK_THROWS_AS(params.unflatten(zeros), std::invalid_argument);
}

TEST_CASE("grad_check harness: quadratic loss is exact, step size matters") {
  std::vector<double> p(40);
  Rng rng(55);
  // Coordinates bounded away from zero keep cancellation noise below the
  // 1e-9 bar for the exactly-quadratic case.
  for (auto& v : p) v = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.5, 1.5);
  auto loss = [](const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += 0.5 * v * v;
    return s;
  };
  auto grad = [](const std::vector<double>& x) { return x; };
  auto r = grad_check(loss, grad, p, 40, 1e-5, 1);
  CHECK(r.max_rel_err < 1e-9);

  // A fourth-power term makes truncation error visible at large steps.
  auto loss4 = [](const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += 0.25 * v * v * v * v + std::sin(3.0 * v);
    return s;
  };
  auto grad4 = [](const std::vector<double>& x) {
    std::vector<double> g(x.size());
    for (size_t i = 0; i < x.size(); ++i) g[i] = x[i] * x[i] * x[i] + 3.0 * std::cos(3.0 * x[i]);
    return g;
  };
  auto fine = grad_check(loss4, grad4, p, 40, 1e-5, 2);
  auto coarse = grad_check(loss4, grad4, p, 40, 1e-2, 2);
  CHECK(coarse.max_rel_err > fine.max_rel_err);
}

TEST_CASE("full transformer BCE gradient check; coarse steps hurt") {
  Rng rng(56);
  ModelConfig cfg = tiny_model_config();
  std::vector<ModelInput<double>> batch;
  batch.push_back(ctest::random_input(rng, cfg, 9, 0));
  batch.push_back(ctest::random_input(rng, cfg, 4, 0));
  auto r = ctest::model_grad_check(cfg, batch, 220);
  CHECK(r.max_rel_err < 1e-4);

  // Same loss, step 1e-2: truncation error dominates the fine-step run.
  auto coarse = ctest::model_grad_check(cfg, batch, 220, 1e-2);
  CHECK(coarse.max_rel_err > r.max_rel_err);
}

TEST_CASE("multi-head attention passes the same checks") {
  Rng rng(57);
  ModelConfig cfg = tiny_model_config(/*d=*/8, /*vocab=*/3, /*layers=*/2, /*heads=*/2);
  std::vector<ModelInput<double>> batch{ctest::random_input(rng, cfg, 7, 0)};
  auto r = ctest::model_grad_check(cfg, batch, 180);
  CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("eval forwards are bit-identical; training dropout perturbs") {
  ModelConfig cfg = tiny_model_config();
  cfg.attn.dropout = 0.3;
  ParamStore<double> params = build_params<double>(cfg, 58);
  Rng rng(58);
  TokenSequence seq = ctest::random_sequence(rng, 8, cfg.vocab_size);
  std::vector<double> statics(cfg.static_dim, 0.1);

  Tape<double> e1(&params, nullptr, false, 1);
  Tape<double> e2(&params, nullptr, false, 2);
  int l1 = transformer_logits(e1, seq, statics, cfg);
  int l2 = transformer_logits(e2, seq, statics, cfg);
  for (int k = 0; k < kNumTasks; ++k) {
    CHECK(e1.val(l1)[0][k] == e2.val(l2)[0][k]);
  }

  Tape<double> tr(&params, nullptr, true, 3);
  int lt = transformer_logits(tr, seq, statics, cfg);
  bool differs = false;
  for (int k = 0; k < kNumTasks; ++k) {
    if (tr.val(lt)[0][k] != e1.val(l1)[0][k]) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("permuting co-timed tokens leaves the logits unchanged") {
  Rng rng(59);
  ModelConfig cfg = tiny_model_config();
  ParamStore<double> params = build_params<double>(cfg, 60);
  for (int trial = 0; trial < 20; ++trial) {
    TokenSequence seq = ctest::random_sequence(rng, 10, cfg.vocab_size, 3);
    TokenSequence perm = ctest::permute_within_positions(seq, rng);
    std::vector<double> statics(cfg.static_dim, 0.2);
    Tape<double> ta(&params, nullptr);
    Tape<double> tb(&params, nullptr);
    int la = transformer_logits(ta, seq, statics, cfg);
    int lb = transformer_logits(tb, perm, statics, cfg);
    for (int k = 0; k < kNumTasks; ++k) {
      CHECK(std::abs(ta.val(la)[0][k] - tb.val(lb)[0][k]) < 1e-6);
    }
  }
}
