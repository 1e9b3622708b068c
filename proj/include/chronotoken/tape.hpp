#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "chronotoken/mathutil.hpp"
#include "chronotoken/params.hpp"
#include "chronotoken/rng.hpp"
#include "chronotoken/tensor.hpp"

namespace chronotoken {

// Attention mask: keys/queries below global_prefix are global (attend all,
// attended by all); each non-global query sees the globals plus a contiguous
// range of non-global keys whose positions fall inside the window. Relative
// position bias applies only to pairs where both sides are non-global; pairs
// involving a global row carry no bias.
struct MaskPlan {
  bool dense = true;
  int n_keys = 0;
  int global_prefix = 0;
  int clip_k = 0;
  std::vector<int> positions;              // non-global block, non-decreasing
  std::vector<std::pair<int, int>> ranges; // per non-global query, absolute [lo, hi)
};

// Self-attention plan over [global_prefix rows | tokens sorted by position].
inline MaskPlan build_window_plan(const std::vector<int>& positions, int global_prefix,
                                  int window, int clip_k) {
  for (size_t i = 1; i < positions.size(); ++i) {
    if (positions[i] < positions[i - 1]) {
      throw std::invalid_argument("build_window_plan: positions must be non-decreasing");
    }
  }
  MaskPlan plan;
  plan.dense = false;
  plan.global_prefix = global_prefix;
  plan.n_keys = global_prefix + static_cast<int>(positions.size());
  plan.clip_k = clip_k;
  plan.positions = positions;
  plan.ranges.resize(positions.size());
  const int n = static_cast<int>(positions.size());
  int lo = 0, hi = 0;
  for (int i = 0; i < n; ++i) {
    while (lo < n && positions[lo] < positions[i] - window) ++lo;
    if (hi < i) hi = i;
    while (hi < n && positions[hi] <= positions[i] + window) ++hi;
    plan.ranges[i] = {global_prefix + lo, global_prefix + hi};
  }
  return plan;
}

inline MaskPlan dense_plan(int n_keys) {
  MaskPlan plan;
  plan.dense = true;
  plan.n_keys = n_keys;
  return plan;
}

// Reverse-mode autodiff over matrix operations. Each forward op appends a
// node holding its value and a closure that scatters the node's gradient
// into its inputs. Parameters live in an external ParamStore; their
// gradients accumulate into a parallel store so batches can share buffers.
template <typename T>
class Tape {
 public:
  Tape(const ParamStore<T>* params, ParamStore<T>* grads, bool training = false,
       uint64_t dropout_seed = 0)
      : params_(params), grads_(grads), training_(training), rng_(dropout_seed) {}

  // ---- leaves ----

  int leaf(Mat<T> v) { return push(std::move(v), nullptr); }

  int param(const std::string& name) {
    const Mat<T>& src = params_->at(name);
    Mat<T> v = src;
    int id = push(std::move(v), nullptr);
    nodes_[id].back = [id, name](Tape& t) {
      if (t.grads_ == nullptr) return;
      Mat<T>& g = t.grads_->at(name);
      const Mat<T>& ng = t.nodes_[id].grad;
      for (size_t i = 0; i < g.size(); ++i) g.a[i] += ng.a[i];
    };
    return id;
  }

  // Rows of a stored tensor; the table itself never becomes a dense node.
  int gather_rows(const std::string& name, std::vector<int> rows) {
    const Mat<T>& table = params_->at(name);
    Mat<T> v(static_cast<int>(rows.size()), table.cols);
    for (size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] < 0 || rows[i] >= table.rows) {
        throw std::out_of_range("gather_rows(" + name + "): row " +
                                std::to_string(rows[i]) + " out of [0," +
                                std::to_string(table.rows) + ")");
      }
      std::copy(table[rows[i]], table[rows[i]] + table.cols, v[i]);
    }
    int id = push(std::move(v), nullptr);
    auto rows_ptr = std::make_shared<std::vector<int>>(std::move(rows));
    nodes_[id].back = [id, name, rows_ptr](Tape& t) {
      if (t.grads_ == nullptr) return;
      Mat<T>& g = t.grads_->at(name);
      const Mat<T>& ng = t.nodes_[id].grad;
      for (size_t i = 0; i < rows_ptr->size(); ++i) {
        T* dst = g[(*rows_ptr)[i]];
        const T* src = ng[static_cast<int>(i)];
        for (int c = 0; c < g.cols; ++c) dst[c] += src[c];
      }
    };
    return id;
  }

  // ---- linear algebra ----

  int matmul(int a, int b, bool trans_a = false, bool trans_b = false) {
    Mat<T> v = matmul_value(nodes_[a].val, nodes_[b].val, trans_a, trans_b);
    int id = push(std::move(v), nullptr);
    nodes_[id].back = [id, a, b, trans_a, trans_b](Tape& t) {
      const Mat<T>& g = t.nodes_[id].grad;
      const Mat<T>& av = t.nodes_[a].val;
      const Mat<T>& bv = t.nodes_[b].val;
      // dA and dB for each transpose combination.
      if (!trans_a && !trans_b) {
        gemm_nt_acc(g, bv, t.grad_buf(a));
        gemm_tn_acc(av, g, t.grad_buf(b));
      } else if (!trans_a && trans_b) {
        gemm_nn_acc(g, bv, t.grad_buf(a));
        gemm_tn_acc(g, av, t.grad_buf(b));
      } else if (trans_a && !trans_b) {
        gemm_nt_acc(bv, g, t.grad_buf(a));
        gemm_nn_acc(av, g, t.grad_buf(b));
      } else {
        Mat<T> da = matmul_value(bv, g, true, true);
        Mat<T> db = matmul_value(g, av, true, true);
        Mat<T>& ga = t.grad_buf(a);
        for (size_t i = 0; i < ga.size(); ++i) ga.a[i] += da.a[i];
        Mat<T>& gb = t.grad_buf(b);
        for (size_t i = 0; i < gb.size(); ++i) gb.a[i] += db.a[i];
      }
    };
    return id;
  }

  // x (n x d_in) times a weight stored as one row of `name`, viewed d_in x d_out.
  int matmul_param_row(int x, const std::string& name, int row, int d_in, int d_out) {
    const Mat<T>& table = params_->at(name);
    if (table.cols != d_in * d_out || row < 0 || row >= table.rows) {
      throw std::invalid_argument("matmul_param_row: bad view of " + name);
    }
    const Mat<T>& xv = nodes_[x].val;
    if (xv.cols != d_in) throw std::invalid_argument("matmul_param_row: dim mismatch");
    const T* w = table[row];
    Mat<T> v(xv.rows, d_out);
    for (int i = 0; i < xv.rows; ++i) {
      for (int p = 0; p < d_in; ++p) {
        T xa = xv[i][p];
        if (xa == T(0)) continue;
        const T* wrow = w + static_cast<size_t>(p) * d_out;
        for (int j = 0; j < d_out; ++j) v[i][j] += xa * wrow[j];
      }
    }
    int id = push(std::move(v), nullptr);
    nodes_[id].back = [id, x, name, row, d_in, d_out](Tape& t) {
      const Mat<T>& g = t.nodes_[id].grad;
      const Mat<T>& xv = t.nodes_[x].val;
      const T* w = t.params_->at(name)[row];
      Mat<T>& gx = t.grad_buf(x);
      for (int i = 0; i < xv.rows; ++i) {
        for (int p = 0; p < d_in; ++p) {
          const T* wrow = w + static_cast<size_t>(p) * d_out;
          T acc = T(0);
          for (int j = 0; j < d_out; ++j) acc += g[i][j] * wrow[j];
          gx[i][p] += acc;
        }
      }
      if (t.grads_ != nullptr) {
        T* gw = t.grads_->at(name)[row];
        for (int p = 0; p < d_in; ++p) {
          T* gwrow = gw + static_cast<size_t>(p) * d_out;
          for (int i = 0; i < xv.rows; ++i) {
            T xa = xv[i][p];
            if (xa == T(0)) continue;
            const T* grow = g[i];
            for (int j = 0; j < d_out; ++j) gwrow[j] += xa * grow[j];
          }
        }
      }
    };
    return id;
  }

  // ---- elementwise ----

  int add(int a, int b) {
    check_same_shape(a, b, "add");
    Mat<T> v = nodes_[a].val;
    const Mat<T>& bv = nodes_[b].val;
    for (size_t i = 0; i < v.size(); ++i) v.a[i] += bv.a[i];
    int id = push(std::move(v), nullptr);
    nodes_[id].back = [id, a, b](Tape& t) {
      const Mat<T>& g = t.nodes_[id].grad;
      Mat<T>& ga = t.grad_buf(a);
      for (size_t i = 0; i < g.size(); ++i) ga.a[i] += g.a[i];
      Mat<T>& gb = t.grad_buf(b);
      for (size_t i = 0; i < g.size(); ++i) gb.a[i] += g.a[i];
    };
    return id;
  }

  // a (n x c) + b (1 x c) broadcast over rows.
  int add_row_broadcast(int a, int b) {
    const Mat<T>& av = nodes_[a].val;
    const Mat<T>& bv = nodes_[b].val;
    if (bv.rows != 1 || bv.cols != av.cols) {
      throw std::invalid_argument("add_row_broadcast: need 1 x cols");
    }
    Mat<T> v = av;
    for (int i = 0; i < v.rows; ++i)
      for (int c = 0; c < v.cols; ++c) v[i][c] += bv[0][c];
    int id = push(std::move(v), nullptr);
    nodes_[id].back = [id, a, b](Tape& t) {
      const Mat<T>& g = t.nodes_[id].grad;
      Mat<T>& ga = t.grad_buf(a);
      for (size_t i = 0; i < g.size(); ++i) ga.a[i] += g.a[i];
      Mat<T>& gb = t.grad_buf(b);
      for (int i = 0; i < g.rows; ++i)
        for (int c = 0; c < g.cols; ++c) gb[0][c] += g[i][c];
    };
    return id;
  }

  int mul(int a, int b) {
    check_same_shape(a, b, "mul");
    Mat<T> v = nodes_[a].val;
    const Mat<T>& bv = nodes_[b].val;
    for (size_t i = 0; i < v.size(); ++i) v.a[i] *= bv.a[i];
    int id = push(std::move(v), nullptr);
    nodes_[id].back = [id, a, b](Tape& t) {
      const Mat<T>& g = t.nodes_[id].grad;
      const Mat<T>& av = t.nodes_[a].val;
      const Mat<T>& bv = t.nodes_[b].val;
      Mat<T>& ga = t.grad_buf(a);
      for (size_t i = 0; i < g.size(); ++i) ga.a[i] += g.a[i] * bv.a[i];
      Mat<T>& gb = t.grad_buf(b);
      for (size_t i = 0; i < g.size(); ++i) gb.a[i] += g.a[i] * av.a[i];
    };
    return id;
  }

  // Multiplies row i by the constant col[i]; col carries no gradient.
  int mul_col_broadcast(int a, std::vector<T> col) {
    const Mat<T>& av = nodes_[a].val;
    if (static_cast<int>(col.size()) != av.rows) {
      throw std::invalid_argument("mul_col_broadcast: size mismatch");
    }
    Mat<T> v = av;
    for (int i = 0; i < v.rows; ++i)
      for (int c = 0; c < v.cols; ++c) v[i][c] *= col[i];
    int id = push(std::move(v), nullptr);
    auto col_ptr = std::make_shared<std::vector<T>>(std::move(col));
    nodes_[id].back = [id, a, col_ptr](Tape& t) {
      const Mat<T>& g = t.nodes_[id].grad;
      Mat<T>& ga = t.grad_buf(a);
      for (int i = 0; i < g.rows; ++i)
        for (int c = 0; c < g.cols; ++c) ga[i][c] += g[i][c] * (*col_ptr)[i];
    };
    return id;
  }

  // s * x + c elementwise with scalar constants.
  int scale_add_const(int a, T s, T c) {
    Mat<T> v = nodes_[a].val;
    for (size_t i = 0; i < v.size(); ++i) v.a[i] = s * v.a[i] + c;
    int id = push(std::move(v), nullptr);
    nodes_[id].back = [id, a, s](Tape& t) {
      const Mat<T>& g = t.nodes_[id].grad;
      Mat<T>& ga = t.grad_buf(a);
      for (size_t i = 0; i < g.size(); ++i) ga.a[i] += s * g.a[i];
    };
    return id;
  }

  // x scaled by a 1x1 node.
  int mul_scalar_node(int x, int s) {
    const Mat<T>& sv = nodes_[s].val;
    if (sv.rows != 1 || sv.cols != 1) {
      throw std::invalid_argument("mul_scalar_node: scalar must be 1x1");
    }
    Mat<T> v = nodes_[x].val;
    for (size_t i = 0; i < v.size(); ++i) v.a[i] *= sv.a[0];
    int id = push(std::move(v), nullptr);
    nodes_[id].back = [id, x, s](Tape& t) {
      const Mat<T>& g = t.nodes_[id].grad;
      const Mat<T>& xv = t.nodes_[x].val;
      T sval = t.nodes_[s].val.a[0];
      Mat<T>& gx = t.grad_buf(x);
      for (size_t i = 0; i < g.size(); ++i) gx.a[i] += g.a[i] * sval;
      Mat<T>& gs = t.grad_buf(s);
      T acc = T(0);
      for (size_t i = 0; i < g.size(); ++i) acc += g.a[i] * xv.a[i];
      gs.a[0] += acc;
    };
    return id;
  }

  int tanh_(int a) {
    return unary(a, [](T x) { return std::tanh(x); },
                 [](T x, T y) { (void)x; return T(1) - y * y; });
  }

  int sigmoid_(int a) {
    return unary(a, [](T x) { return stable_sigmoid(x); },
                 [](T x, T y) { (void)x; return y * (T(1) - y); });
  }

  int sin_(int a) {
    return unary(a, [](T x) { return std::sin(x); },
                 [](T x, T y) { (void)y; return std::cos(x); });
  }

  int gelu_(int a) {
    return unary(a, [](T x) { return gelu_value(x); },
                 [](T x, T y) { (void)y; return gelu_derivative(x); });
  }

  // ---- shape ops ----

  int slice_rows(int a, int r0, int r1) {
    const Mat<T>& av = nodes_[a].val;
    if (r0 < 0 || r1 > av.rows || r0 > r1) {
      throw std::invalid_argument("slice_rows: bad range");
    }
    Mat<T> v(r1 - r0, av.cols);
    for (int i = r0; i < r1; ++i) std::copy(av[i], av[i] + av.cols, v[i - r0]);
    int id = push(std::move(v), nullptr);
    nodes_[id].back = [id, a, r0](Tape& t) {
      const Mat<T>& g = t.nodes_[id].grad;
      Mat<T>& ga = t.grad_buf(a);
      for (int i = 0; i < g.rows; ++i)
        for (int c = 0; c < g.cols; ++c) ga[r0 + i][c] += g[i][c];
    };
    return id;
  }

  int slice_cols(int a, int c0, int c1) {
    const Mat<T>& av = nodes_[a].val;
    if (c0 < 0 || c1 > av.cols || c0 > c1) {
      throw std::invalid_argument("slice_cols: bad range");
    }
    Mat<T> v(av.rows, c1 - c0);
    for (int i = 0; i < av.rows; ++i)
      for (int c = c0; c < c1; ++c) v[i][c - c0] = av[i][c];
    int id = push(std::move(v), nullptr);
    nodes_[id].back = [id, a, c0](Tape& t) {
      const Mat<T>& g = t.nodes_[id].grad;
      Mat<T>& ga = t.grad_buf(a);
      for (int i = 0; i < g.rows; ++i)
        for (int c = 0; c < g.cols; ++c) ga[i][c0 + c] += g[i][c];
    };
    return id;
  }

  int select_rows(int a, std::vector<int> rows) {
    const Mat<T>& av = nodes_[a].val;
    Mat<T> v(static_cast<int>(rows.size()), av.cols);
    for (size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] < 0 || rows[i] >= av.rows) {
        throw std::out_of_range("select_rows: index out of range");
      }
      std::copy(av[rows[i]], av[rows[i]] + av.cols, v[static_cast<int>(i)]);
    }
    int id = push(std::move(v), nullptr);
    auto rows_ptr = std::make_shared<std::vector<int>>(std::move(rows));
    nodes_[id].back = [id, a, rows_ptr](Tape& t) {
      const Mat<T>& g = t.nodes_[id].grad;
      Mat<T>& ga = t.grad_buf(a);
      for (size_t i = 0; i < rows_ptr->size(); ++i) {
        const T* src = g[static_cast<int>(i)];
        T* dst = ga[(*rows_ptr)[i]];
        for (int c = 0; c < g.cols; ++c) dst[c] += src[c];
      }
    };
    return id;
  }

  int concat_rows(const std::vector<int>& ids) {
    int cols = -1, rows = 0;
    for (int n : ids) {
      const Mat<T>& v = nodes_[n].val;
      if (cols == -1) cols = v.cols;
      if (v.cols != cols && v.rows > 0) {
        throw std::invalid_argument("concat_rows: column mismatch");
      }
      rows += v.rows;
    }
    if (cols == -1) cols = 0;
    Mat<T> v(rows, cols);
    int off = 0;
    for (int n : ids) {
      const Mat<T>& src = nodes_[n].val;
      for (int i = 0; i < src.rows; ++i)
        std::copy(src[i], src[i] + cols, v[off + i]);
      off += src.rows;
    }
    int id = push(std::move(v), nullptr);
    auto ids_ptr = std::make_shared<std::vector<int>>(ids);
    nodes_[id].back = [id, ids_ptr](Tape& t) {
      const Mat<T>& g = t.nodes_[id].grad;
      int off = 0;
      for (int n : *ids_ptr) {
        Mat<T>& ga = t.grad_buf(n);
        for (int i = 0; i < ga.rows; ++i)
          for (int c = 0; c < g.cols; ++c) ga[i][c] += g[off + i][c];
        off += ga.rows;
      }
    };
    return id;
  }

  int concat_cols(const std::vector<int>& ids) {
    int rows = -1, cols = 0;
    for (int n : ids) {
      const Mat<T>& v = nodes_[n].val;
      if (rows == -1) rows = v.rows;
      if (v.rows != rows) throw std::invalid_argument("concat_cols: row mismatch");
      cols += v.cols;
    }
    if (rows == -1) rows = 0;
    Mat<T> v(rows, cols);
    int off = 0;
    for (int n : ids) {
      const Mat<T>& src = nodes_[n].val;
      for (int i = 0; i < rows; ++i)
        for (int c = 0; c < src.cols; ++c) v[i][off + c] = src[i][c];
      off += src.cols;
    }
    int id = push(std::move(v), nullptr);
    auto ids_ptr = std::make_shared<std::vector<int>>(ids);
    nodes_[id].back = [id, ids_ptr](Tape& t) {
      const Mat<T>& g = t.nodes_[id].grad;
      int off = 0;
      for (int n : *ids_ptr) {
        Mat<T>& ga = t.grad_buf(n);
        for (int i = 0; i < ga.rows; ++i)
          for (int c = 0; c < ga.cols; ++c) ga[i][c] += g[i][off + c];
        off += ga.cols;
      }
    };
    return id;
  }

  int repeat_row(int a, int n) {
    const Mat<T>& av = nodes_[a].val;
    if (av.rows != 1) throw std::invalid_argument("repeat_row: need 1 x cols");
    Mat<T> v(n, av.cols);
    for (int i = 0; i < n; ++i) std::copy(av[0], av[0] + av.cols, v[i]);
    int id = push(std::move(v), nullptr);
    nodes_[id].back = [id, a](Tape& t) {
      const Mat<T>& g = t.nodes_[id].grad;
      Mat<T>& ga = t.grad_buf(a);
      for (int i = 0; i < g.rows; ++i)
        for (int c = 0; c < g.cols; ++c) ga[0][c] += g[i][c];
    };
    return id;
  }

  int mean_rows(int a) {
    const Mat<T>& av = nodes_[a].val;
    if (av.rows == 0) throw std::invalid_argument("mean_rows: empty input");
    Mat<T> v(1, av.cols);
    for (int i = 0; i < av.rows; ++i)
      for (int c = 0; c < av.cols; ++c) v[0][c] += av[i][c];
    for (int c = 0; c < av.cols; ++c) v[0][c] /= static_cast<T>(av.rows);
    int id = push(std::move(v), nullptr);
    nodes_[id].back = [id, a](Tape& t) {
      const Mat<T>& g = t.nodes_[id].grad;
      Mat<T>& ga = t.grad_buf(a);
      T inv = T(1) / static_cast<T>(ga.rows);
      for (int i = 0; i < ga.rows; ++i)
        for (int c = 0; c < ga.cols; ++c) ga[i][c] += g[0][c] * inv;
    };
    return id;
  }

  int sum_all(int a) {
    const Mat<T>& av = nodes_[a].val;
    Mat<T> v(1, 1);
    for (size_t i = 0; i < av.size(); ++i) v.a[0] += av.a[i];
    int id = push(std::move(v), nullptr);
    nodes_[id].back = [id, a](Tape& t) {
      T g = t.nodes_[id].grad.a[0];
      Mat<T>& ga = t.grad_buf(a);
      for (size_t i = 0; i < ga.size(); ++i) ga.a[i] += g;
    };
    return id;
  }

  // ---- normalization, regularization ----

  int layernorm(int x, int gain, int offset) {
    const Mat<T>& xv = nodes_[x].val;
    const Mat<T>& gv = nodes_[gain].val;
    const Mat<T>& bv = nodes_[offset].val;
    if (gv.rows != 1 || gv.cols != xv.cols || bv.rows != 1 || bv.cols != xv.cols) {
      throw std::invalid_argument("layernorm: gain/offset must be 1 x cols");
    }
    const T eps = T(1e-5);
    Mat<T> v(xv.rows, xv.cols);
    auto xhat = std::make_shared<Mat<T>>(xv.rows, xv.cols);
    auto istd = std::make_shared<std::vector<T>>(xv.rows);
    for (int i = 0; i < xv.rows; ++i) {
      T mean = T(0);
      for (int c = 0; c < xv.cols; ++c) mean += xv[i][c];
      mean /= static_cast<T>(xv.cols);
      T var = T(0);
      for (int c = 0; c < xv.cols; ++c) {
        T d = xv[i][c] - mean;
        var += d * d;
      }
      var /= static_cast<T>(xv.cols);
      T is = T(1) / std::sqrt(var + eps);
      (*istd)[i] = is;
      for (int c = 0; c < xv.cols; ++c) {
        T xh = (xv[i][c] - mean) * is;
        (*xhat)[i][c] = xh;
        v[i][c] = xh * gv[0][c] + bv[0][c];
      }
    }
    int id = push(std::move(v), nullptr);
    nodes_[id].back = [id, x, gain, offset, xhat, istd](Tape& t) {
      const Mat<T>& g = t.nodes_[id].grad;
      const Mat<T>& gv = t.nodes_[gain].val;
      const int cols = g.cols;
      Mat<T>& ggain = t.grad_buf(gain);
      Mat<T>& goff = t.grad_buf(offset);
      Mat<T>& gx = t.grad_buf(x);
      for (int i = 0; i < g.rows; ++i) {
        T mean_dxhat = T(0), mean_dxhat_xhat = T(0);
        for (int c = 0; c < cols; ++c) {
          T dxh = g[i][c] * gv[0][c];
          mean_dxhat += dxh;
          mean_dxhat_xhat += dxh * (*xhat)[i][c];
          ggain[0][c] += g[i][c] * (*xhat)[i][c];
          goff[0][c] += g[i][c];
        }
        mean_dxhat /= static_cast<T>(cols);
        mean_dxhat_xhat /= static_cast<T>(cols);
        for (int c = 0; c < cols; ++c) {
          T dxh = g[i][c] * gv[0][c];
          gx[i][c] += (*istd)[i] *
                      (dxh - mean_dxhat - (*xhat)[i][c] * mean_dxhat_xhat);
        }
      }
    };
    return id;
  }

  // Inverted dropout; identity when not training or rate is zero.
  int dropout(int x, double rate) {
    if (!training_ || rate <= 0.0) return x;
    if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
    const Mat<T>& xv = nodes_[x].val;
    auto mask = std::make_shared<std::vector<uint8_t>>(xv.size());
    T scale = T(1) / static_cast<T>(1.0 - rate);
    Mat<T> v = xv;
    for (size_t i = 0; i < v.size(); ++i) {
      bool keep = !rng_.bernoulli(rate);
      (*mask)[i] = keep ? 1 : 0;
      v.a[i] = keep ? v.a[i] * scale : T(0);
    }
    int id = push(std::move(v), nullptr);
    nodes_[id].back = [id, x, mask, scale](Tape& t) {
      const Mat<T>& g = t.nodes_[id].grad;
      Mat<T>& gx = t.grad_buf(x);
      for (size_t i = 0; i < g.size(); ++i) {
        if ((*mask)[i]) gx.a[i] += g.a[i] * scale;
      }
    };
    return id;
  }

  // ---- attention ----

  // Scaled dot-product attention with optional windowed mask and clipped
  // relative-position bias read straight from the parameter store. Masked
  // keys are never evaluated, so they get exactly zero weight, and each
  // row's weights sum to 1 over the allowed keys. Global keys can carry a
  // learned logit offset (gk_bias, 1 x heads), the light-weight analogue of
  // Longformer's separate global-attention parameters.
  int attention(int q, int k, int v, std::shared_ptr<const MaskPlan> plan,
                const std::string& bias_table = "", int bias_col = 0,
                const std::string& gk_bias_table = "") {
    const Mat<T>& qv = nodes_[q].val;
    const Mat<T>& kv = nodes_[k].val;
    const Mat<T>& vv = nodes_[v].val;
    if (qv.cols != kv.cols) throw std::invalid_argument("attention: q/k dim mismatch");
    if (kv.rows != vv.rows) throw std::invalid_argument("attention: k/v rows mismatch");
    const T scale = T(1) / std::sqrt(static_cast<T>(qv.cols));
    const bool use_bias = !bias_table.empty();
    const Mat<T>* bias = use_bias ? &params_->at(bias_table) : nullptr;
    const bool use_gk = !gk_bias_table.empty();
    const Mat<T>* gk_bias = use_gk ? &params_->at(gk_bias_table) : nullptr;
    const int A = qv.rows, B = kv.rows;
    if (!plan->dense) {
      if (B != plan->n_keys ||
          A != plan->global_prefix + static_cast<int>(plan->ranges.size())) {
        throw std::invalid_argument("attention: plan does not match q/k shapes");
      }
    }
    const int g_pref = plan->dense ? 0 : plan->global_prefix;

    auto allowed = std::make_shared<std::vector<std::vector<int>>>(A);
    auto probs = std::make_shared<std::vector<std::vector<T>>>(A);
    Mat<T> out(A, vv.cols);

    for (int i = 0; i < A; ++i) {
      std::vector<int>& keys = (*allowed)[i];
      if (plan->dense || i < g_pref) {
        keys.resize(B);
        for (int j = 0; j < B; ++j) keys[j] = j;
      } else {
        auto [lo, hi] = plan->ranges[i - g_pref];
        keys.reserve(g_pref + (hi - lo));
        for (int j = 0; j < g_pref; ++j) keys.push_back(j);
        for (int j = lo; j < hi; ++j) keys.push_back(j);
      }
      if (keys.empty()) {
        throw std::runtime_error("attention: query " + std::to_string(i) +
                                 " has no allowed keys");
      }
      std::vector<T>& p = (*probs)[i];
      p.resize(keys.size());
      T maxlogit = -std::numeric_limits<T>::infinity();
      for (size_t a = 0; a < keys.size(); ++a) {
        int j = keys[a];
        T dot = T(0);
        for (int c = 0; c < qv.cols; ++c) dot += qv[i][c] * kv[j][c];
        T logit = dot * scale;
        if (use_bias && i >= g_pref && j >= g_pref) {
          int rel = plan->positions[j - g_pref] - plan->positions[i - g_pref];
          rel = std::clamp(rel, -plan->clip_k, plan->clip_k) + plan->clip_k;
          logit += (*bias)[rel][bias_col];
        }
        if (use_gk && j < g_pref) logit += (*gk_bias)[0][bias_col];
        p[a] = logit;
        maxlogit = std::max(maxlogit, logit);
      }
      T denom = T(0);
      for (T& x : p) {
        x = std::exp(x - maxlogit);
        denom += x;
      }
      for (size_t a = 0; a < keys.size(); ++a) {
        p[a] /= denom;
        const T* vrow = vv[keys[a]];
        for (int c = 0; c < vv.cols; ++c) out[i][c] += p[a] * vrow[c];
      }
    }

    int id = push(std::move(out), nullptr);
    nodes_[id].back = [id, q, k, v, plan, allowed, probs, bias_table, bias_col,
                       gk_bias_table, scale, g_pref](Tape& t) {
      const Mat<T>& g = t.nodes_[id].grad;
      const Mat<T>& qv = t.nodes_[q].val;
      const Mat<T>& kv = t.nodes_[k].val;
      const Mat<T>& vv = t.nodes_[v].val;
      Mat<T>& gq = t.grad_buf(q);
      Mat<T>& gk = t.grad_buf(k);
      Mat<T>& gv = t.grad_buf(v);
      const bool use_bias = !bias_table.empty();
      Mat<T>* gbias =
          (use_bias && t.grads_ != nullptr) ? &t.grads_->at(bias_table) : nullptr;
      Mat<T>* g_gk = (!gk_bias_table.empty() && t.grads_ != nullptr)
                         ? &t.grads_->at(gk_bias_table)
                         : nullptr;
      std::vector<T> dp;
      for (int i = 0; i < g.rows; ++i) {
        const auto& keys = (*allowed)[i];
        const auto& p = (*probs)[i];
        dp.assign(keys.size(), T(0));
        T dot_term = T(0);
        for (size_t a = 0; a < keys.size(); ++a) {
          const T* vrow = vv[keys[a]];
          T acc = T(0);
          for (int c = 0; c < g.cols; ++c) acc += vrow[c] * g[i][c];
          dp[a] = acc;
          dot_term += p[a] * acc;
          // dV accumulates the plain convex-combination pullback.
          T* gvrow = gv[keys[a]];
          for (int c = 0; c < g.cols; ++c) gvrow[c] += p[a] * g[i][c];
        }
        for (size_t a = 0; a < keys.size(); ++a) {
          int j = keys[a];
          T ds = p[a] * (dp[a] - dot_term);
          if (ds == T(0)) continue;
          const T* krow = kv[j];
          T* gqrow = gq[i];
          for (int c = 0; c < qv.cols; ++c) gqrow[c] += scale * ds * krow[c];
          T* gkrow = gk[j];
          const T* qrow = qv[i];
          for (int c = 0; c < qv.cols; ++c) gkrow[c] += scale * ds * qrow[c];
          if (gbias != nullptr && i >= g_pref && j >= g_pref) {
            int rel = plan->positions[j - g_pref] - plan->positions[i - g_pref];
            rel = std::clamp(rel, -plan->clip_k, plan->clip_k) + plan->clip_k;
            (*gbias)[rel][bias_col] += ds;
          }
          if (g_gk != nullptr && j < g_pref) (*g_gk)[0][bias_col] += ds;
        }
      }
    };
    return id;
  }

  // ---- losses ----

  // Sum over tasks of pos-weighted binary cross-entropy on logits, in the
  // overflow-safe softplus form.
  int bce_with_logits(int x, std::vector<T> y, std::vector<T> pos_weight) {
    const Mat<T>& xv = nodes_[x].val;
    if (xv.rows != 1 || xv.cols != static_cast<int>(y.size()) ||
        y.size() != pos_weight.size()) {
      throw std::invalid_argument("bce_with_logits: shape mismatch");
    }
    Mat<T> v(1, 1);
    for (int c = 0; c < xv.cols; ++c) {
      v.a[0] += pos_weight[c] * y[c] * stable_softplus(-xv[0][c]) +
                (T(1) - y[c]) * stable_softplus(xv[0][c]);
    }
    int id = push(std::move(v), nullptr);
    auto y_ptr = std::make_shared<std::vector<T>>(std::move(y));
    auto pw_ptr = std::make_shared<std::vector<T>>(std::move(pos_weight));
    nodes_[id].back = [id, x, y_ptr, pw_ptr](Tape& t) {
      T g = t.nodes_[id].grad.a[0];
      const Mat<T>& xv = t.nodes_[x].val;
      Mat<T>& gx = t.grad_buf(x);
      for (int c = 0; c < xv.cols; ++c) {
        T s = stable_sigmoid(xv[0][c]);
        gx[0][c] += g * ((*pw_ptr)[c] * (*y_ptr)[c] * (s - T(1)) +
                         (T(1) - (*y_ptr)[c]) * s);
      }
    };
    return id;
  }

  // ---- execution ----

  void backward(int loss_id, T seed = T(1)) {
    const Mat<T>& lv = nodes_[loss_id].val;
    if (lv.rows != 1 || lv.cols != 1) {
      throw std::invalid_argument("backward: loss must be 1x1");
    }
    grad_buf(loss_id).a[0] = seed;
    for (int i = loss_id; i >= 0; --i) {
      if (nodes_[i].back && !nodes_[i].grad.empty()) nodes_[i].back(*this);
    }
  }

  const Mat<T>& val(int id) const { return nodes_[id].val; }
  const Mat<T>& grad_of(int id) const { return nodes_[id].grad; }
  bool is_training() const { return training_; }
  size_t node_count() const { return nodes_.size(); }

  Mat<T>& grad_buf(int id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Mat<T>(n.val.rows, n.val.cols);
    return n.grad;
  }

 private:
  struct Node {
    Mat<T> val;
    Mat<T> grad;
    std::function<void(Tape&)> back;
  };

  int push(Mat<T> v, std::function<void(Tape&)> back) {
    nodes_.push_back(Node{std::move(v), Mat<T>(), std::move(back)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  void check_same_shape(int a, int b, const char* op) {
    if (!nodes_[a].val.same_shape(nodes_[b].val)) {
      throw std::invalid_argument(std::string(op) + ": shape mismatch");
    }
  }

  template <typename FwdFn, typename DerFn>
  int unary(int a, FwdFn f, DerFn df) {
    Mat<T> v = nodes_[a].val;
    for (size_t i = 0; i < v.size(); ++i) v.a[i] = f(v.a[i]);
    int id = push(std::move(v), nullptr);
    nodes_[id].back = [id, a, df](Tape& t) {
      const Mat<T>& g = t.nodes_[id].grad;
      const Mat<T>& av = t.nodes_[a].val;
      const Mat<T>& yv = t.nodes_[id].val;
      Mat<T>& ga = t.grad_buf(a);
      for (size_t i = 0; i < g.size(); ++i) {
        ga.a[i] += g.a[i] * df(av.a[i], yv.a[i]);
      }
    };
    return id;
  }

  std::vector<Node> nodes_;
  const ParamStore<T>* params_;
  ParamStore<T>* grads_;
  bool training_;
  Rng rng_;
};

}  // namespace chronotoken
