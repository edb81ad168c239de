#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "pix2surf/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pix2surf {
namespace ad {

struct Var {
  int i = -1;
  bool valid() const { return i >= 0; }
};

// Reverse-mode tape over Tensor ops. Nodes are appended in topological order;
// backward walks the tape in reverse. All arithmetic is double precision and
// bitwise deterministic: parallel regions only ever write disjoint outputs.
class Tape {
 public:
  struct Node {
    Tensor val;
    Tensor grad;
    std::vector<int> parents;
    std::function<void(Tape&, int)> back;  // (tape, self index)
    std::vector<int64_t> aux;              // pool/arg indices
    bool needs_grad = false;
  };

  std::vector<Node> nodes;

  const Tensor& val(Var v) const { return nodes[size_t(v.i)].val; }
  Tensor& grad(Var v) { return nodes[size_t(v.i)].grad; }
  bool needs_grad(Var v) const { return nodes[size_t(v.i)].needs_grad; }

  Var leaf(Tensor t, bool requires_grad) {
    Node n;
    n.val = std::move(t);
    n.needs_grad = requires_grad;
    nodes.push_back(std::move(n));
    return {int(nodes.size()) - 1};
  }

  Var constant(Tensor t) { return leaf(std::move(t), false); }

  Var make_node(Tensor val, std::vector<int> parents,
                std::function<void(Tape&, int)> back, std::vector<int64_t> aux = {}) {
    Node n;
    n.val = std::move(val);
    n.parents = std::move(parents);
    n.back = std::move(back);
    n.aux = std::move(aux);
    for (int p : n.parents)
      if (nodes[size_t(p)].needs_grad) n.needs_grad = true;
    nodes.push_back(std::move(n));
    return {int(nodes.size()) - 1};
  }

  // Gradient accumulator of a parent, allocated on first touch.
  Tensor& g(int i) {
    Node& n = nodes[size_t(i)];
    if (n.grad.data.empty()) n.grad = Tensor(n.val.shape);
    return n.grad;
  }
  bool want(int i) const { return nodes[size_t(i)].needs_grad; }

  void backward(Var loss) {
    check_shape(val(loss).numel() == 1, "backward: loss must be scalar");
    std::vector<char> reach(nodes.size(), 0);
    reach[size_t(loss.i)] = 1;
    for (int i = loss.i; i >= 0; --i) {
      if (!reach[size_t(i)]) continue;
      for (int p : nodes[size_t(i)].parents) reach[size_t(p)] = 1;
    }
    g(loss.i).data[0] = 1.0;
    for (int i = loss.i; i >= 0; --i) {
      Node& n = nodes[size_t(i)];
      if (!reach[size_t(i)] || !n.needs_grad || !n.back) continue;
      if (n.grad.data.empty()) continue;
      n.back(*this, i);
    }
  }

  // ---- elementwise -------------------------------------------------------

  Var add(Var a, Var b) {
    check_shape(val(a).same_shape(val(b)), "add: shape mismatch");
    Tensor out = val(a);
    const Tensor& tb = val(b);
    for (size_t k = 0; k < out.data.size(); ++k) out.data[k] += tb.data[k];
    return make_node(std::move(out), {a.i, b.i}, [](Tape& t, int self) {
      auto& n = t.nodes[size_t(self)];
      for (int pi = 0; pi < 2; ++pi) {
        int p = n.parents[size_t(pi)];
        if (!t.want(p)) continue;
        Tensor& gp = t.g(p);
        for (size_t k = 0; k < gp.data.size(); ++k) gp.data[k] += n.grad.data[k];
      }
    });
  }

  Var scale(Var a, double s) {
    Tensor out = val(a);
    for (double& v : out.data) v *= s;
    return make_node(std::move(out), {a.i}, [s](Tape& t, int self) {
      auto& n = t.nodes[size_t(self)];
      int p = n.parents[0];
      if (!t.want(p)) return;
      Tensor& gp = t.g(p);
      for (size_t k = 0; k < gp.data.size(); ++k) gp.data[k] += s * n.grad.data[k];
    });
  }

  Var relu(Var a) {
    Tensor out = val(a);
    for (double& v : out.data) v = v > 0 ? v : 0.0;
    return make_node(std::move(out), {a.i}, [](Tape& t, int self) {
      auto& n = t.nodes[size_t(self)];
      int p = n.parents[0];
      if (!t.want(p)) return;
      const Tensor& x = t.nodes[size_t(p)].val;
      Tensor& gp = t.g(p);
      for (size_t k = 0; k < gp.data.size(); ++k)
        if (x.data[k] > 0) gp.data[k] += n.grad.data[k];
    });
  }

  Var elu(Var a) {
    Tensor out = val(a);
    for (double& v : out.data) v = v > 0 ? v : std::expm1(v);
    return make_node(std::move(out), {a.i}, [](Tape& t, int self) {
      auto& n = t.nodes[size_t(self)];
      int p = n.parents[0];
      if (!t.want(p)) return;
      const Tensor& x = t.nodes[size_t(p)].val;
      Tensor& gp = t.g(p);
      for (size_t k = 0; k < gp.data.size(); ++k) {
        double d = x.data[k] > 0 ? 1.0 : std::exp(x.data[k]);
        gp.data[k] += d * n.grad.data[k];
      }
    });
  }

  Var sigmoid(Var a) {
    Tensor out = val(a);
    for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    return make_node(std::move(out), {a.i}, [](Tape& t, int self) {
      auto& n = t.nodes[size_t(self)];
      int p = n.parents[0];
      if (!t.want(p)) return;
      Tensor& gp = t.g(p);
      for (size_t k = 0; k < gp.data.size(); ++k) {
        double s = n.val.data[k];
        gp.data[k] += s * (1.0 - s) * n.grad.data[k];
      }
    });
  }

  // Weighted sum of scalar nodes.
  Var wsum(const std::vector<std::pair<Var, double>>& terms) {
    double acc = 0;
    std::vector<int> parents;
    std::vector<double> ws;
    for (const auto& [v, w] : terms) {
      check_shape(val(v).numel() == 1, "wsum: scalar terms only");
      acc += w * val(v).data[0];
      parents.push_back(v.i);
      ws.push_back(w);
    }
    Tensor out({1});
    out.data[0] = acc;
    return make_node(std::move(out), parents, [ws](Tape& t, int self) {
      auto& n = t.nodes[size_t(self)];
      for (size_t k = 0; k < n.parents.size(); ++k) {
        int p = n.parents[k];
        if (!t.want(p)) continue;
        t.g(p).data[0] += ws[k] * n.grad.data[0];
      }
    });
  }

  // ---- convolution stack --------------------------------------------------

  // 3x3 convolution, stride 1, zero padding 1. x:[Ci,H,W] w:[Co,Ci,3,3] b:[Co]
  Var conv2d(Var x, Var w, Var b) {
    const Tensor& tx = val(x);
    const Tensor& tw = val(w);
    const Tensor& tb = val(b);
    check_shape(tx.rank() == 3 && tw.rank() == 4 && tw.dim(2) == 3 && tw.dim(3) == 3,
                "conv2d: bad shapes");
    check_shape(tw.dim(1) == tx.dim(0) && tb.dim(0) == tw.dim(0), "conv2d: channel mismatch");
    const int Ci = tx.dim(0), H = tx.dim(1), W = tx.dim(2), Co = tw.dim(0);
    Tensor out({Co, H, W});

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int co = 0; co < Co; ++co) {
      double* y = out.data.data() + size_t(co) * H * W;
      const double bias = tb.data[size_t(co)];
      for (int k = 0; k < H * W; ++k) y[k] = bias;
      for (int ci = 0; ci < Ci; ++ci) {
        const double* xc = tx.data.data() + size_t(ci) * H * W;
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const double wv = tw.at(co, ci, ky, kx);
            if (wv == 0.0) continue;
            const int oy0 = std::max(0, 1 - ky), oy1 = std::min(H, H + 1 - ky);
            const int ox0 = std::max(0, 1 - kx), ox1 = std::min(W, W + 1 - kx);
            for (int oy = oy0; oy < oy1; ++oy) {
              const double* xr = xc + size_t(oy + ky - 1) * W + (kx - 1);
              double* yr = y + size_t(oy) * W;
              for (int ox = ox0; ox < ox1; ++ox) yr[ox] += wv * xr[ox];
            }
          }
        }
      }
    }

    return make_node(std::move(out), {x.i, w.i, b.i}, [Ci, H, W, Co](Tape& t, int self) {
      auto& n = t.nodes[size_t(self)];
      const Tensor& gy = n.grad;
      int xp = n.parents[0], wp = n.parents[1], bp = n.parents[2];
      const Tensor& tx = t.nodes[size_t(xp)].val;
      const Tensor& tw = t.nodes[size_t(wp)].val;

      if (t.want(xp)) {
        Tensor& gx = t.g(xp);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int ci = 0; ci < Ci; ++ci) {
          double* gxc = gx.data.data() + size_t(ci) * H * W;
          for (int co = 0; co < Co; ++co) {
            const double* gyc = gy.data.data() + size_t(co) * H * W;
            for (int ky = 0; ky < 3; ++ky) {
              for (int kx = 0; kx < 3; ++kx) {
                const double wv = tw.at(co, ci, ky, kx);
                if (wv == 0.0) continue;
                const int oy0 = std::max(0, 1 - ky), oy1 = std::min(H, H + 1 - ky);
                const int ox0 = std::max(0, 1 - kx), ox1 = std::min(W, W + 1 - kx);
                for (int oy = oy0; oy < oy1; ++oy) {
                  double* gxr = gxc + size_t(oy + ky - 1) * W + (kx - 1);
                  const double* gyr = gyc + size_t(oy) * W;
                  for (int ox = ox0; ox < ox1; ++ox) gxr[ox] += wv * gyr[ox];
                }
              }
            }
          }
        }
      }

      if (t.want(wp)) {
        Tensor& gw = t.g(wp);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int co = 0; co < Co; ++co) {
          const double* gyc = gy.data.data() + size_t(co) * H * W;
          for (int ci = 0; ci < Ci; ++ci) {
            const double* xc = tx.data.data() + size_t(ci) * H * W;
            for (int ky = 0; ky < 3; ++ky) {
              for (int kx = 0; kx < 3; ++kx) {
                const int oy0 = std::max(0, 1 - ky), oy1 = std::min(H, H + 1 - ky);
                const int ox0 = std::max(0, 1 - kx), ox1 = std::min(W, W + 1 - kx);
                double acc = 0;
                for (int oy = oy0; oy < oy1; ++oy) {
                  const double* xr = xc + size_t(oy + ky - 1) * W + (kx - 1);
                  const double* gyr = gyc + size_t(oy) * W;
                  for (int ox = ox0; ox < ox1; ++ox) acc += gyr[ox] * xr[ox];
                }
                gw.at(co, ci, ky, kx) += acc;
              }
            }
          }
        }
      }

      if (t.want(bp)) {
        Tensor& gb = t.g(bp);
        for (int co = 0; co < Co; ++co) {
          const double* gyc = gy.data.data() + size_t(co) * H * W;
          double acc = 0;
          for (int k = 0; k < H * W; ++k) acc += gyc[k];
          gb.data[size_t(co)] += acc;
        }
      }
    });
  }

  // 2x2 max pooling with retained argmax indices (Var aux), stride 2.
  Var maxpool2(Var x) {
    const Tensor& tx = val(x);
    check_shape(tx.rank() == 3 && tx.dim(1) % 2 == 0 && tx.dim(2) % 2 == 0,
                "maxpool2: even spatial dims required");
    const int C = tx.dim(0), H = tx.dim(1), W = tx.dim(2), Ho = H / 2, Wo = W / 2;
    Tensor out({C, Ho, Wo});
    std::vector<int64_t> aux(size_t(C) * Ho * Wo);
    for (int c = 0; c < C; ++c) {
      const double* xc = tx.data.data() + size_t(c) * H * W;
      for (int oy = 0; oy < Ho; ++oy) {
        for (int ox = 0; ox < Wo; ++ox) {
          int best = (2 * oy) * W + 2 * ox;
          double bv = xc[best];
          const int cands[3] = {(2 * oy) * W + 2 * ox + 1, (2 * oy + 1) * W + 2 * ox,
                                (2 * oy + 1) * W + 2 * ox + 1};
          for (int cand : cands)
            if (xc[cand] > bv) { bv = xc[cand]; best = cand; }
          out.at(c, oy, ox) = bv;
          aux[(size_t(c) * Ho + oy) * Wo + ox] = best;
        }
      }
    }
    return make_node(std::move(out), {x.i},
                     [C, H, W, Ho, Wo](Tape& t, int self) {
                       auto& n = t.nodes[size_t(self)];
                       int p = n.parents[0];
                       if (!t.want(p)) return;
                       Tensor& gx = t.g(p);
                       for (int c = 0; c < C; ++c) {
                         double* gxc = gx.data.data() + size_t(c) * H * W;
                         for (int k = 0; k < Ho * Wo; ++k)
                           gxc[n.aux[size_t(c) * Ho * Wo + k]] += n.grad.data[size_t(c) * Ho * Wo + k];
                       }
                     },
                     std::move(aux));
  }

  // Max unpooling using the indices captured by `pool` (a maxpool2 node).
  Var unpool2(Var x, Var pool) {
    const Tensor& tx = val(x);
    const Node& pn = nodes[size_t(pool.i)];
    check_shape(tx.same_shape(pn.val), "unpool2: input must match pooled shape");
    const int C = tx.dim(0), Ho = tx.dim(1), Wo = tx.dim(2), H = Ho * 2, W = Wo * 2;
    Tensor out({C, H, W});
    const std::vector<int64_t>& idx = pn.aux;
    for (int c = 0; c < C; ++c) {
      double* oc = out.data.data() + size_t(c) * H * W;
      for (int k = 0; k < Ho * Wo; ++k)
        oc[idx[size_t(c) * Ho * Wo + k]] = tx.data[size_t(c) * Ho * Wo + k];
    }
    int pool_node = pool.i;
    return make_node(std::move(out), {x.i}, [C, Ho, Wo, H, W, pool_node](Tape& t, int self) {
      auto& n = t.nodes[size_t(self)];
      int p = n.parents[0];
      if (!t.want(p)) return;
      const std::vector<int64_t>& idx = t.nodes[size_t(pool_node)].aux;
      Tensor& gx = t.g(p);
      for (int c = 0; c < C; ++c) {
        const double* gc = n.grad.data.data() + size_t(c) * H * W;
        for (int k = 0; k < Ho * Wo; ++k)
          gx.data[size_t(c) * Ho * Wo + k] += gc[idx[size_t(c) * Ho * Wo + k]];
      }
    });
  }

  // Per-channel normalization over spatial positions with learned scale/shift.
  Var instnorm(Var x, Var gamma, Var beta, double eps = 1e-5) {
    const Tensor& tx = val(x);
    check_shape(tx.rank() == 3, "instnorm: [C,H,W] input");
    const int C = tx.dim(0);
    const int M = tx.dim(1) * tx.dim(2);
    Tensor out(tx.shape);
    std::vector<int64_t> aux;  // unused; stats recomputed in backward
    for (int c = 0; c < C; ++c) {
      const double* xc = tx.data.data() + size_t(c) * M;
      double mu = 0;
      for (int k = 0; k < M; ++k) mu += xc[k];
      mu /= M;
      double var = 0;
      for (int k = 0; k < M; ++k) var += (xc[k] - mu) * (xc[k] - mu);
      var /= M;
      double inv = 1.0 / std::sqrt(var + eps);
      double gv = val(gamma).data[size_t(c)], bv = val(beta).data[size_t(c)];
      double* oc = out.data.data() + size_t(c) * M;
      for (int k = 0; k < M; ++k) oc[k] = gv * (xc[k] - mu) * inv + bv;
    }
    return make_node(std::move(out), {x.i, gamma.i, beta.i}, [C, M, eps](Tape& t, int self) {
      auto& n = t.nodes[size_t(self)];
      int xp = n.parents[0], gp_ = n.parents[1], bp = n.parents[2];
      const Tensor& tx = t.nodes[size_t(xp)].val;
      const Tensor& tg = t.nodes[size_t(gp_)].val;
      for (int c = 0; c < C; ++c) {
        const double* xc = tx.data.data() + size_t(c) * M;
        const double* gy = n.grad.data.data() + size_t(c) * M;
        double mu = 0;
        for (int k = 0; k < M; ++k) mu += xc[k];
        mu /= M;
        double var = 0;
        for (int k = 0; k < M; ++k) var += (xc[k] - mu) * (xc[k] - mu);
        var /= M;
        double inv = 1.0 / std::sqrt(var + eps);
        double gv = tg.data[size_t(c)];

        double sum_gy = 0, sum_gy_xhat = 0;
        for (int k = 0; k < M; ++k) {
          double xhat = (xc[k] - mu) * inv;
          sum_gy += gy[k];
          sum_gy_xhat += gy[k] * xhat;
        }
        if (t.want(bp)) t.g(bp).data[size_t(c)] += sum_gy;
        if (t.want(gp_)) t.g(gp_).data[size_t(c)] += sum_gy_xhat;
        if (t.want(xp)) {
          Tensor& gx = t.g(xp);
          double* gxc = gx.data.data() + size_t(c) * M;
          for (int k = 0; k < M; ++k) {
            double xhat = (xc[k] - mu) * inv;
            gxc[k] += gv * inv * (gy[k] - sum_gy / M - xhat * sum_gy_xhat / M);
          }
        }
      }
    });
  }

  Var global_mean_hw(Var x) {
    const Tensor& tx = val(x);
    check_shape(tx.rank() == 3, "global_mean_hw: [C,H,W] input");
    const int C = tx.dim(0), M = tx.dim(1) * tx.dim(2);
    Tensor out({1, C});
    for (int c = 0; c < C; ++c) {
      double acc = 0;
      const double* xc = tx.data.data() + size_t(c) * M;
      for (int k = 0; k < M; ++k) acc += xc[k];
      out.data[size_t(c)] = acc / M;
    }
    return make_node(std::move(out), {x.i}, [C, M](Tape& t, int self) {
      auto& n = t.nodes[size_t(self)];
      int p = n.parents[0];
      if (!t.want(p)) return;
      Tensor& gx = t.g(p);
      for (int c = 0; c < C; ++c) {
        double gv = n.grad.data[size_t(c)] / M;
        double* gxc = gx.data.data() + size_t(c) * M;
        for (int k = 0; k < M; ++k) gxc[k] += gv;
      }
    });
  }

  // ---- dense stack ---------------------------------------------------------

  // x:[N,Di] w:[Do,Di] b:[Do] -> [N,Do]
  Var linear(Var x, Var w, Var b) {
    const Tensor& tx = val(x);
    const Tensor& tw = val(w);
    const Tensor& tb = val(b);
    check_shape(tx.rank() == 2 && tw.rank() == 2 && tx.dim(1) == tw.dim(1) &&
                    tb.dim(0) == tw.dim(0),
                "linear: shape mismatch");
    const int N = tx.dim(0), Di = tx.dim(1), Do = tw.dim(0);
    Tensor out({N, Do});
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int n = 0; n < N; ++n) {
      const double* xr = tx.data.data() + size_t(n) * Di;
      double* yr = out.data.data() + size_t(n) * Do;
      for (int o = 0; o < Do; ++o) {
        const double* wr = tw.data.data() + size_t(o) * Di;
        double acc = tb.data[size_t(o)];
        for (int i = 0; i < Di; ++i) acc += wr[i] * xr[i];
        yr[o] = acc;
      }
    }
    return make_node(std::move(out), {x.i, w.i, b.i}, [N, Di, Do](Tape& t, int self) {
      auto& n = t.nodes[size_t(self)];
      int xp = n.parents[0], wp = n.parents[1], bp = n.parents[2];
      const Tensor& tx = t.nodes[size_t(xp)].val;
      const Tensor& tw = t.nodes[size_t(wp)].val;
      const Tensor& gy = n.grad;

      if (t.want(xp)) {
        Tensor& gx = t.g(xp);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int r = 0; r < N; ++r) {
          double* gxr = gx.data.data() + size_t(r) * Di;
          const double* gyr = gy.data.data() + size_t(r) * Do;
          for (int o = 0; o < Do; ++o) {
            const double gv = gyr[o];
            if (gv == 0.0) continue;
            const double* wr = tw.data.data() + size_t(o) * Di;
            for (int i = 0; i < Di; ++i) gxr[i] += gv * wr[i];
          }
        }
      }
      if (t.want(wp)) {
        Tensor& gw = t.g(wp);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int o = 0; o < Do; ++o) {
          double* gwr = gw.data.data() + size_t(o) * Di;
          for (int r = 0; r < N; ++r) {
            const double gv = gy.data[size_t(r) * Do + o];
            if (gv == 0.0) continue;
            const double* xr = tx.data.data() + size_t(r) * Di;
            for (int i = 0; i < Di; ++i) gwr[i] += gv * xr[i];
          }
        }
      }
      if (t.want(bp)) {
        Tensor& gb = t.g(bp);
        for (int r = 0; r < N; ++r)
          for (int o = 0; o < Do; ++o) gb.data[size_t(o)] += gy.data[size_t(r) * Do + o];
      }
    });
  }

  Var concat_cols(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    check_shape(ta.rank() == 2 && tb.rank() == 2 && ta.dim(0) == tb.dim(0),
                "concat_cols: row mismatch");
    const int N = ta.dim(0), A = ta.dim(1), B = tb.dim(1);
    Tensor out({N, A + B});
    for (int n = 0; n < N; ++n) {
      std::copy_n(ta.data.data() + size_t(n) * A, A, out.data.data() + size_t(n) * (A + B));
      std::copy_n(tb.data.data() + size_t(n) * B, B, out.data.data() + size_t(n) * (A + B) + A);
    }
    return make_node(std::move(out), {a.i, b.i}, [N, A, B](Tape& t, int self) {
      auto& n = t.nodes[size_t(self)];
      int ap = n.parents[0], bp = n.parents[1];
      for (int r = 0; r < N; ++r) {
        const double* gr = n.grad.data.data() + size_t(r) * (A + B);
        if (t.want(ap)) {
          double* ga = t.g(ap).data.data() + size_t(r) * A;
          for (int i = 0; i < A; ++i) ga[i] += gr[i];
        }
        if (t.want(bp)) {
          double* gb = t.g(bp).data.data() + size_t(r) * B;
          for (int i = 0; i < B; ++i) gb[i] += gr[A + i];
        }
      }
    });
  }

  Var concat_channels(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    check_shape(ta.rank() == 3 && tb.rank() == 3 && ta.dim(1) == tb.dim(1) &&
                    ta.dim(2) == tb.dim(2),
                "concat_channels: spatial mismatch");
    const int Ca = ta.dim(0), Cb = tb.dim(0), M = ta.dim(1) * ta.dim(2);
    Tensor out({Ca + Cb, ta.dim(1), ta.dim(2)});
    std::copy_n(ta.data.data(), size_t(Ca) * M, out.data.data());
    std::copy_n(tb.data.data(), size_t(Cb) * M, out.data.data() + size_t(Ca) * M);
    return make_node(std::move(out), {a.i, b.i}, [Ca, Cb, M](Tape& t, int self) {
      auto& n = t.nodes[size_t(self)];
      int ap = n.parents[0], bp = n.parents[1];
      if (t.want(ap)) {
        Tensor& ga = t.g(ap);
        for (size_t k = 0; k < size_t(Ca) * M; ++k) ga.data[k] += n.grad.data[k];
      }
      if (t.want(bp)) {
        Tensor& gb = t.g(bp);
        for (size_t k = 0; k < size_t(Cb) * M; ++k) gb.data[k] += n.grad.data[size_t(Ca) * M + k];
      }
    });
  }

  Var slice_channels(Var x, int c0, int c1) {
    const Tensor& tx = val(x);
    check_shape(tx.rank() == 3 && c0 >= 0 && c1 <= tx.dim(0) && c0 < c1,
                "slice_channels: bad range");
    const int M = tx.dim(1) * tx.dim(2);
    Tensor out({c1 - c0, tx.dim(1), tx.dim(2)});
    std::copy_n(tx.data.data() + size_t(c0) * M, size_t(c1 - c0) * M, out.data.data());
    return make_node(std::move(out), {x.i}, [c0, c1, M](Tape& t, int self) {
      auto& n = t.nodes[size_t(self)];
      int p = n.parents[0];
      if (!t.want(p)) return;
      Tensor& gx = t.g(p);
      for (size_t k = 0; k < size_t(c1 - c0) * M; ++k)
        gx.data[size_t(c0) * M + k] += n.grad.data[k];
    });
  }

  // Rows of per-pixel values: x:[C,H,W], pixels given as linear r*W+c
  Var gather_pixels(Var x, const std::vector<int>& pix) {
    const Tensor& tx = val(x);
    check_shape(tx.rank() == 3, "gather_pixels: [C,H,W] input");
    const int C = tx.dim(0), M = tx.dim(1) * tx.dim(2);
    const int N = int(pix.size());
    Tensor out({N, C});
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) out.at(n, c) = tx.data[size_t(c) * M + pix[size_t(n)]];
    std::vector<int64_t> aux(pix.begin(), pix.end());
    return make_node(std::move(out), {x.i},
                     [C, M, N](Tape& t, int self) {
                       auto& n = t.nodes[size_t(self)];
                       int p = n.parents[0];
                       if (!t.want(p)) return;
                       Tensor& gx = t.g(p);
                       for (int r = 0; r < N; ++r)
                         for (int c = 0; c < C; ++c)
                           gx.data[size_t(c) * M + n.aux[size_t(r)]] += n.grad.at(r, c);
                     },
                     std::move(aux));
  }

  Var broadcast_rows(Var v, int n_rows) {
    const Tensor& tv = val(v);
    check_shape(tv.rank() == 2 && tv.dim(0) == 1, "broadcast_rows: [1,D] input");
    const int D = tv.dim(1);
    Tensor out({n_rows, D});
    for (int r = 0; r < n_rows; ++r)
      std::copy_n(tv.data.data(), D, out.data.data() + size_t(r) * D);
    return make_node(std::move(out), {v.i}, [n_rows, D](Tape& t, int self) {
      auto& n = t.nodes[size_t(self)];
      int p = n.parents[0];
      if (!t.want(p)) return;
      Tensor& gv = t.g(p);
      for (int r = 0; r < n_rows; ++r)
        for (int i = 0; i < D; ++i) gv.data[size_t(i)] += n.grad.data[size_t(r) * D + i];
    });
  }

  // Elementwise maximum over several same-shaped vars; subgradient routes to
  // the first argmax, which keeps fusion deterministic under ties.
  Var emax(const std::vector<Var>& vars) {
    check_shape(!vars.empty(), "emax: empty input");
    const Tensor& t0 = val(vars[0]);
    Tensor out = t0;
    std::vector<int64_t> arg(out.data.size(), 0);
    std::vector<int> parents{vars[0].i};
    for (size_t vi = 1; vi < vars.size(); ++vi) {
      const Tensor& tv = val(vars[vi]);
      check_shape(tv.same_shape(t0), "emax: shape mismatch");
      parents.push_back(vars[vi].i);
      for (size_t k = 0; k < out.data.size(); ++k)
        if (tv.data[k] > out.data[k]) { out.data[k] = tv.data[k]; arg[k] = int64_t(vi); }
    }
    return make_node(std::move(out), parents,
                     [](Tape& t, int self) {
                       auto& n = t.nodes[size_t(self)];
                       for (size_t k = 0; k < n.grad.data.size(); ++k) {
                         int p = n.parents[size_t(n.aux[k])];
                         if (!t.want(p)) continue;
                         t.g(p).data[k] += n.grad.data[k];
                       }
                     },
                     std::move(arg));
  }
};

}  // namespace ad
}  // namespace pix2surf
