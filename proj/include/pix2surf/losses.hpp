#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <unordered_map>
#include <vector>

#include "pix2surf/autodiff.hpp"
#include "pix2surf/geometry.hpp"
#include "pix2surf/image.hpp"

namespace pix2surf {

struct LossWeights {
  double w1 = 0.1, w2 = 0.9;   // NOCS-UV vs surface branch
  double wn = 0.7, wm = 0.3;   // NOCS map vs mask inside the first term
  double w3 = 0.9;             // multi-view consistency
  int K = 4096;                // surface samples per view
  double eps_corr = 1e-3;      // training pair mining threshold
  double eps_eval = 1e-3;      // metric correspondence threshold

  void validate() const {
    if (w1 < 0 || w2 < 0 || wn < 0 || wm < 0 || w3 < 0)
      throw ConfigError("loss weights must be nonnegative");
    if (K < 1) throw ConfigError("loss.K must be >= 1");
    if (!(eps_corr > 0) || !(eps_eval > 0)) throw ConfigError("loss thresholds must be > 0");
  }
};

struct LossValue {
  double value = 0.0;
  bool empty_support = false;  // set when the loss had nothing to average over
};

// ---- masked NOCS regression -------------------------------------------------
// Mean over foreground pixels of the squared error summed over the 3 channels,
// so a single pixel off by (0.1,0,0) scores 0.01.

inline LossValue nocs_loss(const Tensor& pred, const NocsMap& gt) {
  check_shape(pred.rank() == 3 && pred.dim(0) == 3 && pred.dim(1) == gt.h && pred.dim(2) == gt.w,
              "nocs_loss: pred must be [3,H,W] matching gt");
  const int M = gt.h * gt.w;
  double acc = 0;
  int n_fg = 0;
  for (int p = 0; p < M; ++p) {
    if (!gt.valid[size_t(p)]) continue;
    ++n_fg;
    for (int c = 0; c < 3; ++c) {
      double d = pred.data[size_t(c) * M + p] - gt.coords[size_t(p) * 3 + c];
      acc += d * d;
    }
  }
  if (n_fg == 0) return {0.0, true};
  return {acc / n_fg, false};
}

inline Tensor nocs_loss_grad(const Tensor& pred, const NocsMap& gt) {
  const int M = gt.h * gt.w;
  Tensor g(pred.shape);
  int n_fg = 0;
  for (int p = 0; p < M; ++p) n_fg += gt.valid[size_t(p)] ? 1 : 0;
  if (n_fg == 0) return g;
  for (int p = 0; p < M; ++p) {
    if (!gt.valid[size_t(p)]) continue;
    for (int c = 0; c < 3; ++c) {
      double d = pred.data[size_t(c) * M + p] - gt.coords[size_t(p) * 3 + c];
      g.data[size_t(c) * M + p] = 2.0 * d / n_fg;
    }
  }
  return g;
}

// ---- mask binary cross entropy ----------------------------------------------
// Mean over all pixels, computed from logits in the numerically stable form.

inline LossValue mask_loss(const Tensor& logits, const std::vector<uint8_t>& mask) {
  check_shape(logits.numel() == int64_t(mask.size()), "mask_loss: size mismatch");
  double acc = 0;
  for (size_t p = 0; p < mask.size(); ++p) {
    double l = logits.data[p];
    double y = mask[p] ? 1.0 : 0.0;
    acc += std::max(l, 0.0) - l * y + std::log1p(std::exp(-std::fabs(l)));
  }
  return {acc / double(mask.size()), false};
}

inline Tensor mask_loss_grad(const Tensor& logits, const std::vector<uint8_t>& mask) {
  Tensor g(logits.shape);
  const double n = double(mask.size());
  for (size_t p = 0; p < mask.size(); ++p) {
    double s = 1.0 / (1.0 + std::exp(-logits.data[p]));
    g.data[p] = (s - (mask[p] ? 1.0 : 0.0)) / n;
  }
  return g;
}

// ---- sampled surface loss -----------------------------------------------------
// Mean Euclidean (not squared) distance, exactly as the training objective uses.

inline LossValue surface_loss(const Tensor& pred, const Tensor& gt) {
  check_shape(pred.same_shape(gt) && pred.rank() == 2 && pred.dim(1) == 3,
              "surface_loss: [K,3] inputs");
  const int K = pred.dim(0);
  if (K == 0) return {0.0, true};
  double acc = 0;
  for (int k = 0; k < K; ++k) {
    double dx = pred.at(k, 0) - gt.at(k, 0);
    double dy = pred.at(k, 1) - gt.at(k, 1);
    double dz = pred.at(k, 2) - gt.at(k, 2);
    acc += std::sqrt(dx * dx + dy * dy + dz * dz);
  }
  return {acc / K, false};
}

inline Tensor surface_loss_grad(const Tensor& pred, const Tensor& gt) {
  const int K = pred.dim(0);
  Tensor g(pred.shape);
  for (int k = 0; k < K; ++k) {
    double dx = pred.at(k, 0) - gt.at(k, 0);
    double dy = pred.at(k, 1) - gt.at(k, 1);
    double dz = pred.at(k, 2) - gt.at(k, 2);
    double n = std::sqrt(dx * dx + dy * dy + dz * dz);
    if (n < 1e-300) continue;  // subgradient 0 at the kink
    g.at(k, 0) = dx / (n * K);
    g.at(k, 1) = dy / (n * K);
    g.at(k, 2) = dz / (n * K);
  }
  return g;
}

// ---- multi-view correspondence mining ----------------------------------------

struct CorrespondencePair {
  int view_a = 0, view_b = 0;
  int pix_a = 0, pix_b = 0;  // linear r*W+c in each view
  Vec3 gt_nocs;
};

namespace detail {

struct NocsHash {
  double cell;
  std::unordered_map<int64_t, std::vector<int>> cells;

  explicit NocsHash(double c) : cell(c) {}

  static int64_t key(int ix, int iy, int iz) {
    return (int64_t(ix) << 42) ^ (int64_t(iy) << 21) ^ int64_t(iz);
  }

  void insert(const Vec3& p, int id) {
    cells[key(int(std::floor(p.x / cell)), int(std::floor(p.y / cell)),
              int(std::floor(p.z / cell)))]
        .push_back(id);
  }

  template <typename F>
  void for_neighbors(const Vec3& p, F&& f) const {
    int ix = int(std::floor(p.x / cell)), iy = int(std::floor(p.y / cell)),
        iz = int(std::floor(p.z / cell));
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          auto it = cells.find(key(ix + dx, iy + dy, iz + dz));
          if (it == cells.end()) continue;
          for (int id : it->second) f(id);
        }
  }
};

}  // namespace detail

// For each candidate pixel of view a, the nearest-NOCS candidate of view b is
// accepted when closer than eps. Spatial hashing with exact confirmation; at
// most one pair per source pixel. Deterministic given the seed.
inline std::vector<CorrespondencePair> mine_pairs(
    const std::vector<const NocsMap*>& gt_maps, const std::vector<const std::vector<uint8_t>*>& masks,
    const std::vector<std::vector<int>>& candidate_pixels, double eps_corr, int max_pairs,
    uint64_t seed) {
  if (gt_maps.size() < 2) throw ConfigError("mine_pairs: need at least two views");
  std::vector<CorrespondencePair> out;
  const int V = int(gt_maps.size());

  auto nocs_at = [&](int v, int pix) {
    const NocsMap& m = *gt_maps[size_t(v)];
    return Vec3{m.coords[size_t(pix) * 3], m.coords[size_t(pix) * 3 + 1],
                m.coords[size_t(pix) * 3 + 2]};
  };

  for (int a = 0; a < V; ++a) {
    for (int b = a + 1; b < V; ++b) {
      detail::NocsHash hash(eps_corr);
      const auto& cb = candidate_pixels[size_t(b)];
      for (int idx = 0; idx < int(cb.size()); ++idx) {
        int pix = cb[size_t(idx)];
        if (!(*masks[size_t(b)])[size_t(pix)]) continue;
        hash.insert(nocs_at(b, pix), idx);
      }
      std::vector<CorrespondencePair> pairs_ab;
      for (int pix_a : candidate_pixels[size_t(a)]) {
        if (!(*masks[size_t(a)])[size_t(pix_a)]) continue;
        Vec3 pa = nocs_at(a, pix_a);
        int best = -1;
        double best_d = eps_corr;
        hash.for_neighbors(pa, [&](int idx) {
          double d = dist(pa, nocs_at(b, cb[size_t(idx)]));
          if (d < best_d || (d == best_d && best >= 0 && idx < best)) {
            best_d = d;
            best = idx;
          }
        });
        if (best >= 0) pairs_ab.push_back({a, b, pix_a, cb[size_t(best)], pa});
      }
      if (max_pairs > 0 && int(pairs_ab.size()) > max_pairs) {
        Rng rng(derive_seed(seed, 0x9a17, uint64_t(a), uint64_t(b)));
        rng.shuffle(pairs_ab);
        pairs_ab.resize(size_t(max_pairs));
      }
      out.insert(out.end(), pairs_ab.begin(), pairs_ab.end());
    }
  }
  return out;
}

// Convenience overload that samples its own foreground candidates.
inline std::vector<CorrespondencePair> mine_pairs(const std::vector<const NocsMap*>& gt_maps,
                                                  const std::vector<const std::vector<uint8_t>*>& masks,
                                                  double eps_corr, int max_pairs, uint64_t seed,
                                                  int samples_per_view = 2048) {
  std::vector<std::vector<int>> cands(gt_maps.size());
  for (size_t v = 0; v < gt_maps.size(); ++v) {
    std::vector<int> fg;
    for (int p = 0; p < int(masks[v]->size()); ++p)
      if ((*masks[v])[size_t(p)]) fg.push_back(p);
    Rng rng(derive_seed(seed, 0x517, v));
    if (int(fg.size()) > samples_per_view) {
      rng.shuffle(fg);
      fg.resize(size_t(samples_per_view));
      std::sort(fg.begin(), fg.end());
    }
    cands[v] = std::move(fg);
  }
  return mine_pairs(gt_maps, masks, cands, eps_corr, max_pairs, seed);
}

// ---- consistency loss ----------------------------------------------------------
// Mean Euclidean distance between paired predictions from two views; the pair
// list indexes rows of the two [K,3] prediction matrices.

inline LossValue consistency_loss(const Tensor& xyz_a, const Tensor& xyz_b,
                                  const std::vector<std::pair<int, int>>& row_pairs) {
  if (row_pairs.empty()) return {0.0, true};
  double acc = 0;
  for (auto [i, j] : row_pairs) {
    double dx = xyz_a.at(i, 0) - xyz_b.at(j, 0);
    double dy = xyz_a.at(i, 1) - xyz_b.at(j, 1);
    double dz = xyz_a.at(i, 2) - xyz_b.at(j, 2);
    acc += std::sqrt(dx * dx + dy * dy + dz * dz);
  }
  return {acc / double(row_pairs.size()), false};
}

inline void consistency_loss_grad(const Tensor& xyz_a, const Tensor& xyz_b,
                                  const std::vector<std::pair<int, int>>& row_pairs, Tensor& ga,
                                  Tensor& gb) {
  ga = Tensor(xyz_a.shape);
  gb = Tensor(xyz_b.shape);
  if (row_pairs.empty()) return;
  const double inv = 1.0 / double(row_pairs.size());
  for (auto [i, j] : row_pairs) {
    double dx = xyz_a.at(i, 0) - xyz_b.at(j, 0);
    double dy = xyz_a.at(i, 1) - xyz_b.at(j, 1);
    double dz = xyz_a.at(i, 2) - xyz_b.at(j, 2);
    double n = std::sqrt(dx * dx + dy * dy + dz * dz);
    if (n < 1e-300) continue;
    ga.at(i, 0) += dx / n * inv;
    ga.at(i, 1) += dy / n * inv;
    ga.at(i, 2) += dz / n * inv;
    gb.at(j, 0) -= dx / n * inv;
    gb.at(j, 1) -= dy / n * inv;
    gb.at(j, 2) -= dz / n * inv;
  }
}

// ---- totals -------------------------------------------------------------------

struct SingleLossParts {
  double ln = 0, lm = 0, ls = 0;
};

inline double total_single(const SingleLossParts& p, const LossWeights& w) {
  return w.w1 * (w.wn * p.ln + w.wm * p.lm) + w.w2 * p.ls;
}

inline SingleLossParts total_single_grad(const LossWeights& w) {
  return {w.w1 * w.wn, w.w1 * w.wm, w.w2};
}

inline double total_multi(double l_single, const std::vector<double>& pair_losses,
                          const LossWeights& w) {
  if (pair_losses.empty()) return l_single;
  double acc = 0;
  for (double lc : pair_losses) acc += lc;
  return l_single + w.w3 / double(pair_losses.size()) * acc;
}

// ---- tape bindings --------------------------------------------------------------
// Loss nodes reuse the closed-form gradients above, so the values the gradient
// suite verifies are exactly what training backpropagates.

inline ad::Var node_nocs_loss(ad::Tape& tape, ad::Var pred, const NocsMap* gt) {
  LossValue lv = nocs_loss(tape.val(pred), *gt);
  Tensor out({1});
  out.data[0] = lv.value;
  return tape.make_node(std::move(out), {pred.i}, [gt](ad::Tape& t, int self) {
    auto& n = t.nodes[size_t(self)];
    int p = n.parents[0];
    if (!t.want(p)) return;
    Tensor gp = nocs_loss_grad(t.nodes[size_t(p)].val, *gt);
    Tensor& acc = t.g(p);
    double go = n.grad.data[0];
    for (size_t k = 0; k < acc.data.size(); ++k) acc.data[k] += go * gp.data[k];
  });
}

inline ad::Var node_mask_loss(ad::Tape& tape, ad::Var logits, const std::vector<uint8_t>* mask) {
  LossValue lv = mask_loss(tape.val(logits), *mask);
  Tensor out({1});
  out.data[0] = lv.value;
  return tape.make_node(std::move(out), {logits.i}, [mask](ad::Tape& t, int self) {
    auto& n = t.nodes[size_t(self)];
    int p = n.parents[0];
    if (!t.want(p)) return;
    Tensor gp = mask_loss_grad(t.nodes[size_t(p)].val, *mask);
    Tensor& acc = t.g(p);
    double go = n.grad.data[0];
    for (size_t k = 0; k < acc.data.size(); ++k) acc.data[k] += go * gp.data[k];
  });
}

inline ad::Var node_surface_loss(ad::Tape& tape, ad::Var xyz, Tensor gt) {
  LossValue lv = surface_loss(tape.val(xyz), gt);
  Tensor out({1});
  out.data[0] = lv.value;
  auto gt_held = std::make_shared<Tensor>(std::move(gt));
  return tape.make_node(std::move(out), {xyz.i}, [gt_held](ad::Tape& t, int self) {
    auto& n = t.nodes[size_t(self)];
    int p = n.parents[0];
    if (!t.want(p)) return;
    Tensor gp = surface_loss_grad(t.nodes[size_t(p)].val, *gt_held);
    Tensor& acc = t.g(p);
    double go = n.grad.data[0];
    for (size_t k = 0; k < acc.data.size(); ++k) acc.data[k] += go * gp.data[k];
  });
}

inline ad::Var node_consistency_loss(ad::Tape& tape, ad::Var xyz_a, ad::Var xyz_b,
                                     std::vector<std::pair<int, int>> row_pairs) {
  LossValue lv = consistency_loss(tape.val(xyz_a), tape.val(xyz_b), row_pairs);
  Tensor out({1});
  out.data[0] = lv.value;
  auto pairs_held = std::make_shared<std::vector<std::pair<int, int>>>(std::move(row_pairs));
  return tape.make_node(std::move(out), {xyz_a.i, xyz_b.i}, [pairs_held](ad::Tape& t, int self) {
    auto& n = t.nodes[size_t(self)];
    int pa = n.parents[0], pb = n.parents[1];
    Tensor ga, gb;
    consistency_loss_grad(t.nodes[size_t(pa)].val, t.nodes[size_t(pb)].val, *pairs_held, ga, gb);
    double go = n.grad.data[0];
    if (t.want(pa)) {
      Tensor& acc = t.g(pa);
      for (size_t k = 0; k < acc.data.size(); ++k) acc.data[k] += go * ga.data[k];
    }
    if (t.want(pb)) {
      Tensor& acc = t.g(pb);
      for (size_t k = 0; k < acc.data.size(); ++k) acc.data[k] += go * gb.data[k];
    }
  });
}

}  // namespace pix2surf
