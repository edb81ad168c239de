#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "pix2surf/dataset.hpp"
#include "pix2surf/losses.hpp"
#include "pix2surf/netcore.hpp"

namespace pix2surf {

struct TrainConfig {
  int epochs1 = 30;
  int epochs2 = 150;
  double lr1 = 1e-4;
  double lr2 = 1e-4;
  int views_per_iter = 5;
  int mv_warmup_epochs = 20;  // end-to-end epochs before max-pooling kicks in
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 10.0;
  uint64_t seed = 0;
  int max_pairs = 4096;  // per view pair
  bool cosine_decay = false;  // anneal lr2 over the end-to-end phase
  // ablations
  bool no_uv_amplifier = false;
  bool no_nocs_pretrain = false;
  bool no_consistency_loss = false;
  bool single_view_only = false;
  bool predict_hidden = false;

  void validate() const {
    if (lr1 <= 0 || lr2 <= 0) throw ConfigError("train: learning rates must be > 0");
    if (epochs1 < 0 || epochs2 < 0) throw ConfigError("train: epochs must be >= 0");
    if (views_per_iter < 1) throw ConfigError("train: views_per_iter must be >= 1");
  }

  nlohmann::json to_json() const {
    return {{"epochs1", epochs1},
            {"epochs2", epochs2},
            {"lr1", lr1},
            {"lr2", lr2},
            {"views_per_iter", views_per_iter},
            {"mv_warmup_epochs", mv_warmup_epochs},
            {"adam_beta1", adam_beta1},
            {"adam_beta2", adam_beta2},
            {"adam_eps", adam_eps},
            {"clip_norm", clip_norm},
            {"seed", seed},
            {"max_pairs", max_pairs},
            {"cosine_decay", cosine_decay},
            {"no_uv_amplifier", no_uv_amplifier},
            {"no_nocs_pretrain", no_nocs_pretrain},
            {"no_consistency_loss", no_consistency_loss},
            {"single_view_only", single_view_only},
            {"predict_hidden", predict_hidden}};
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.epochs1 = j.at("epochs1");
    c.epochs2 = j.at("epochs2");
    c.lr1 = j.at("lr1");
    c.lr2 = j.at("lr2");
    c.views_per_iter = j.at("views_per_iter");
    c.mv_warmup_epochs = j.at("mv_warmup_epochs");
    c.adam_beta1 = j.at("adam_beta1");
    c.adam_beta2 = j.at("adam_beta2");
    c.adam_eps = j.at("adam_eps");
    c.clip_norm = j.at("clip_norm");
    c.seed = j.at("seed");
    c.max_pairs = j.at("max_pairs");
    c.cosine_decay = j.value("cosine_decay", false);
    c.no_uv_amplifier = j.at("no_uv_amplifier");
    c.no_nocs_pretrain = j.at("no_nocs_pretrain");
    c.no_consistency_loss = j.at("no_consistency_loss");
    c.single_view_only = j.at("single_view_only");
    c.predict_hidden = j.at("predict_hidden");
    return c;
  }
};

struct LossRecord {
  int epoch = 0;
  std::string term;
  double value = 0;
};

struct TrainState {
  SurfaceModel model;
  std::map<std::string, Tensor> adam_m, adam_v;
  int64_t adam_t = 0;
  int p1_epochs_done = 0;
  int p2_epochs_done = 0;
  TrainConfig tcfg;
  LossWeights weights;
  std::vector<LossRecord> history;
};

// K foreground pixels (linear r*W+c). Distinct when the mask is large enough,
// with replacement otherwise; deterministic in the seed. Empty mask -> empty.
inline std::vector<int> sample_foreground(const std::vector<uint8_t>& mask, int K, uint64_t seed,
                                          bool* empty_flag = nullptr) {
  if (K < 1) throw ConfigError("sample_foreground: K must be >= 1");
  std::vector<int> fg;
  for (int p = 0; p < int(mask.size()); ++p)
    if (mask[size_t(p)]) fg.push_back(p);
  if (empty_flag) *empty_flag = fg.empty();
  if (fg.empty()) return {};
  Rng rng(derive_seed(seed, 0xf9));
  std::vector<int> out;
  out.reserve(size_t(K));
  if (int(fg.size()) >= K) {
    for (int i = 0; i < K; ++i) {  // partial Fisher-Yates
      size_t j = i + size_t(rng.next_below(uint64_t(fg.size() - i)));
      std::swap(fg[size_t(i)], fg[j]);
      out.push_back(fg[size_t(i)]);
    }
  } else {
    for (int i = 0; i < K; ++i) out.push_back(fg[size_t(rng.next_below(uint64_t(fg.size())))]);
  }
  return out;
}

namespace detail {

inline std::set<std::string> encoder_decoder_params(const SurfaceModel& m) {
  std::set<std::string> s;
  for (const auto& [name, _] : m.params)
    if (name.starts_with("enc.") || name.starts_with("dec.")) s.insert(name);
  return s;
}

inline Tensor gt_rows_at(const NocsMap& map, const std::vector<int>& pix) {
  Tensor gt({int(pix.size()), 3});
  for (int i = 0; i < int(pix.size()); ++i)
    for (int c = 0; c < 3; ++c) gt.at(i, c) = map.coords[size_t(pix[size_t(i)]) * 3 + c];
  return gt;
}

// Normalized image coordinates over the mask bounding box (the fixed-chart
// control: the input image itself acts as the chart).
inline Tensor image_coord_uv(const std::vector<uint8_t>& mask, int H, int W,
                             const std::vector<int>& pix) {
  int r0 = H, r1 = -1, c0 = W, c1 = -1;
  for (int p = 0; p < int(mask.size()); ++p) {
    if (!mask[size_t(p)]) continue;
    int r = p / W, c = p % W;
    r0 = std::min(r0, r); r1 = std::max(r1, r);
    c0 = std::min(c0, c); c1 = std::max(c1, c);
  }
  Tensor uv({int(pix.size()), 2});
  double dr = std::max(1, r1 - r0), dc = std::max(1, c1 - c0);
  for (int i = 0; i < int(pix.size()); ++i) {
    int r = pix[size_t(i)] / W, c = pix[size_t(i)] % W;
    uv.at(i, 0) = (c - c0) / dc;
    uv.at(i, 1) = (r - r0) / dr;
  }
  return uv;
}

struct StepStats {
  double ln = 0, lm = 0, ls = 0, lc = 0, total = 0;
  bool has_ls = false, has_lc = false;
};

inline void adam_step(TrainState& st, net::Ctx& ctx, double lr) {
  const TrainConfig& tc = st.tcfg;
  // deterministic order via the std::map in ctx.bound
  double sq = 0;
  std::vector<std::pair<std::string, const Tensor*>> grads;
  for (auto& [name, var] : ctx.bound) {
    auto& node = ctx.tape.nodes[size_t(var.i)];
    if (!node.needs_grad || node.grad.data.empty()) continue;
    for (double g : node.grad.data) sq += g * g;
    grads.emplace_back(name, &node.grad);
  }
  double scale = 1.0;
  double gnorm = std::sqrt(sq);
  if (!std::isfinite(gnorm))
    throw NumericError("non-finite gradient norm at adam step " + std::to_string(st.adam_t + 1));
  if (tc.clip_norm > 0 && gnorm > tc.clip_norm) scale = tc.clip_norm / gnorm;

  st.adam_t += 1;
  double b1t = 1.0 - std::pow(tc.adam_beta1, double(st.adam_t));
  double b2t = 1.0 - std::pow(tc.adam_beta2, double(st.adam_t));
  for (auto& [name, gptr] : grads) {
    Tensor& p = st.model.params.at(name);
    Tensor& m = st.adam_m.try_emplace(name, Tensor(p.shape)).first->second;
    Tensor& v = st.adam_v.try_emplace(name, Tensor(p.shape)).first->second;
    bool finite = true;
    for (size_t k = 0; k < p.data.size(); ++k) {
      double g = gptr->data[k] * scale;
      m.data[k] = tc.adam_beta1 * m.data[k] + (1 - tc.adam_beta1) * g;
      v.data[k] = tc.adam_beta2 * v.data[k] + (1 - tc.adam_beta2) * g * g;
      double mhat = m.data[k] / b1t;
      double vhat = v.data[k] / b2t;
      p.data[k] -= lr * mhat / (std::sqrt(vhat) + tc.adam_eps);
      finite = finite && std::isfinite(p.data[k]);
    }
    if (!finite)
      throw NumericError("non-finite values in parameter '" + name + "' after adam step " +
                         std::to_string(st.adam_t));
  }
}

inline double phase2_lr(const TrainConfig& tc, int epoch) {
  if (!tc.cosine_decay || tc.epochs2 <= 1) return tc.lr2;
  double t = double(epoch) / double(tc.epochs2 - 1);
  double floor = 0.05 * tc.lr2;
  return floor + (tc.lr2 - floor) * 0.5 * (1.0 + std::cos(3.141592653589793 * t));
}

inline void guard_finite(double v, const std::string& term, int epoch, int step) {
  if (!std::isfinite(v))
    throw NumericError("non-finite " + term + " at epoch " + std::to_string(epoch) + " step " +
                       std::to_string(step) + " (value " + format_double(v) + ")");
}

}  // namespace detail

inline TrainState init_train_state(const NetConfig& net_cfg, const TrainConfig& tcfg,
                                   const LossWeights& weights) {
  tcfg.validate();
  weights.validate();
  NetConfig nc = net_cfg;
  if (tcfg.no_uv_amplifier) nc.no_uv_amplifier = true;
  if (tcfg.predict_hidden) nc.predict_hidden = true;
  TrainState st;
  st.model = SurfaceModel::create(nc, derive_seed(tcfg.seed, 0x90de1));
  st.tcfg = tcfg;
  st.weights = weights;
  return st;
}

// Phase 1: NOCS map + mask prediction on the encoder/decoder only.
inline void pretrain_nocs_uv(TrainState& st, const Dataset& ds) {
  if (ds.views.empty()) throw ConfigError("pretrain: dataset is empty");
  if (st.tcfg.no_nocs_pretrain) {
    st.p1_epochs_done = st.tcfg.epochs1;
    return;
  }
  const std::set<std::string> trainable = detail::encoder_decoder_params(st.model);
  const LossWeights& w = st.weights;

  for (int epoch = st.p1_epochs_done; epoch < st.tcfg.epochs1; ++epoch) {
    std::vector<int> order(ds.views.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
    Rng ord_rng(derive_seed(st.tcfg.seed, 0x1000, uint64_t(epoch)));
    ord_rng.shuffle(order);

    double sum_ln = 0, sum_lm = 0, sum_total = 0;
    for (int step = 0; step < int(order.size()); ++step) {
      const ViewSample& vs = ds.views[size_t(order[size_t(step)])];
      ad::Tape tape;
      net::Ctx ctx(tape, st.model);
      ctx.trainable = &trainable;

      net::EncodeOut enc = net::encode(ctx, net::image_to_tensor(vs.rgb));
      net::DecodeOut dec = net::decode(ctx, enc);
      ad::Var ln = node_nocs_loss(tape, dec.nocs, &vs.nocs_visible);
      if (st.model.config.predict_hidden) {
        ad::Var lnh = node_nocs_loss(tape, dec.hidden, &vs.nocs_hidden);
        ln = tape.wsum({{ln, 0.5}, {lnh, 0.5}});
      }
      ad::Var lm = node_mask_loss(tape, dec.mask_logits, &vs.mask);
      ad::Var loss = tape.wsum({{ln, w.wn}, {lm, w.wm}});
      double lv = tape.val(loss).data[0];
      detail::guard_finite(lv, "pretrain loss", epoch, step);
      tape.backward(loss);
      detail::adam_step(st, ctx, st.tcfg.lr1);

      sum_ln += tape.val(ln).data[0];
      sum_lm += tape.val(lm).data[0];
      sum_total += lv;
    }
    int n = int(order.size());
    st.history.push_back({epoch, "p1_ln", sum_ln / n});
    st.history.push_back({epoch, "p1_lm", sum_lm / n});
    st.history.push_back({epoch, "p1_total", sum_total / n});
    st.p1_epochs_done = epoch + 1;
  }
}

namespace detail {

inline StepStats single_view_step(TrainState& st, const ViewSample& vs, int epoch, int step) {
  const LossWeights& w = st.weights;
  ad::Tape tape;
  net::Ctx ctx(tape, st.model);

  net::EncodeOut enc = net::encode(ctx, net::image_to_tensor(vs.rgb));
  net::DecodeOut dec = net::decode(ctx, enc);
  ad::Var ln = node_nocs_loss(tape, dec.nocs, &vs.nocs_visible);
  if (st.model.config.predict_hidden) {
    ad::Var lnh = node_nocs_loss(tape, dec.hidden, &vs.nocs_hidden);
    ln = tape.wsum({{ln, 0.5}, {lnh, 0.5}});
  }
  ad::Var lm = node_mask_loss(tape, dec.mask_logits, &vs.mask);

  std::vector<int> pix =
      sample_foreground(vs.mask, w.K, derive_seed(st.tcfg.seed, 0x2000, uint64_t(epoch), uint64_t(step)));
  ad::Var loss, ls;
  bool has_ls = !pix.empty();
  if (has_ls) {
    ad::Var z = net::extract_code(ctx, enc.bottleneck);
    ad::Var uv = st.model.config.image_coords_chart
                     ? tape.constant(image_coord_uv(vs.mask, vs.rgb.h, vs.rgb.w, pix))
                     : tape.gather_pixels(dec.chart, pix);
    ad::Var xyz = net::sp_forward(ctx, z, net::amplify_uv(ctx, uv));
    ls = node_surface_loss(tape, xyz, gt_rows_at(vs.nocs_visible, pix));
    loss = tape.wsum({{ln, w.w1 * w.wn}, {lm, w.w1 * w.wm}, {ls, w.w2}});
  } else {
    loss = tape.wsum({{ln, w.w1 * w.wn}, {lm, w.w1 * w.wm}});
  }
  StepStats stats;
  stats.ln = tape.val(ln).data[0];
  stats.lm = tape.val(lm).data[0];
  stats.ls = has_ls ? tape.val(ls).data[0] : 0.0;
  stats.has_ls = has_ls;
  stats.total = tape.val(loss).data[0];
  guard_finite(stats.total, "train loss", epoch, step);
  tape.backward(loss);
  adam_step(st, ctx, phase2_lr(st.tcfg, epoch));
  return stats;
}

inline StepStats multi_view_step(TrainState& st, const Dataset& ds, const std::vector<int>& view_ids,
                                 int epoch, int step, bool warmup) {
  const LossWeights& w = st.weights;
  const int V = int(view_ids.size());
  ad::Tape tape;
  net::Ctx ctx(tape, st.model);

  std::vector<net::EncodeOut> encs;
  std::vector<ad::Var> codes;
  for (int v = 0; v < V; ++v) {
    const ViewSample& vs = ds.views[size_t(view_ids[size_t(v)])];
    encs.push_back(net::encode(ctx, net::image_to_tensor(vs.rgb)));
    codes.push_back(net::extract_code(ctx, encs.back().bottleneck));
  }
  ad::Var fused_feat, fused_code;
  if (!warmup) {
    std::vector<ad::Var> feats;
    for (auto& e : encs) feats.push_back(e.bottleneck);
    fused_feat = tape.emax(feats);
    fused_code = tape.emax(codes);
  }

  std::vector<std::pair<ad::Var, double>> terms;
  std::vector<ad::Var> xyz_by_view(size_t(V), ad::Var{});
  std::vector<std::vector<int>> pix_by_view(size_t(V), std::vector<int>{});
  StepStats stats;
  for (int v = 0; v < V; ++v) {
    const ViewSample& vs = ds.views[size_t(view_ids[size_t(v)])];
    net::DecodeOut dec = net::decode(ctx, encs[size_t(v)], warmup ? encs[size_t(v)].bottleneck : fused_feat);
    ad::Var ln = node_nocs_loss(tape, dec.nocs, &vs.nocs_visible);
    if (st.model.config.predict_hidden) {
      ad::Var lnh = node_nocs_loss(tape, dec.hidden, &vs.nocs_hidden);
      ln = tape.wsum({{ln, 0.5}, {lnh, 0.5}});
    }
    ad::Var lm = node_mask_loss(tape, dec.mask_logits, &vs.mask);

    std::vector<int> pix = sample_foreground(
        vs.mask, w.K, derive_seed(st.tcfg.seed, 0x3000, uint64_t(epoch), uint64_t(step * 131 + v)));
    pix_by_view[size_t(v)] = pix;
    ad::Var code = tape.concat_cols(codes[size_t(v)], warmup ? codes[size_t(v)] : fused_code);
    if (!pix.empty()) {
      ad::Var uv = st.model.config.image_coords_chart
                       ? tape.constant(image_coord_uv(vs.mask, vs.rgb.h, vs.rgb.w, pix))
                       : tape.gather_pixels(dec.chart, pix);
      ad::Var xyz = net::sp_forward(ctx, code, net::amplify_uv(ctx, uv));
      xyz_by_view[size_t(v)] = xyz;
      ad::Var ls = node_surface_loss(tape, xyz, gt_rows_at(vs.nocs_visible, pix));
      terms.push_back({ls, w.w2 / V});
      stats.ls += tape.val(ls).data[0] / V;
      stats.has_ls = true;
    }
    terms.push_back({ln, w.w1 * w.wn / V});
    terms.push_back({lm, w.w1 * w.wm / V});
    stats.ln += tape.val(ln).data[0] / V;
    stats.lm += tape.val(lm).data[0] / V;
  }

  // consistency over all view pairs, correspondences mined from the sampled
  // foreground pixels via ground-truth NOCS proximity
  double w3 = st.tcfg.no_consistency_loss ? 0.0 : w.w3;
  int n_view_pairs = V * (V - 1) / 2;
  if (w3 > 0 && n_view_pairs > 0) {
    std::vector<const NocsMap*> maps;
    std::vector<const std::vector<uint8_t>*> masks;
    for (int v = 0; v < V; ++v) {
      const ViewSample& vs = ds.views[size_t(view_ids[size_t(v)])];
      maps.push_back(&vs.nocs_visible);
      masks.push_back(&vs.mask);
    }
    auto pairs = mine_pairs(maps, masks, pix_by_view, w.eps_corr, st.tcfg.max_pairs,
                            derive_seed(st.tcfg.seed, 0x4000, uint64_t(epoch), uint64_t(step)));
    // rows of the sampled pixel arrays (first occurrence wins for duplicates)
    std::vector<std::unordered_map<int, int>> row_of(size_t(V), std::unordered_map<int, int>{});
    for (int v = 0; v < V; ++v)
      for (int i = 0; i < int(pix_by_view[size_t(v)].size()); ++i)
        row_of[size_t(v)].try_emplace(pix_by_view[size_t(v)][size_t(i)], i);

    std::map<std::pair<int, int>, std::vector<std::pair<int, int>>> grouped;
    for (const auto& pr : pairs)
      grouped[{pr.view_a, pr.view_b}].push_back(std::pair<int, int>(
          row_of[size_t(pr.view_a)].at(pr.pix_a), row_of[size_t(pr.view_b)].at(pr.pix_b)));

    int counted = 0;
    for (auto& [ab, rows] : grouped) {
      if (!xyz_by_view[size_t(ab.first)].valid() || !xyz_by_view[size_t(ab.second)].valid()) continue;
      ad::Var lc = node_consistency_loss(tape, xyz_by_view[size_t(ab.first)],
                                         xyz_by_view[size_t(ab.second)], rows);
      terms.push_back({lc, w3 / n_view_pairs});
      stats.lc += tape.val(lc).data[0] / n_view_pairs;
      ++counted;
    }
    stats.has_lc = counted > 0;
  }

  ad::Var loss = tape.wsum(terms);
  stats.total = tape.val(loss).data[0];
  guard_finite(stats.total, "multi-view loss", epoch, step);
  tape.backward(loss);
  adam_step(st, ctx, phase2_lr(st.tcfg, epoch));
  return stats;
}

}  // namespace detail

// Phase 2: joint training of every branch. multi_view selects the atlas path
// with feature pooling and the consistency objective.
inline void train_end_to_end(TrainState& st, const Dataset& ds, bool multi_view) {
  if (ds.views.empty()) throw ConfigError("train: dataset is empty");
  if (st.tcfg.single_view_only) multi_view = false;
  if (multi_view && !st.model.config.multiview)
    throw IncompatError("train: multi_view requested but the model is single-view");
  if (!multi_view && st.model.config.multiview)
    throw IncompatError("train: model is multiview; train with multi_view=true");
  if (multi_view) {
    for (const auto& idxs : ds.by_shape)
      if (st.tcfg.views_per_iter > int(idxs.size()))
        throw ConfigError("train: views_per_iter exceeds dataset views for a shape");
  }

  for (int epoch = st.p2_epochs_done; epoch < st.tcfg.epochs2; ++epoch) {
    double sum_ln = 0, sum_lm = 0, sum_ls = 0, sum_lc = 0, sum_total = 0;
    int n_steps = 0;

    if (!multi_view) {
      std::vector<int> order(ds.views.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
      Rng ord_rng(derive_seed(st.tcfg.seed, 0x5000, uint64_t(epoch)));
      ord_rng.shuffle(order);
      for (int step = 0; step < int(order.size()); ++step) {
        auto s = detail::single_view_step(st, ds.views[size_t(order[size_t(step)])], epoch, step);
        sum_ln += s.ln; sum_lm += s.lm; sum_ls += s.ls; sum_total += s.total;
        ++n_steps;
      }
    } else {
      bool warmup = epoch < st.tcfg.mv_warmup_epochs;
      std::vector<int> shape_order(ds.by_shape.size());
      for (size_t i = 0; i < shape_order.size(); ++i) shape_order[i] = int(i);
      Rng ord_rng(derive_seed(st.tcfg.seed, 0x6000, uint64_t(epoch)));
      ord_rng.shuffle(shape_order);
      for (int step = 0; step < int(shape_order.size()); ++step) {
        const auto& all_views = ds.by_shape[size_t(shape_order[size_t(step)])];
        std::vector<int> pick = all_views;
        Rng view_rng(derive_seed(st.tcfg.seed, 0x7000, uint64_t(epoch), uint64_t(step)));
        view_rng.shuffle(pick);
        pick.resize(size_t(std::min(st.tcfg.views_per_iter, int(pick.size()))));
        auto s = detail::multi_view_step(st, ds, pick, epoch, step, warmup);
        sum_ln += s.ln; sum_lm += s.lm; sum_ls += s.ls; sum_lc += s.lc; sum_total += s.total;
        ++n_steps;
      }
    }

    st.history.push_back({epoch, "p2_ln", sum_ln / n_steps});
    st.history.push_back({epoch, "p2_lm", sum_lm / n_steps});
    st.history.push_back({epoch, "p2_ls", sum_ls / n_steps});
    if (multi_view) st.history.push_back({epoch, "p2_lc", sum_lc / n_steps});
    st.history.push_back({epoch, "p2_total", sum_total / n_steps});
    st.p2_epochs_done = epoch + 1;
  }
}

// ---- checkpointing -------------------------------------------------------------

inline void save_checkpoint(const TrainState& st, const std::string& path) {
  ArrayContainer c;
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& r : st.history) hist.push_back({r.epoch, r.term, r.value});
  c.meta = {{"kind", "pix2surf-train-state"},
            {"net", st.model.config.to_json()},
            {"train", st.tcfg.to_json()},
            {"weights",
             {{"w1", st.weights.w1},
              {"w2", st.weights.w2},
              {"wn", st.weights.wn},
              {"wm", st.weights.wm},
              {"w3", st.weights.w3},
              {"K", st.weights.K},
              {"eps_corr", st.weights.eps_corr},
              {"eps_eval", st.weights.eps_eval}}},
            {"adam_t", st.adam_t},
            {"p1_epochs_done", st.p1_epochs_done},
            {"p2_epochs_done", st.p2_epochs_done},
            {"history", hist}};
  c.arrays = st.model.params;
  for (const auto& [name, t] : st.adam_m) c.arrays["adam.m/" + name] = t;
  for (const auto& [name, t] : st.adam_v) c.arrays["adam.v/" + name] = t;
  write_container(path, c);
}

inline TrainState load_checkpoint(const std::string& path) {
  ArrayContainer c = read_container(path);
  if (c.meta.value("kind", "") != "pix2surf-train-state")
    throw IncompatError("not a training checkpoint: " + path);
  TrainState st;
  st.model.config = NetConfig::from_json(c.meta.at("net"));
  st.tcfg = TrainConfig::from_json(c.meta.at("train"));
  const auto& wj = c.meta.at("weights");
  st.weights.w1 = wj.at("w1");
  st.weights.w2 = wj.at("w2");
  st.weights.wn = wj.at("wn");
  st.weights.wm = wj.at("wm");
  st.weights.w3 = wj.at("w3");
  st.weights.K = wj.at("K");
  st.weights.eps_corr = wj.at("eps_corr");
  st.weights.eps_eval = wj.at("eps_eval");
  st.adam_t = c.meta.at("adam_t");
  st.p1_epochs_done = c.meta.at("p1_epochs_done");
  st.p2_epochs_done = c.meta.at("p2_epochs_done");
  for (const auto& h : c.meta.at("history"))
    st.history.push_back({h[0], h[1], h[2]});
  for (auto& [name, t] : c.arrays) {
    if (name.starts_with("adam.m/")) st.adam_m[name.substr(7)] = std::move(t);
    else if (name.starts_with("adam.v/")) st.adam_v[name.substr(7)] = std::move(t);
    else st.model.params[name] = std::move(t);
  }
  if (!st.model.finite()) throw NumericError("checkpoint contains non-finite parameters");
  return st;
}

// Guards a resume against a different architecture; names the differing key.
inline void require_checkpoint_config(const TrainState& st, const NetConfig& expected) {
  require_matching_config(expected.to_json(), st.model.config.to_json(), "net config");
}

inline void write_loss_csv(const TrainState& st, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for write: " + path);
  f << "epoch,term,value\n";
  for (const auto& r : st.history)
    f << r.epoch << "," << r.term << "," << format_double(r.value) << "\n";
}

}  // namespace pix2surf
