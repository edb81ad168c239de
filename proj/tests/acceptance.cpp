// Acceptance suite: end-to-end checks of the full pipeline, one PASS/FAIL
// line per criterion. Training-based criteria share a small set of seeded
// runs on one synthetic dataset. Exits nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <vector>

#include "oracles.hpp"
#include "pix2surf.hpp"

using namespace pix2surf;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  if (!pass) ++g_failures;
  std::printf("CRITERION %d: %s — %s\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

void info(const std::string& line) {
  std::printf("  info: %s\n", line.c_str());
  std::fflush(stdout);
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// criterion 1: metric oracle suite

NocsMap random_map(int h, int w, double fg, uint64_t seed) {
  NocsMap m(h, w);
  Rng rng(seed);
  for (int p = 0; p < h * w; ++p) {
    if (rng.uniform() > fg) continue;
    m.valid[size_t(p)] = 1;
    for (int c = 0; c < 3; ++c) m.coords[size_t(p) * 3 + c] = rng.uniform();
  }
  return m;
}

void criterion_1() {
  auto t0 = Clock::now();
  double worst = 0;
  int instances = 0;
  bool ok = true;

  for (int trial = 0; trial < 18; ++trial) {
    // maps with <= 500 valid pixels
    NocsMap a = random_map(20, 20, 0.6, 1000 + trial);
    NocsMap b = random_map(20, 20, 0.55, 2000 + trial);
    if (a.valid_count() == 0 || b.valid_count() == 0) continue;

    double d_rec = std::fabs(recon_error(a, b).value -
                             oracle::chamfer_sq_brute(oracle::map_points(a), oracle::map_points(b)));
    worst = std::max(worst, d_rec);
    ++instances;

    bool any = false;
    double brute_corr = oracle::corr_error_brute(a, b, &any);
    MetricValue mc = corr_error(a, b);
    if (any) {
      worst = std::max(worst, std::fabs(mc.value - brute_corr));
      ++instances;
    } else {
      ok = ok && mc.missing;
    }

    auto ours_h = discontinuity_histogram(a);
    auto brute_h = oracle::discontinuity_hist_brute(a);
    for (int i = 0; i < 20; ++i)
      if (ours_h.counts[size_t(i)] != brute_h[size_t(i)]) ok = false;
    ++instances;

    auto ours_g = discontinuity_histogram(b);
    auto brute_g = oracle::discontinuity_hist_brute(b);
    worst = std::max(worst, std::fabs(discontinuity_score(ours_h, ours_g).value -
                                      oracle::score_brute(brute_h, brute_g)));
    ++instances;
  }

  // cross-view consistency on rendered triples (small masks)
  for (int trial = 0; trial < 8; ++trial) {
    CanonicalShape shape = generate_shape(
        trial % 2 ? ShapeFamily::Superellipsoid : ShapeFamily::BoxUnion, 30 + trial);
    Camera base;
    base.position = {2.4, 0.55, 0.6};
    base.look_at = {0.5, 0.5, 0.5};
    base.fov = 0.55;
    base.height = base.width = 20;
    Camera c2 = base, c3 = base;
    c2.position = {2.35, 0.8, 0.65};
    c3.position = {2.3, 0.4, 0.45};
    ViewSample v1 = render_view(shape, base), v2 = render_view(shape, c2), v3 = render_view(shape, c3);
    NocsMap p1 = v1.nocs_visible, p2 = v2.nocs_visible, p3 = v3.nocs_visible;
    Rng rng(40 + trial);
    for (auto* m : {&p1, &p2, &p3})
      for (double& v : m->coords) v = std::min(1.0, std::max(0.0, v + 0.03 * (rng.uniform() - 0.5)));
    std::vector<const NocsMap*> pred = {&p1, &p2, &p3};
    std::vector<const NocsMap*> gt = {&v1.nocs_visible, &v2.nocs_visible, &v3.nocs_visible};
    for (double eps : {1e-3, 0.02}) {
      int64_t n = 0;
      double brute = oracle::consistency_error_brute(pred, gt, eps, &n);
      MetricValue mv = consistency_error(pred, gt, eps);
      if (n > 0) {
        worst = std::max(worst, std::fabs(mv.value - brute));
        ++instances;
      } else {
        ok = ok && mv.missing;
      }
    }
  }

  double dt = seconds_since(t0);
  bool pass = ok && instances >= 50 && worst < 1e-12 && dt < 60.0;
  report(1, pass,
         "metric oracle suite: " + std::to_string(instances) + " instances, max deviation " +
             fmt(worst) + ", " + fmt(dt) + " s");
}

// ---------------------------------------------------------------------------
// criterion 2: gradient suite

template <typename EvalFn>
double max_rel_err(Tensor& x, const Tensor& analytic, EvalFn eval, double h = 1e-6) {
  double worst = 0;
  for (size_t k = 0; k < x.data.size(); ++k) {
    double keep = x.data[k];
    x.data[k] = keep + h;
    double up = eval();
    x.data[k] = keep - h;
    double dn = eval();
    x.data[k] = keep;
    double fd = (up - dn) / (2 * h);
    double rel = std::fabs(analytic.data[k] - fd) /
                 std::max({1.0, std::fabs(fd), std::fabs(analytic.data[k])});
    worst = std::max(worst, rel);
  }
  return worst;
}

void criterion_2() {
  auto t0 = Clock::now();
  double worst = 0;
  Rng rng(7);

  for (int trial = 0; trial < 6; ++trial) {
    NocsMap gt = random_map(7, 7, 0.6, 500 + trial);
    Tensor pred({3, 7, 7});
    for (double& v : pred.data) v = rng.uniform();
    Tensor g = nocs_loss_grad(pred, gt);
    worst = std::max(worst, max_rel_err(pred, g, [&] { return nocs_loss(pred, gt).value; }));

    std::vector<uint8_t> mask(49);
    for (auto& m : mask) m = rng.uniform() < 0.5 ? 1 : 0;
    Tensor logits({1, 7, 7});
    for (double& v : logits.data) v = rng.normal();
    Tensor gm = mask_loss_grad(logits, mask);
    worst = std::max(worst, max_rel_err(logits, gm, [&] { return mask_loss(logits, mask).value; }));

    Tensor sp({10, 3}), sg({10, 3});
    for (double& v : sp.data) v = rng.uniform();
    for (double& v : sg.data) v = rng.uniform();
    Tensor gs = surface_loss_grad(sp, sg);
    worst = std::max(worst, max_rel_err(sp, gs, [&] { return surface_loss(sp, sg).value; }));

    Tensor xa({8, 3}), xb({9, 3});
    for (double& v : xa.data) v = rng.uniform();
    for (double& v : xb.data) v = rng.uniform();
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < 10; ++i) pairs.push_back({int(rng.next_below(8)), int(rng.next_below(9))});
    Tensor ga, gb;
    consistency_loss_grad(xa, xb, pairs, ga, gb);
    worst = std::max(worst,
                     max_rel_err(xa, ga, [&] { return consistency_loss(xa, xb, pairs).value; }));
    worst = std::max(worst,
                     max_rel_err(xb, gb, [&] { return consistency_loss(xa, xb, pairs).value; }));

    // totals as functions of their parts
    LossWeights w;
    Tensor parts({3});
    for (double& v : parts.data) v = rng.uniform();
    SingleLossParts grad_parts = total_single_grad(w);
    Tensor gp({3});
    gp.data = {grad_parts.ln, grad_parts.lm, grad_parts.ls};
    worst = std::max(worst, max_rel_err(parts, gp, [&] {
                       return total_single({parts.data[0], parts.data[1], parts.data[2]}, w);
                     }));

    Tensor multi_parts({4});  // l_single + three pair losses
    for (double& v : multi_parts.data) v = rng.uniform();
    Tensor gmp({4});
    gmp.data = {1.0, w.w3 / 3, w.w3 / 3, w.w3 / 3};
    worst = std::max(worst, max_rel_err(multi_parts, gmp, [&] {
                       return total_multi(multi_parts.data[0],
                                          {multi_parts.data[1], multi_parts.data[2], multi_parts.data[3]}, w);
                     }));
  }

  double dt = seconds_since(t0);
  report(2, worst < 1e-4 && dt < 120.0,
         "gradient suite: max relative error " + fmt(worst) + ", " + fmt(dt) + " s");
}

// ---------------------------------------------------------------------------
// shared training infrastructure for criteria 3-8

struct RunArtifacts {
  TrainState state;
  std::vector<std::optional<NocsMap>> pred_maps;   // per dataset view
  std::vector<std::optional<NocsMap>> hidden_maps;
  std::vector<UvMesh> meshes;                      // aligned with dataset views
  MetricsReport report;
};

InferParams accept_infer_params() {
  InferParams ip;
  ip.uv_res = 128;
  ip.final_res = 128;
  ip.outlier_t = 0.02;
  return ip;
}

// reconstruct every dataset view with the trained model and evaluate
RunArtifacts finish_run(TrainState state, const Dataset& ds, bool multiview) {
  RunArtifacts art;
  art.state = std::move(state);
  art.pred_maps.resize(ds.views.size());
  art.hidden_maps.resize(ds.views.size());
  art.meshes.resize(ds.views.size());
  InferParams ip = accept_infer_params();

  for (size_t si = 0; si < ds.by_shape.size(); ++si) {
    const auto& idxs = ds.by_shape[si];
    std::vector<ImageF> images;
    for (int vi : idxs) images.push_back(ds.views[size_t(vi)].rgb);
    std::vector<ReconstructOutput> ros;
    if (multiview) {
      ros = reconstruct_detailed(art.state.model, images, ReconstructMode::Multi, ip);
    } else {
      for (auto& img : images) {
        auto one = reconstruct_detailed(art.state.model, {img}, ReconstructMode::Single, ip);
        ros.push_back(std::move(one.front()));
      }
    }
    for (size_t k = 0; k < idxs.size(); ++k) {
      int vi = idxs[k];
      const ViewSample& vs = ds.views[size_t(vi)];
      art.pred_maps[size_t(vi)] =
          surface_to_nocs_map(ros[k].mesh, vs.camera, vs.rgb.h, vs.rgb.w);
      if (art.state.model.config.predict_hidden) {
        NocsMap hm(vs.rgb.h, vs.rgb.w);
        hm.valid = ros[k].pred_mask;
        const Tensor& hp = ros[k].dec.nocs_hidden;
        for (int p = 0; p < vs.rgb.h * vs.rgb.w; ++p)
          if (hm.valid[size_t(p)])
            for (int c = 0; c < 3; ++c)
              hm.coords[size_t(p) * 3 + c] = hp.data[size_t(c) * vs.rgb.h * vs.rgb.w + p];
        art.hidden_maps[size_t(vi)] = std::move(hm);
      }
      art.meshes[size_t(vi)] = std::move(ros[k].mesh);
    }
  }

  PredictionSet preds;
  preds.visible = art.pred_maps;
  preds.hidden = art.hidden_maps;
  art.report = evaluate(preds, ds, 1e-3);
  return art;
}

struct AcceptSetup {
  fs::path root;
  Dataset ds;
};

// desk-scale training configuration shared by every run
TrainConfig accept_train_config() {
  TrainConfig tc;
  tc.epochs1 = 50;
  tc.epochs2 = 220;
  tc.lr1 = 1e-3;
  tc.lr2 = 1e-3;
  tc.cosine_decay = true;
  tc.views_per_iter = 5;
  tc.mv_warmup_epochs = 30;
  tc.seed = 11;
  return tc;
}

NetConfig accept_net_config(bool multiview) {
  NetConfig nc;
  nc.input_height = nc.input_width = 64;
  nc.channel_scale = 0.25;
  nc.sp_hidden = 768;
  nc.multiview = multiview;
  return nc;
}

LossWeights accept_weights(bool multiview) {
  LossWeights w;
  w.K = 768;
  w.eps_corr = 0.02;  // desk-resolution mining threshold
  if (multiview) {
    w.wn = 0.1;
    w.wm = 0.1;
  }
  return w;
}

RunArtifacts train_run(const Dataset& ds, bool multiview, double w3, bool image_coords,
                       bool hidden, const std::string& label) {
  auto t0 = Clock::now();
  NetConfig nc = accept_net_config(multiview);
  nc.image_coords_chart = image_coords;
  nc.predict_hidden = hidden;
  TrainConfig tc = accept_train_config();
  tc.predict_hidden = hidden;
  LossWeights w = accept_weights(multiview);
  w.w3 = w3;
  if (w3 == 0.0) tc.no_consistency_loss = true;

  TrainState st = init_train_state(nc, tc, w);
  pretrain_nocs_uv(st, ds);
  train_end_to_end(st, ds, multiview);
  RunArtifacts art = finish_run(std::move(st), ds, multiview);
  double ls = 0;
  for (const auto& r : art.state.history)
    if (r.term == "p2_ls") ls = r.value;
  info("run " + label + ": " + fmt(seconds_since(t0)) + " s, final surface loss " + fmt(ls) +
       ", E_rec x1000 = " + fmt(art.report.overall().e_rec * 1000));
  return art;
}

double centroid_baseline_e_rec(const Dataset& ds) {
  double acc = 0;
  int n = 0;
  for (const auto& vs : ds.views) {
    Vec3 centroid{0, 0, 0};
    int m = 0;
    for (int p = 0; p < vs.rgb.h * vs.rgb.w; ++p) {
      if (!vs.mask[size_t(p)]) continue;
      centroid += Vec3{vs.nocs_visible.coords[size_t(p) * 3], vs.nocs_visible.coords[size_t(p) * 3 + 1],
                       vs.nocs_visible.coords[size_t(p) * 3 + 2]};
      ++m;
    }
    if (m == 0) continue;
    centroid = centroid / double(m);
    NocsMap pred(vs.rgb.h, vs.rgb.w);
    pred.valid = vs.mask;
    for (int p = 0; p < vs.rgb.h * vs.rgb.w; ++p)
      if (pred.valid[size_t(p)]) {
        pred.coords[size_t(p) * 3] = centroid.x;
        pred.coords[size_t(p) * 3 + 1] = centroid.y;
        pred.coords[size_t(p) * 3 + 2] = centroid.z;
      }
    acc += recon_error(pred, vs.nocs_visible).value;
    ++n;
  }
  return acc / n;
}

double mean_s_cont_family(const MetricsReport& report, const std::string& family) {
  double acc = 0;
  int n = 0;
  for (const auto& r : report.records) {
    if (r.family != family || r.s_cont.missing) continue;
    acc += r.s_cont.value;
    ++n;
  }
  return n > 0 ? acc / n : 0.0;
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  criterion_1();
  criterion_2();

  // shared synthetic dataset: 8 shapes x 5 views at 64x64
  fs::path root = fs::temp_directory_path() / "p2s_acceptance";
  fs::remove_all(root);
  DatasetConfig dc;
  dc.n_shapes = 8;
  dc.views_per_shape = 5;
  dc.height = dc.width = 64;
  dc.seed = 77;
  DatasetManifest manifest1 = build_dataset(dc, root / "data");
  Dataset ds = load_dataset(root / "data");
  info("dataset: " + std::to_string(ds.views.size()) + " views");

  // ---- criterion 8: determinism --------------------------------------------
  {
    DatasetManifest manifest2 = build_dataset(dc, root / "data_again");
    bool synth_same = manifest1.dump() == manifest2.dump();

    // checkpoint byte round-trip + bit-identical resume on a small run
    DatasetConfig small = dc;
    small.n_shapes = 2;
    small.views_per_shape = 3;
    small.height = small.width = 32;
    build_dataset(small, root / "small");
    Dataset small_ds = load_dataset(root / "small");

    NetConfig nc = accept_net_config(false);
    nc.input_height = nc.input_width = 32;
    TrainConfig tc = accept_train_config();
    tc.epochs1 = 1;
    tc.epochs2 = 4;
    LossWeights w = accept_weights(false);
    w.K = 64;

    TrainState full = init_train_state(nc, tc, w);
    pretrain_nocs_uv(full, small_ds);
    train_end_to_end(full, small_ds, false);

    TrainConfig tc_half = tc;
    tc_half.epochs2 = 2;
    TrainState half = init_train_state(nc, tc_half, w);
    pretrain_nocs_uv(half, small_ds);
    train_end_to_end(half, small_ds, false);
    save_checkpoint(half, (root / "ck_half").string());
    TrainState resumed = load_checkpoint((root / "ck_half").string());
    resumed.tcfg.epochs2 = 4;
    train_end_to_end(resumed, small_ds, false);

    bool resume_same = true;
    for (const auto& [name, t] : full.model.params)
      if (resumed.model.params.at(name).data != t.data) resume_same = false;

    save_checkpoint(full, (root / "ck_a").string());
    TrainState reloaded = load_checkpoint((root / "ck_a").string());
    save_checkpoint(reloaded, (root / "ck_b").string());
    std::ifstream fa(root / "ck_a", std::ios::binary), fb(root / "ck_b", std::ios::binary);
    std::string ba((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string bb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    bool ckpt_same = !ba.empty() && ba == bb;

    report(8, synth_same && resume_same && ckpt_same,
           std::string("determinism: synth manifests ") + (synth_same ? "identical" : "differ") +
               ", checkpoint round-trip " + (ckpt_same ? "bit-identical" : "differs") +
               ", resume " + (resume_same ? "bit-identical" : "differs"));
  }

  // ---- criterion 7 (data-only parts): gt round trip + brute-force oracles ----
  bool roundtrip_ok = true;
  double worst_frac = 1.0;
  {
    for (size_t si = 0; si < ds.by_shape.size(); ++si) {
      CanonicalShape shape = generate_shape(
          family_from_name(ds.views[size_t(ds.by_shape[si][0])].family),
          derive_seed(dc.seed, 11, uint64_t(si)));
      TriMesh mesh = tessellate_shape(shape);
      for (int vi : ds.by_shape[si]) {
        const ViewSample& vs = ds.views[size_t(vi)];
        NocsMap rast = surface_to_nocs_map(mesh, vs.camera, vs.rgb.h, vs.rgb.w);
        int masked = 0, good = 0;
        for (int p = 0; p < vs.rgb.h * vs.rgb.w; ++p) {
          if (!vs.mask[size_t(p)]) continue;
          ++masked;
          if (!rast.valid[size_t(p)]) continue;
          double d = 0;
          for (int c = 0; c < 3; ++c) {
            double e = rast.coords[size_t(p) * 3 + c] - vs.nocs_visible.coords[size_t(p) * 3 + c];
            d += e * e;
          }
          if (std::sqrt(d) < 5e-3) ++good;
        }
        double frac = masked > 0 ? double(good) / masked : 1.0;
        worst_frac = std::min(worst_frac, frac);
        if (frac < 0.99) roundtrip_ok = false;
      }
    }
  }
  bool oracle_ok = true;
  {
    Rng rng(17);
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<Vec3> pts;
      for (int i = 0; i < 300; ++i) pts.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
      if (remove_outliers(pts, 0.03) != oracle::outliers_brute(pts, 0.03)) oracle_ok = false;
    }
  }

  // ---- training runs ---------------------------------------------------------
  RunArtifacts run_single = train_run(ds, false, 0.9, false, false, "A single-view");
  RunArtifacts run_multi = train_run(ds, true, 0.9, false, false, "B multi-view w3=0.9");
  RunArtifacts run_multi_nc = train_run(ds, true, 0.0, false, false, "C multi-view w3=0");
  RunArtifacts run_imgcoords = train_run(ds, false, 0.9, true, false, "D image-coords chart");
  RunArtifacts run_hidden = train_run(ds, false, 0.9, false, true, "E visible+hidden");

  // ---- criterion 3: overfit reconstruction ----------------------------------
  {
    double e_rec = run_single.report.overall().e_rec;
    double baseline = centroid_baseline_e_rec(ds);
    bool pass = e_rec < 5e-3 && baseline >= 2e-2;
    report(3, pass,
           "overfit E_rec = " + fmt(e_rec) + " (target < 5e-3), centroid baseline " + fmt(baseline) +
               " (>= 2e-2)");
  }

  // ---- criterion 4: multi-view consistency direction -------------------------
  {
    double cons_single = run_single.report.overall().e_cons;
    double cons_multi = run_multi.report.overall().e_cons;
    double cons_multi_nc = run_multi_nc.report.overall().e_cons;
    bool pass = cons_multi <= 0.9 * cons_single && cons_multi <= 0.9 * cons_multi_nc;
    report(4, pass,
           "E_cons x1000: multi " + fmt(cons_multi * 1000) + " vs single " + fmt(cons_single * 1000) +
               " vs multi(w3=0) " + fmt(cons_multi_nc * 1000) + " (need >= 10% below both)");
  }

  // ---- criterion 5: discontinuity fidelity -----------------------------------
  {
    double s_model = mean_s_cont_family(run_single.report, "box-union");
    double s_control = mean_s_cont_family(run_imgcoords.report, "box-union");
    bool pass = s_model > 0.5 && s_control < s_model;
    report(5, pass,
           "box-union S_cont: trained " + fmt(s_model) + " (need > 0.5), image-coords control " +
               fmt(s_control) + " (must be lower)");
  }

  // ---- criterion 6: hidden surfaces do not break the visible ones ------------
  {
    double vis_plain = run_single.report.overall().e_rec;
    double vis_hidden = run_hidden.report.overall().e_rec;
    double hid = run_hidden.report.overall().e_rec_hidden;
    bool pass = vis_hidden < 1.25 * vis_plain;
    report(6, pass,
           "visible E_rec with hidden head " + fmt(vis_hidden) + " vs visible-only " + fmt(vis_plain) +
               " (allowed up to +25%); hidden E_rec " + fmt(hid));
  }

  // ---- auxiliary probes on the trained single-view model ---------------------
  {
    // local continuity of the trained surface map: nearby uv stay nearby in 3D
    SurfaceModel& model = run_single.state.model;
    Tensor img = net::image_to_tensor(ds.views[0].rgb);
    ForwardResult fr = forward_single(model, img, Tensor({0, 2}));
    Tensor uv({2, 2});
    uv.data = {0.41, 0.57, 0.41 + 1e-5, 0.57};
    Tensor xyz = sp_eval(model, fr.code, uv);
    double jump = std::sqrt(std::pow(xyz.at(0, 0) - xyz.at(1, 0), 2) +
                            std::pow(xyz.at(0, 1) - xyz.at(1, 1), 2) +
                            std::pow(xyz.at(0, 2) - xyz.at(1, 2), 2));
    info("trained SP continuity: |duv|=1e-5 moves 3D by " + fmt(jump) +
         (jump < 1e-2 ? " (< 1e-2)" : " (above 1e-2)"));

    // vertex-to-surface distance against a dense GT sampling oracle
    CanonicalShape shape0 = generate_shape(family_from_name(ds.views[0].family),
                                           derive_seed(dc.seed, 11, 0));
    auto gt_cloud = sample_surface(shape0, 60000, 3);
    const UvMesh& mesh0 = run_single.meshes[0];
    if (!mesh0.vertices.empty()) {
      double acc = 0;
      for (const auto& v : mesh0.vertices) {
        double best = 1e30;
        for (const auto& g : gt_cloud) best = std::min(best, dist(v.xyz, g));
        acc += best;
      }
      info("mean vertex-to-GT-surface distance on view 0: " + fmt(acc / mesh0.vertices.size()));
    }

    // chart occupancy stays about as connected as the image mask
    auto components = [](const std::vector<uint8_t>& grid, int h, int w) {
      std::vector<uint8_t> seen(grid.size(), 0);
      std::vector<int> stack;
      int comps = 0;
      for (int start = 0; start < h * w; ++start) {
        if (!grid[size_t(start)] || seen[size_t(start)]) continue;
        ++comps;
        stack.push_back(start);
        seen[size_t(start)] = 1;
        while (!stack.empty()) {
          int p = stack.back();
          stack.pop_back();
          int r = p / w, c = p % w;
          const int nb[4] = {c > 0 ? p - 1 : -1, c + 1 < w ? p + 1 : -1, r > 0 ? p - w : -1,
                             r + 1 < h ? p + w : -1};
          for (int q : nb)
            if (q >= 0 && grid[size_t(q)] && !seen[size_t(q)]) {
              seen[size_t(q)] = 1;
              stack.push_back(q);
            }
        }
      }
      return comps;
    };
    auto ro = reconstruct_detailed(model, {ds.views[0].rgb}, ReconstructMode::Single,
                                   accept_infer_params());
    int img_cc = components(ro[0].pred_mask, 64, 64);
    int occ_cc = components(ro[0].occupancy.grid, ro[0].occupancy.res, ro[0].occupancy.res);
    info("connected components: image mask " + std::to_string(img_cc) + ", chart occupancy " +
         std::to_string(occ_cc));
  }

  // ---- criterion 7: pipeline invariants ---------------------------------------
  {
    bool geometry_ok = true;
    int edges = 0, verts = 0;
    for (const auto& art : {&run_single, &run_multi}) {
      for (const auto& mesh : (*art).meshes) {
        for (const auto& v : mesh.vertices) {
          ++verts;
          if (v.xyz.x < 0 || v.xyz.x > 1 || v.xyz.y < 0 || v.xyz.y > 1 || v.xyz.z < 0 ||
              v.xyz.z > 1)
            geometry_ok = false;
        }
        for (auto [a, b] : mesh.edges) {
          ++edges;
          if (dist(mesh.vertices[size_t(a)].xyz, mesh.vertices[size_t(b)].xyz) >= 0.05)
            geometry_ok = false;
        }
      }
    }
    bool pass = geometry_ok && oracle_ok && roundtrip_ok;
    report(7, pass,
           "pipeline invariants: " + std::to_string(verts) + " vertices in [0,1]^3 and " +
               std::to_string(edges) + " edges under 0.05: " + (geometry_ok ? "yes" : "no") +
               "; outlier/texture brute-force match: " + (oracle_ok ? "yes" : "no") +
               "; gt round-trip worst in-tolerance fraction " + fmt(worst_frac));
  }

  std::printf("acceptance: %d criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
