#pragma once

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "pix2surf/config.hpp"
#include "pix2surf/metrics.hpp"
#include "pix2surf/trainer.hpp"

namespace pix2surf {
namespace cli {

// Exit code contract: 0 success, 1 runtime failure, 2 usage/config error.
constexpr int kOk = 0;
constexpr int kRuntimeError = 1;
constexpr int kUsageError = 2;

inline std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  size_t at = 0;
  while (at <= s.size()) {
    size_t comma = s.find(',', at);
    if (comma == std::string::npos) comma = s.size();
    std::string item = s.substr(at, comma - at);
    if (!item.empty()) out.push_back(item);
    at = comma + 1;
  }
  return out;
}

// Per-subcommand shorthand flags, expanded to canonical schema keys.
// Boolean shorthands take no value.
struct Shorthand {
  const char* flag;
  const char* key;
  bool boolean;
};

inline const std::vector<Shorthand>& shorthands(const std::string& cmd) {
  static const std::vector<Shorthand> synth = {
      {"--shapes", "data.shapes", false}, {"--views", "data.views", false},
      {"--res", "data.res", false},       {"--seed", "data.seed", false},
      {"--out", "data.out", false},       {"--noise-bg", "data.noise_background", true},
      {"--families", "data.families", false}};
  static const std::vector<Shorthand> train = {
      {"--data", "train.data", false},     {"--run", "train.run", false},
      {"--epochs1", "train.epochs1", false}, {"--epochs2", "train.epochs2", false},
      {"--views", "train.views", false},   {"--seed", "train.seed", false},
      {"--multiview", "train.multiview", true}, {"--ablate", "train.ablate", false},
      {"--resume", "train.resume", false}, {"--hidden", "net.predict_hidden", true}};
  static const std::vector<Shorthand> infer = {
      {"--ckpt", "infer.ckpt", false}, {"--images", "infer.images", false},
      {"--out", "infer.out", false},   {"--mode", "infer.mode", false},
      {"--data", "eval.data", false}};
  static const std::vector<Shorthand> eval = {
      {"--data", "eval.data", false}, {"--pred", "eval.pred", false},
      {"--out", "eval.out", false},   {"--hidden", "eval.hidden", true},
      {"--eps", "eval.eps", false}};
  static const std::vector<Shorthand> none = {};
  if (cmd == "synth") return synth;
  if (cmd == "train") return train;
  if (cmd == "infer") return infer;
  if (cmd == "eval") return eval;
  return none;
}

inline RunConfig parse_args(const std::string& cmd, const std::vector<std::string>& args) {
  RunConfig cfg = RunConfig::defaults();
  for (size_t i = 0; i < args.size(); ++i) {
    std::string a = args[i];
    if (a == "--config") {
      if (i + 1 >= args.size()) throw ConfigError("--config requires a path");
      cfg.load_file(args[++i]);
      continue;
    }
    if (cmd == "eval" && a == "--pred-maps") {
      if (i + 1 >= args.size()) throw ConfigError("--pred-maps requires a path");
      cfg.set_from_string("eval.pred", args[++i], "flag:--pred-maps");
      cfg.set_from_string("eval.pred_kind", "maps", "flag:--pred-maps");
      continue;
    }
    bool matched = false;
    for (const auto& sh : shorthands(cmd)) {
      if (a != sh.flag) continue;
      matched = true;
      if (sh.boolean) {
        cfg.set_from_string(sh.key, "true", "flag:" + a);
      } else {
        if (i + 1 >= args.size()) throw ConfigError(a + " requires a value");
        cfg.set_from_string(sh.key, args[++i], "flag:" + a);
      }
      break;
    }
    if (matched) continue;
    if (a.rfind("--", 0) == 0) {
      std::string key = a.substr(2);
      std::string val;
      auto eq = key.find('=');
      if (eq != std::string::npos) {
        val = key.substr(eq + 1);
        key = key.substr(0, eq);
      } else {
        if (i + 1 >= args.size()) throw ConfigError(a + " requires a value");
        val = args[++i];
      }
      cfg.set_from_string(key, val, "flag:" + a);
      continue;
    }
    throw ConfigError("unexpected argument: " + a);
  }
  return cfg;
}

namespace fsys = std::filesystem;

inline fsys::path run_dir_of(const RunConfig& cfg) {
  fsys::path run = cfg.gets("train.run");
  const char* root = std::getenv("PIX2SURF_RUNS");
  if (root && *root && run.is_relative()) return fsys::path(root) / run.filename();
  return run;
}

inline std::vector<ShapeFamily> parse_families(const std::string& csv) {
  std::vector<ShapeFamily> fams;
  for (const auto& name : split_csv(csv)) fams.push_back(family_from_name(name));
  if (fams.empty()) throw ConfigError("data.families must name at least one family");
  return fams;
}

// ---- synth -------------------------------------------------------------------

inline int cmd_synth(const RunConfig& cfg) {
  DatasetConfig dc;
  dc.n_shapes = int(cfg.geti("data.shapes"));
  dc.views_per_shape = int(cfg.geti("data.views"));
  dc.height = dc.width = int(cfg.geti("data.res"));
  dc.seed = uint64_t(cfg.geti("data.seed"));
  dc.noise_background = cfg.getb("data.noise_background");
  dc.families = parse_families(cfg.gets("data.families"));
  dc.min_coverage = cfg.getd("data.min_coverage");
  dc.max_coverage = cfg.getd("data.max_coverage");

  fsys::path out = cfg.gets("data.out");
  DatasetManifest manifest = build_dataset(dc, out);
  std::ofstream rc(out / "config.resolved");
  rc << cfg.serialize_resolved();
  std::cout << "synth: wrote " << manifest.doc["files"].size() << " files for " << dc.n_shapes
            << " shapes x " << dc.views_per_shape << " views to " << out.string() << "\n";
  for (const auto& w : manifest.doc["warnings"])
    std::cout << "synth: warning: " << w.get<std::string>() << "\n";
  return kOk;
}

// ---- train -------------------------------------------------------------------

struct AblationFlags {
  bool no_nocs = false, no_uv_amp = false, no_consistency = false, single_view = false,
       image_coords = false;
  std::vector<std::string> names;
};

inline AblationFlags parse_ablations(const std::string& csv) {
  AblationFlags fl;
  for (const auto& name : split_csv(csv)) {
    if (name == "no_nocs" || name == "no_nocs_pretrain") fl.no_nocs = true;
    else if (name == "no_uv_amp" || name == "no_uv_amplifier") fl.no_uv_amp = true;
    else if (name == "no_consistency" || name == "no_consistency_loss") fl.no_consistency = true;
    else if (name == "single_view" || name == "single_view_only") fl.single_view = true;
    else if (name == "image_coords" || name == "image2surf") fl.image_coords = true;
    else throw ConfigError("unknown ablation: " + name);
    fl.names.push_back(name);
  }
  return fl;
}

inline NetConfig net_config_from(const RunConfig& cfg, int res_h, int res_w) {
  NetConfig nc;
  nc.input_height = res_h;
  nc.input_width = res_w;
  nc.latent_dim = int(cfg.geti("net.latent_dim"));
  nc.amp_dim = int(cfg.geti("net.amp_dim"));
  nc.sp_hidden = int(cfg.geti("net.sp_hidden"));
  nc.sp_depth = int(cfg.geti("net.sp_depth"));
  nc.channel_scale = cfg.getd("net.channel_scale");
  nc.predict_hidden = cfg.getb("net.predict_hidden");
  nc.multiview = cfg.getb("net.multiview") || cfg.getb("train.multiview");
  return nc;
}

inline LossWeights loss_weights_from(const RunConfig& cfg, bool multiview) {
  LossWeights w;
  w.w1 = cfg.getd("loss.w1");
  w.w2 = cfg.getd("loss.w2");
  w.wn = cfg.getd("loss.wn");
  w.wm = cfg.getd("loss.wm");
  w.w3 = cfg.getd("loss.w3");
  w.K = int(cfg.geti("loss.K"));
  w.eps_corr = cfg.getd("loss.eps_corr");
  w.eps_eval = cfg.getd("eval.eps");
  if (multiview) {
    // the atlas objective runs with wn = wm = 0.1 unless set explicitly
    if (cfg.provenance("loss.wn") == "default") w.wn = 0.1;
    if (cfg.provenance("loss.wm") == "default") w.wm = 0.1;
  }
  return w;
}

inline int cmd_train(const RunConfig& cfg) {
  Dataset ds = load_dataset(cfg.gets("train.data"));
  if (ds.views.empty()) throw ConfigError("train: dataset at " + cfg.gets("train.data") + " is empty");

  AblationFlags ab = parse_ablations(cfg.gets("train.ablate"));
  bool multiview = (cfg.getb("train.multiview") || cfg.getb("net.multiview")) && !ab.single_view;

  NetConfig nc = net_config_from(cfg, ds.height(), ds.width());
  nc.multiview = multiview;
  nc.no_uv_amplifier = ab.no_uv_amp;
  nc.image_coords_chart = ab.image_coords;

  TrainConfig tc;
  tc.epochs1 = int(cfg.geti("train.epochs1"));
  tc.epochs2 = int(cfg.geti("train.epochs2"));
  tc.lr1 = cfg.getd("train.lr1");
  tc.lr2 = cfg.getd("train.lr2");
  tc.views_per_iter = int(cfg.geti("train.views"));
  tc.mv_warmup_epochs = int(cfg.geti("train.mv_warmup"));
  tc.seed = uint64_t(cfg.geti("train.seed"));
  tc.clip_norm = cfg.getd("train.clip");
  tc.max_pairs = int(cfg.geti("train.max_pairs"));
  tc.adam_beta1 = cfg.getd("train.adam_beta1");
  tc.adam_beta2 = cfg.getd("train.adam_beta2");
  tc.adam_eps = cfg.getd("train.adam_eps");
  tc.cosine_decay = cfg.getb("train.cosine_decay");
  tc.no_nocs_pretrain = ab.no_nocs;
  tc.no_uv_amplifier = ab.no_uv_amp;
  tc.no_consistency_loss = ab.no_consistency;
  tc.single_view_only = ab.single_view;
  tc.predict_hidden = cfg.getb("net.predict_hidden");

  LossWeights w = loss_weights_from(cfg, multiview);

  fsys::path run = run_dir_of(cfg);
  std::error_code ec;
  fsys::create_directories(run, ec);
  if (ec) throw IoError("cannot create run dir: " + run.string());

  TrainState st;
  if (!cfg.gets("train.resume").empty()) {
    st = load_checkpoint(cfg.gets("train.resume"));
    require_checkpoint_config(st, nc);
  } else {
    st = init_train_state(nc, tc, w);
  }

  int view_pairs = multiview ? tc.views_per_iter * (tc.views_per_iter - 1) / 2 : 0;
  {
    std::ofstream rc(run / "config.resolved");
    rc << cfg.serialize_resolved();
    nlohmann::json meta = {{"ablations", ab.names},
                           {"multiview", multiview},
                           {"view_pairs_per_batch", view_pairs},
                           {"phase1_skipped", tc.no_nocs_pretrain},
                           {"config", cfg.to_json()}};
    std::ofstream mf(run / "run_meta.json");
    mf << meta.dump(2) << "\n";
  }
  if (multiview) std::cout << "train: view pairs per batch = " << view_pairs << "\n";
  if (tc.no_nocs_pretrain) std::cout << "train: phase 1 skipped (no_nocs ablation)\n";

  pretrain_nocs_uv(st, ds);
  save_checkpoint(st, (run / ("ckpt_" + std::to_string(st.p1_epochs_done))).string());
  train_end_to_end(st, ds, multiview);

  std::string final_name = "ckpt_" + std::to_string(st.p1_epochs_done + st.p2_epochs_done);
  save_checkpoint(st, (run / final_name).string());
  save_checkpoint(st, (run / "ckpt_final").string());
  save_model(st.model, (run / "model_final").string());
  write_loss_csv(st, (run / "losses.csv").string());
  std::cout << "train: finished " << st.p1_epochs_done << "+" << st.p2_epochs_done
            << " epochs; checkpoints in " << run.string() << "\n";
  return kOk;
}

// ---- infer -------------------------------------------------------------------

inline SurfaceModel load_model_any(const std::string& path) {
  if (!fsys::exists(path)) throw ConfigError("checkpoint not found: " + path);
  ArrayContainer c = read_container(path);
  std::string kind = c.meta.value("kind", "");
  if (kind == "pix2surf-model") {
    SurfaceModel m;
    m.config = NetConfig::from_json(c.meta.at("net"));
    m.params = std::move(c.arrays);
    return m;
  }
  if (kind == "pix2surf-train-state") {
    TrainState st = load_checkpoint(path);
    return std::move(st.model);
  }
  throw IncompatError("unrecognized checkpoint kind in " + path);
}

inline InferParams infer_params_from(const RunConfig& cfg) {
  InferParams ip;
  ip.upsample = int(cfg.geti("infer.upsample"));
  ip.uv_res = int(cfg.geti("infer.uv_res"));
  ip.final_res = int(cfg.geti("infer.final_res"));
  ip.uv_grad_thresh = cfg.getd("infer.uv_grad_thresh");
  ip.edge_thresh = cfg.getd("infer.edge_thresh");
  ip.outlier_t = cfg.getd("infer.outlier_t");
  ip.knn = int(cfg.geti("infer.knn"));
  ip.closing_iters = int(cfg.geti("infer.closing_iters"));
  return ip;
}

inline void write_view_outputs(const ReconstructOutput& ro, const fsys::path& dir,
                               const std::string& stem_suffix, const InferParams& ip) {
  std::string mesh_name = "mesh_" + stem_suffix + ".obj";
  std::string tex_name = "texture_" + stem_suffix + ".png";
  write_obj(ro.mesh, (dir / mesh_name).string(), tex_name);
  write_texture_png(ro.colors, ip.final_res, (dir / tex_name).string());
  write_chart_png(ro.chart, (dir / ("chart_" + stem_suffix + ".png")).string());
}

inline int cmd_infer(const RunConfig& cfg) {
  SurfaceModel model = load_model_any(cfg.gets("infer.ckpt"));
  InferParams ip = infer_params_from(cfg);
  std::string mode_s = cfg.gets("infer.mode");
  if (mode_s != "single" && mode_s != "multi")
    throw ConfigError("infer.mode must be 'single' or 'multi'");
  ReconstructMode mode = mode_s == "multi" ? ReconstructMode::Multi : ReconstructMode::Single;

  fsys::path out = cfg.gets("infer.out");
  std::error_code ec;
  fsys::create_directories(out, ec);
  if (ec) throw IoError("cannot create output dir: " + out.string());

  int written = 0;
  if (!cfg.gets("infer.images").empty()) {
    std::vector<ImageF> images;
    for (const auto& p : split_csv(cfg.gets("infer.images"))) {
      if (!fsys::exists(p)) throw ConfigError("image not found: " + p);
      images.push_back(from_png8(read_png(p)));
    }
    auto ros = reconstruct_detailed(model, images, mode, ip);
    for (size_t v = 0; v < ros.size(); ++v) {
      write_view_outputs(ros[v], out, std::to_string(v), ip);
      ++written;
    }
  } else {
    // dataset-driven inference: one output set per dataset view
    Dataset ds = load_dataset(cfg.gets("eval.data"));
    for (size_t si = 0; si < ds.by_shape.size(); ++si) {
      const auto& idxs = ds.by_shape[si];
      fsys::path sdir = out / ds.shape_ids[si];
      fsys::create_directories(sdir, ec);
      std::vector<ImageF> images;
      for (int vi : idxs) images.push_back(ds.views[size_t(vi)].rgb);
      std::vector<ReconstructOutput> ros;
      if (mode == ReconstructMode::Multi) {
        ros = reconstruct_detailed(model, images, mode, ip);
      } else {
        for (auto& img : images) {
          auto one = reconstruct_detailed(model, {img}, mode, ip);
          ros.push_back(std::move(one.front()));
        }
      }
      for (size_t k = 0; k < ros.size(); ++k) {
        write_view_outputs(ros[k], sdir, std::to_string(k), ip);
        write_png((sdir / ("pred_mask_" + std::to_string(k) + ".png")).string(),
                  mask_to_png8(ros[k].pred_mask, ds.height(), ds.width()));
        if (model.config.predict_hidden) {
          NocsMap hm(ds.height(), ds.width());
          hm.valid = ros[k].pred_mask;
          for (int p = 0; p < ds.height() * ds.width(); ++p)
            if (hm.valid[size_t(p)])
              for (int c = 0; c < 3; ++c)
                hm.coords[size_t(p) * 3 + c] = ros[k].dec.nocs_hidden.data[size_t(c) * ds.height() * ds.width() + p];
          write_png((sdir / ("hidden_" + std::to_string(k) + ".png")).string(), nocs_to_png16(hm));
        }
        ++written;
      }
    }
  }
  std::cout << "infer: wrote " << written << " view reconstructions to " << out.string() << "\n";
  return kOk;
}

// ---- eval --------------------------------------------------------------------

inline int cmd_eval(const RunConfig& cfg) {
  Dataset ds = load_dataset(cfg.gets("eval.data"));
  if (cfg.gets("eval.pred").empty()) throw ConfigError("eval.pred is required");
  fsys::path pred_root = cfg.gets("eval.pred");
  std::string kind = cfg.gets("eval.pred_kind");
  bool want_hidden = cfg.getb("eval.hidden");
  double eps = cfg.getd("eval.eps");

  PredictionSet preds;
  preds.visible.resize(ds.views.size());
  preds.hidden.resize(ds.views.size());

  for (size_t si = 0; si < ds.by_shape.size(); ++si) {
    const auto& idxs = ds.by_shape[si];
    for (size_t k = 0; k < idxs.size(); ++k) {
      int vi = idxs[k];
      const ViewSample& vs = ds.views[size_t(vi)];
      try {
        if (kind == "maps") {
          fsys::path vfile = pred_root / vs.shape_id / (vs.view_id + "_nocs_v.png");
          fsys::path mfile = pred_root / vs.shape_id / (vs.view_id + "_mask.png");
          if (!fsys::exists(vfile)) continue;
          std::vector<uint8_t> mask = mask_from_png8(read_png(mfile.string()));
          preds.visible[size_t(vi)] = nocs_from_png16(read_png(vfile.string()), mask);
          if (want_hidden) {
            fsys::path hfile = pred_root / vs.shape_id / (vs.view_id + "_nocs_h.png");
            if (fsys::exists(hfile))
              preds.hidden[size_t(vi)] = nocs_from_png16(read_png(hfile.string()), mask);
          }
        } else if (kind == "mesh") {
          fsys::path mesh_file = pred_root / vs.shape_id / ("mesh_" + std::to_string(k) + ".obj");
          if (!fsys::exists(mesh_file)) continue;
          UvMesh mesh = read_obj(mesh_file.string());
          preds.visible[size_t(vi)] =
              surface_to_nocs_map(mesh, vs.camera, vs.rgb.h, vs.rgb.w);
          if (want_hidden) {
            fsys::path hfile = pred_root / vs.shape_id / ("hidden_" + std::to_string(k) + ".png");
            fsys::path pmfile = pred_root / vs.shape_id / ("pred_mask_" + std::to_string(k) + ".png");
            if (fsys::exists(hfile) && fsys::exists(pmfile)) {
              std::vector<uint8_t> pm = mask_from_png8(read_png(pmfile.string()));
              preds.hidden[size_t(vi)] = nocs_from_png16(read_png(hfile.string()), pm);
            }
          }
        } else {
          throw ConfigError("eval.pred_kind must be 'mesh' or 'maps'");
        }
      } catch (const IoError& e) {
        std::cout << "eval: skipping " << vs.shape_id << "/" << vs.view_id << ": " << e.what()
                  << "\n";
      }
    }
  }

  MetricsReport report = evaluate(preds, ds, eps);
  report.config_echo["pred_kind"] = kind;
  report.config_echo["pred"] = pred_root.string();

  fsys::path out = cfg.gets("eval.out");
  std::error_code ec;
  fsys::create_directories(out, ec);
  if (ec) throw IoError("cannot create output dir: " + out.string());
  {
    std::ofstream jf(out / "report.json");
    jf << report.to_json().dump(2) << "\n";
    std::ofstream cf(out / "report.csv");
    cf << report.to_csv();
  }
  auto agg = report.overall();
  std::cout << "eval: " << agg.count << " views evaluated, " << agg.missing << " missing\n";
  std::cout << "eval: E_rec x1000 = " << agg.e_rec * 1000 << ", E_corr x1000 = " << agg.e_corr * 1000
            << ", E_cons x1000 = " << agg.e_cons * 1000 << ", S_cont = " << agg.s_cont << "\n";
  if (agg.hidden_count > 0)
    std::cout << "eval: hidden E_rec x1000 = " << agg.e_rec_hidden * 1000 << " over "
              << agg.hidden_count << " views\n";
  return kOk;
}

// ---- dispatch ------------------------------------------------------------------

inline int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (args.empty() || args[0] == "--help" || args[0] == "-h") {
    std::cout << "usage: pix2surf <synth|train|infer|eval> [--config file] [--section.key value]...\n"
              << "  synth: generate a synthetic multi-view dataset\n"
              << "  train: run the two-phase training schedule\n"
              << "  infer: reconstruct textured per-view meshes from images\n"
              << "  eval:  compute the metric report against a dataset\n";
    return args.empty() ? kUsageError : kOk;
  }
  std::string cmd = args[0];
  args.erase(args.begin());
  try {
    RunConfig cfg = parse_args(cmd, args);
    if (cmd == "synth") return cmd_synth(cfg);
    if (cmd == "train") return cmd_train(cfg);
    if (cmd == "infer") return cmd_infer(cfg);
    if (cmd == "eval") return cmd_eval(cfg);
    std::cerr << "unknown subcommand: " << cmd << "\n";
    return kUsageError;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsageError;
  } catch (const IncompatError& e) {
    std::cerr << "incompatibility: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}

}  // namespace cli
}  // namespace pix2surf
