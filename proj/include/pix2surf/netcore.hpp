#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "pix2surf/autodiff.hpp"
#include "pix2surf/image.hpp"
#include "pix2surf/serialize.hpp"

namespace pix2surf {

// Architecture hyperparameters. Nominal dims follow the full-scale layout
// (latent 1024, amplifier 2->64->128->256, SP 9x512); channel_scale shrinks
// every width uniformly for desk-scale runs.
struct NetConfig {
  int input_height = 64;
  int input_width = 64;
  int latent_dim = 1024;
  int amp_dim = 256;
  int sp_hidden = 512;
  int sp_depth = 9;
  double channel_scale = 1.0;
  bool predict_hidden = false;
  bool multiview = false;
  bool no_uv_amplifier = false;    // raw uv into the SP branch, code dim 256
  bool image_coords_chart = false; // chart replaced by normalized image coords

  static constexpr int kPoolStages = 4;

  void validate() const {
    if (latent_dim <= 0 || amp_dim <= 0 || sp_hidden <= 0)
      throw ConfigError("net: dims must be positive");
    if (sp_depth < 3) throw ConfigError("net: sp_depth must be >= 3");
    if (channel_scale <= 0) throw ConfigError("net: channel_scale must be positive");
    int div = 1 << kPoolStages;
    if (input_height % div != 0 || input_width % div != 0)
      throw ConfigError("net: input resolution must be divisible by " + std::to_string(div));
  }

  int eff(int nominal) const {
    int v = int(std::lround(nominal * channel_scale));
    return v < 1 ? 1 : v;
  }

  int enc_channels(int stage) const {  // stage 1..4
    static const int base[4] = {64, 128, 256, 512};
    return eff(base[stage - 1]);
  }
  int ce_mid() const { return eff(512); }
  int eff_latent() const { return eff(no_uv_amplifier ? 256 : latent_dim); }
  int eff_amp() const { return no_uv_amplifier ? 2 : eff(amp_dim); }
  int eff_sp_hidden() const { return eff(sp_hidden); }
  int amp_stage(int i) const {  // i = 1..3
    static const int base[3] = {64, 128, 256};
    return eff(base[i - 1]);
  }
  int code_dim() const { return multiview ? 2 * eff_latent() : eff_latent(); }
  int out_channels() const { return 6 + (predict_hidden ? 3 : 0); }

  nlohmann::json to_json() const {
    return {{"input_height", input_height},
            {"input_width", input_width},
            {"latent_dim", latent_dim},
            {"amp_dim", amp_dim},
            {"sp_hidden", sp_hidden},
            {"sp_depth", sp_depth},
            {"channel_scale", channel_scale},
            {"predict_hidden", predict_hidden},
            {"multiview", multiview},
            {"no_uv_amplifier", no_uv_amplifier},
            {"image_coords_chart", image_coords_chart}};
  }

  static NetConfig from_json(const nlohmann::json& j) {
    NetConfig c;
    c.input_height = j.at("input_height");
    c.input_width = j.at("input_width");
    c.latent_dim = j.at("latent_dim");
    c.amp_dim = j.at("amp_dim");
    c.sp_hidden = j.at("sp_hidden");
    c.sp_depth = j.at("sp_depth");
    c.channel_scale = j.at("channel_scale");
    c.predict_hidden = j.at("predict_hidden");
    c.multiview = j.at("multiview");
    c.no_uv_amplifier = j.at("no_uv_amplifier");
    c.image_coords_chart = j.at("image_coords_chart");
    return c;
  }
};

// All trainable parameters, addressed by name. std::map keeps iteration order
// stable for init, serialization, and the optimizer.
struct SurfaceModel {
  NetConfig config;
  std::map<std::string, Tensor> params;

  static SurfaceModel create(const NetConfig& cfg, uint64_t seed) {
    cfg.validate();
    SurfaceModel m;
    m.config = cfg;

    auto conv = [&](const std::string& name, int cin, int cout) {
      m.params[name + ".w"] = Tensor({cout, cin, 3, 3});
      m.params[name + ".b"] = Tensor({cout});
    };
    auto lin = [&](const std::string& name, int din, int dout) {
      m.params[name + ".w"] = Tensor({dout, din});
      m.params[name + ".b"] = Tensor({dout});
    };
    auto norm = [&](const std::string& name, int c) {
      m.params[name + ".gamma"] = Tensor({c}, 1.0);
      m.params[name + ".beta"] = Tensor({c});
    };

    int prev = 3;
    for (int s = 1; s <= NetConfig::kPoolStages; ++s) {
      int c = cfg.enc_channels(s);
      conv("enc.s" + std::to_string(s) + ".conva", prev, c);
      conv("enc.s" + std::to_string(s) + ".convb", c, c);
      prev = c;
    }
    int c4 = cfg.enc_channels(4);
    if (cfg.multiview) conv("dec.merge", 2 * c4, c4);
    for (int s = NetConfig::kPoolStages; s >= 1; --s) {
      int cin = cfg.enc_channels(s);
      int cout = s > 1 ? cfg.enc_channels(s - 1) : cfg.enc_channels(1);
      conv("dec.s" + std::to_string(s) + ".conva", cin, cout);
      conv("dec.s" + std::to_string(s) + ".convb", cout, cout);
    }
    conv("dec.head", cfg.enc_channels(1), cfg.out_channels());

    conv("ce.conv1", c4, cfg.ce_mid());
    norm("ce.norm1", cfg.ce_mid());
    conv("ce.conv2", cfg.ce_mid(), cfg.eff_latent());
    norm("ce.norm2", cfg.eff_latent());

    if (!cfg.no_uv_amplifier) {
      lin("amp.l1", 2, cfg.amp_stage(1));
      lin("amp.l2", cfg.amp_stage(1), cfg.amp_stage(2));
      lin("amp.l3", cfg.amp_stage(2), cfg.amp_stage(3));
    }

    int sp_in = cfg.code_dim() + cfg.eff_amp();
    int h = cfg.eff_sp_hidden();
    for (int l = 1; l <= cfg.sp_depth; ++l) {
      int din = l == 1 ? sp_in : h;
      int dout = l == cfg.sp_depth ? 3 : h;
      lin("sp.l" + std::to_string(l), din, dout);
    }

    // He-style init, seeded per parameter name so layout changes do not
    // perturb unrelated tensors.
    for (auto& [name, t] : m.params) {
      if (name.ends_with(".b") || name.ends_with(".beta")) continue;
      if (name.ends_with(".gamma")) continue;
      uint64_t h64 = 1469598103934665603ull;
      for (char ch : name) h64 = (h64 ^ uint64_t(uint8_t(ch))) * 1099511628211ull;
      Rng rng(derive_seed(seed, h64));
      int64_t fan_in = 1;
      for (size_t d = 1; d < t.shape.size(); ++d) fan_in *= t.shape[d];
      double std_dev = std::sqrt(2.0 / double(fan_in));
      for (double& v : t.data) v = rng.normal() * std_dev;
    }
    return m;
  }

  bool finite() const {
    for (const auto& [_, t] : params)
      if (!t.finite()) return false;
    return true;
  }
};

// Plain-tensor decoder outputs (inference-facing view of the net's heads).
struct DecoderOutput {
  Tensor nocs;         // [3,H,W] in [0,1]
  Tensor mask_logits;  // [1,H,W]
  Tensor chart;        // [2,H,W] in [0,1]
  Tensor nocs_hidden;  // [3,H,W]; empty unless predict_hidden
};

namespace net {

// Per-step parameter binding: params become tape leaves on first use, and the
// gradient of each used parameter can be read back after backward().
struct Ctx {
  ad::Tape& tape;
  SurfaceModel& model;
  const std::set<std::string>* trainable = nullptr;  // nullptr => all trainable
  bool train = true;
  std::map<std::string, ad::Var> bound;

  Ctx(ad::Tape& t, SurfaceModel& m) : tape(t), model(m) {}

  ad::Var p(const std::string& name) {
    auto it = bound.find(name);
    if (it != bound.end()) return it->second;
    auto pit = model.params.find(name);
    if (pit == model.params.end()) throw ShapeError("unknown parameter: " + name);
    bool req = train && (!trainable || trainable->count(name) > 0);
    ad::Var v = tape.leaf(pit->second, req);
    bound.emplace(name, v);
    return v;
  }
};

struct EncodeOut {
  ad::Var bottleneck;               // [C4, H/16, W/16]
  std::vector<ad::Var> prepool;     // s1b..s4b
  std::vector<ad::Var> pools;       // pool nodes (indices live in their aux)
};

inline Tensor image_to_tensor(const ImageF& img) {
  Tensor t({img.c, img.h, img.w});
  for (int r = 0; r < img.h; ++r)
    for (int c = 0; c < img.w; ++c)
      for (int ch = 0; ch < img.c; ++ch)
        t.at(ch, r, c) = img.at(r, c, ch);
  return t;
}

inline EncodeOut encode(Ctx& ctx, const Tensor& image) {
  const NetConfig& cfg = ctx.model.config;
  check_shape(image.rank() == 3 && image.dim(0) == 3, "encode: [3,H,W] image expected");
  if (image.dim(1) != cfg.input_height || image.dim(2) != cfg.input_width)
    throw ShapeError("encode: image resolution " + std::to_string(image.dim(1)) + "x" +
                     std::to_string(image.dim(2)) + " does not match config");
  ad::Tape& t = ctx.tape;
  EncodeOut out;
  ad::Var x = t.constant(image);
  for (int s = 1; s <= NetConfig::kPoolStages; ++s) {
    std::string pre = "enc.s" + std::to_string(s);
    x = t.relu(t.conv2d(x, ctx.p(pre + ".conva.w"), ctx.p(pre + ".conva.b")));
    x = t.relu(t.conv2d(x, ctx.p(pre + ".convb.w"), ctx.p(pre + ".convb.b")));
    out.prepool.push_back(x);
    x = t.maxpool2(x);
    out.pools.push_back(x);
  }
  out.bottleneck = x;
  return out;
}

struct DecodeOut {
  ad::Var nocs, mask_logits, chart, hidden;  // hidden invalid unless configured
};

// fused: multi-view pooled bottleneck, same shape as the view's own. For
// multiview configs an invalid fused var falls back to the view's own
// bottleneck, which is the no-pooling warmup behavior.
inline DecodeOut decode(Ctx& ctx, const EncodeOut& enc, ad::Var fused = {}) {
  const NetConfig& cfg = ctx.model.config;
  ad::Tape& t = ctx.tape;
  ad::Var x = enc.bottleneck;
  if (cfg.multiview) {
    if (!fused.valid()) fused = enc.bottleneck;
    x = t.relu(t.conv2d(t.concat_channels(enc.bottleneck, fused), ctx.p("dec.merge.w"),
                        ctx.p("dec.merge.b")));
  }
  for (int s = NetConfig::kPoolStages; s >= 1; --s) {
    x = t.unpool2(x, enc.pools[size_t(s - 1)]);
    x = t.add(x, enc.prepool[size_t(s - 1)]);
    std::string pre = "dec.s" + std::to_string(s);
    x = t.relu(t.conv2d(x, ctx.p(pre + ".conva.w"), ctx.p(pre + ".conva.b")));
    x = t.relu(t.conv2d(x, ctx.p(pre + ".convb.w"), ctx.p(pre + ".convb.b")));
  }
  ad::Var head = t.conv2d(x, ctx.p("dec.head.w"), ctx.p("dec.head.b"));
  DecodeOut out;
  out.nocs = t.sigmoid(t.slice_channels(head, 0, 3));
  out.mask_logits = t.slice_channels(head, 3, 4);
  out.chart = t.sigmoid(t.slice_channels(head, 4, 6));
  if (cfg.predict_hidden) out.hidden = t.sigmoid(t.slice_channels(head, 6, 9));
  return out;
}

inline ad::Var extract_code(Ctx& ctx, ad::Var bottleneck) {
  ad::Tape& t = ctx.tape;
  ad::Var x = t.conv2d(bottleneck, ctx.p("ce.conv1.w"), ctx.p("ce.conv1.b"));
  x = t.elu(t.instnorm(x, ctx.p("ce.norm1.gamma"), ctx.p("ce.norm1.beta")));
  x = t.conv2d(x, ctx.p("ce.conv2.w"), ctx.p("ce.conv2.b"));
  x = t.elu(t.instnorm(x, ctx.p("ce.norm2.gamma"), ctx.p("ce.norm2.beta")));
  return t.global_mean_hw(x);  // [1, latent]
}

inline ad::Var amplify_uv(Ctx& ctx, ad::Var uv) {
  const NetConfig& cfg = ctx.model.config;
  check_shape(ctx.tape.val(uv).rank() == 2 && ctx.tape.val(uv).dim(1) == 2,
              "amplify_uv: [N,2] input");
  if (cfg.no_uv_amplifier) return uv;
  ad::Tape& t = ctx.tape;
  ad::Var x = t.relu(t.linear(uv, ctx.p("amp.l1.w"), ctx.p("amp.l1.b")));
  x = t.relu(t.linear(x, ctx.p("amp.l2.w"), ctx.p("amp.l2.b")));
  return t.linear(x, ctx.p("amp.l3.w"), ctx.p("amp.l3.b"));
}

// code: [1, code_dim]; p: [N, amp]. Additive skip joins every second hidden
// layer to the running block input; final layer is sigmoid-bounded.
inline ad::Var sp_forward(Ctx& ctx, ad::Var code, ad::Var p) {
  const NetConfig& cfg = ctx.model.config;
  ad::Tape& t = ctx.tape;
  const Tensor& tc = t.val(code);
  check_shape(tc.rank() == 2 && tc.dim(0) == 1, "sp_forward: code must be [1,D]");
  if (tc.dim(1) != cfg.code_dim())
    throw ShapeError("sp_forward: code dim " + std::to_string(tc.dim(1)) + " != expected " +
                     std::to_string(cfg.code_dim()));
  const int N = t.val(p).dim(0);
  ad::Var x = t.concat_cols(t.broadcast_rows(code, N), p);
  x = t.relu(t.linear(x, ctx.p("sp.l1.w"), ctx.p("sp.l1.b")));
  ad::Var skip = x;
  for (int l = 2; l < cfg.sp_depth; ++l) {
    std::string pre = "sp.l" + std::to_string(l);
    x = t.relu(t.linear(x, ctx.p(pre + ".w"), ctx.p(pre + ".b")));
    if ((l - 1) % 2 == 0) {
      x = t.add(x, skip);
      skip = x;
    }
  }
  std::string last = "sp.l" + std::to_string(cfg.sp_depth);
  return t.sigmoid(t.linear(x, ctx.p(last + ".w"), ctx.p(last + ".b")));
}

// Elementwise max over per-view latent codes (or feature maps).
inline ad::Var fuse(Ctx& ctx, const std::vector<ad::Var>& vars) { return ctx.tape.emax(vars); }

}  // namespace net

// Permutation-invariant, idempotent code fusion on plain tensors.
inline Tensor fuse_multiview(const std::vector<Tensor>& codes) {
  if (codes.empty()) throw ConfigError("fuse_multiview: empty code list");
  Tensor out = codes[0];
  for (size_t i = 1; i < codes.size(); ++i) {
    check_shape(codes[i].same_shape(out), "fuse_multiview: dim mismatch");
    for (size_t k = 0; k < out.data.size(); ++k)
      out.data[k] = std::max(out.data[k], codes[i].data[k]);
  }
  return out;
}

struct ForwardResult {
  DecoderOutput dec;
  Tensor xyz;       // [N,3]
  Tensor code;      // [1, code_dim] as fed to the SP branch
};

namespace net {

inline DecoderOutput materialize(ad::Tape& t, const DecodeOut& d) {
  DecoderOutput out;
  out.nocs = t.val(d.nocs);
  out.mask_logits = t.val(d.mask_logits);
  out.chart = t.val(d.chart);
  if (d.hidden.valid()) out.nocs_hidden = t.val(d.hidden);
  return out;
}

}  // namespace net

// Inference-style forward over one or more views. Works for both configs; on
// multiview models the codes and mid features are max-pooled across views.
inline std::vector<ForwardResult> forward_multi(SurfaceModel& model,
                                                const std::vector<Tensor>& images,
                                                const std::vector<Tensor>& uv_samples) {
  if (images.empty()) throw ConfigError("forward_multi: need at least one view");
  if (!model.config.multiview && images.size() > 1)
    throw IncompatError("forward_multi: model is single-view but got multiple views");
  check_shape(uv_samples.size() == images.size(), "forward_multi: uv per view required");

  ad::Tape tape;
  net::Ctx ctx(tape, model);
  ctx.train = false;

  const int V = int(images.size());
  std::vector<net::EncodeOut> encs;
  std::vector<ad::Var> codes;
  for (int v = 0; v < V; ++v) {
    encs.push_back(net::encode(ctx, images[size_t(v)]));
    codes.push_back(net::extract_code(ctx, encs.back().bottleneck));
  }
  ad::Var fused_feat, fused_code;
  if (model.config.multiview) {
    std::vector<ad::Var> feats;
    for (auto& e : encs) feats.push_back(e.bottleneck);
    fused_feat = tape.emax(feats);
    fused_code = tape.emax(codes);
  }

  std::vector<ForwardResult> out;
  for (int v = 0; v < V; ++v) {
    net::DecodeOut dec = net::decode(ctx, encs[size_t(v)], fused_feat);
    ad::Var code = model.config.multiview ? tape.concat_cols(codes[size_t(v)], fused_code)
                                          : codes[size_t(v)];
    ForwardResult r;
    r.dec = net::materialize(tape, dec);
    r.code = tape.val(code);
    const Tensor& uv = uv_samples[size_t(v)];
    check_shape(uv.rank() == 2 && uv.dim(1) == 2, "forward_multi: uv must be [N,2]");
    if (uv.dim(0) > 0) {
      ad::Var xyz = net::sp_forward(ctx, code, net::amplify_uv(ctx, tape.constant(uv)));
      r.xyz = tape.val(xyz);
    } else {
      r.xyz = Tensor({0, 3});
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline ForwardResult forward_single(SurfaceModel& model, const Tensor& image,
                                    const Tensor& uv_samples) {
  std::vector<ForwardResult> r = forward_multi(model, {image}, {uv_samples});
  return std::move(r.front());
}

// Evaluates the SP branch (with amplifier) for a fixed code on plain uv rows.
inline Tensor sp_eval(SurfaceModel& model, const Tensor& code, const Tensor& uv) {
  ad::Tape tape;
  net::Ctx ctx(tape, model);
  ctx.train = false;
  if (uv.dim(0) == 0) return Tensor({0, 3});
  ad::Var xyz = net::sp_forward(ctx, tape.constant(code),
                                net::amplify_uv(ctx, tape.constant(uv)));
  return tape.val(xyz);
}

// ---- model checkpointing -----------------------------------------------------

inline void save_model(const SurfaceModel& model, const std::string& path) {
  ArrayContainer c;
  c.meta = {{"kind", "pix2surf-model"}, {"net", model.config.to_json()}};
  c.arrays = model.params;
  write_container(path, c);
}

inline SurfaceModel load_model(const std::string& path) {
  ArrayContainer c = read_container(path);
  if (c.meta.value("kind", "") != "pix2surf-model")
    throw IncompatError("not a model checkpoint: " + path);
  SurfaceModel m;
  m.config = NetConfig::from_json(c.meta.at("net"));
  m.params = std::move(c.arrays);
  if (!m.finite()) throw NumericError("model checkpoint contains non-finite values");
  return m;
}

}  // namespace pix2surf
