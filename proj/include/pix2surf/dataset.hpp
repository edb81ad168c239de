#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pix2surf/render.hpp"

namespace pix2surf {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct DatasetConfig {
  int n_shapes = 8;
  int views_per_shape = 5;
  int height = 64;
  int width = 64;
  uint64_t seed = 0;
  bool noise_background = false;
  std::vector<ShapeFamily> families = {ShapeFamily::BoxUnion, ShapeFamily::Superellipsoid,
                                       ShapeFamily::SweptProfile};
  double min_coverage = 0.10;
  double max_coverage = 0.90;
  int train_view_count = 5;  // fewer views than this is recorded as a warning
};

struct DatasetManifest {
  json doc;

  std::string dump() const { return doc.dump(2) + "\n"; }
};

namespace detail {

inline uint32_t file_crc(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot open: " + p.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  return crc32(bytes.data(), bytes.size());
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot open for write: " + p.string());
  f << text;
  if (!f) throw IoError("write failed: " + p.string());
}

inline json camera_to_json(const Camera& cam) {
  return json{{"position", {cam.position.x, cam.position.y, cam.position.z}},
              {"look_at", {cam.look_at.x, cam.look_at.y, cam.look_at.z}},
              {"up", {cam.up.x, cam.up.y, cam.up.z}},
              {"fov", cam.fov},
              {"resolution", {cam.height, cam.width}}};
}

inline Camera camera_from_json(const json& j) {
  Camera cam;
  cam.position = {j["position"][0], j["position"][1], j["position"][2]};
  cam.look_at = {j["look_at"][0], j["look_at"][1], j["look_at"][2]};
  cam.up = {j["up"][0], j["up"][1], j["up"][2]};
  cam.fov = j["fov"];
  cam.height = j["resolution"][0];
  cam.width = j["resolution"][1];
  return cam;
}

}  // namespace detail

inline std::string shape_id_of(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "shape_%03d", index);
  return buf;
}

// Renders one view with camera-distance resampling until foreground coverage
// lands inside the configured band. Deterministic given (seed, shape, view).
inline ViewSample render_view_in_band(const CanonicalShape& shape, const DatasetConfig& cfg,
                                      int shape_index, int view_index) {
  Rng rng(derive_seed(cfg.seed, 101, uint64_t(shape_index), uint64_t(view_index)));
  for (int attempt = 0; attempt < 64; ++attempt) {
    Camera cam = sample_camera(rng, cfg.height, cfg.width);
    ViewSample vs;
    try {
      vs = render_view(shape, cam, cfg.noise_background,
                       derive_seed(cfg.seed, 707, uint64_t(shape_index), uint64_t(view_index)));
    } catch (const RenderError&) {
      continue;
    }
    double cov = foreground_coverage(vs);
    if (cov >= cfg.min_coverage && cov <= cfg.max_coverage) {
      vs.shape_id = shape_id_of(shape_index);
      vs.view_id = "view_" + std::to_string(view_index);
      return vs;
    }
  }
  throw RenderError("could not reach coverage band for shape " + std::to_string(shape_index));
}

inline DatasetManifest build_dataset(const DatasetConfig& cfg, const fs::path& out_dir) {
  if (cfg.n_shapes < 1 || cfg.views_per_shape < 1)
    throw ConfigError("dataset: n_shapes and views_per_shape must be >= 1");
  if (cfg.height <= 0 || cfg.width <= 0) throw ConfigError("dataset: resolution must be positive");

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create dataset dir: " + out_dir.string());

  json files = json::array();
  json shapes = json::array();
  json warnings = json::array();
  if (cfg.views_per_shape < cfg.train_view_count)
    warnings.push_back("views_per_shape " + std::to_string(cfg.views_per_shape) +
                       " is below the configured training view count " +
                       std::to_string(cfg.train_view_count));

  auto add_file = [&](const fs::path& rel) {
    files.push_back({{"path", rel.generic_string()},
                     {"crc32", hex32(detail::file_crc(out_dir / rel))}});
  };

  for (int i = 0; i < cfg.n_shapes; ++i) {
    ShapeFamily fam = cfg.families[size_t(i) % cfg.families.size()];
    CanonicalShape shape = generate_shape(fam, derive_seed(cfg.seed, 11, uint64_t(i)));
    std::string sid = shape_id_of(i);
    fs::create_directories(out_dir / sid, ec);
    if (ec) throw IoError("cannot create shape dir: " + (out_dir / sid).string());

    json views = json::array();
    for (int k = 0; k < cfg.views_per_shape; ++k) {
      ViewSample vs = render_view_in_band(shape, cfg, i, k);
      std::string stem = "view_" + std::to_string(k);
      write_png((out_dir / sid / (stem + "_rgb.png")).string(), to_png8(vs.rgb));
      write_png((out_dir / sid / (stem + "_nocs_v.png")).string(), nocs_to_png16(vs.nocs_visible));
      write_png((out_dir / sid / (stem + "_nocs_h.png")).string(), nocs_to_png16(vs.nocs_hidden));
      write_png((out_dir / sid / (stem + "_mask.png")).string(),
                mask_to_png8(vs.mask, vs.rgb.h, vs.rgb.w));
      detail::write_text(out_dir / sid / (stem + "_camera.json"),
                         detail::camera_to_json(vs.camera).dump(2) + "\n");
      for (const char* suffix : {"_rgb.png", "_nocs_v.png", "_nocs_h.png", "_mask.png", "_camera.json"})
        add_file(fs::path(sid) / (stem + suffix));
      views.push_back(stem);
    }
    shapes.push_back({{"id", sid},
                      {"family", family_name(fam)},
                      {"seed", derive_seed(cfg.seed, 11, uint64_t(i))},
                      {"views", views}});
  }

  json families = json::array();
  for (auto f : cfg.families) families.push_back(family_name(f));
  DatasetManifest manifest;
  manifest.doc = {{"format", "pix2surf-dataset-v1"},
                  {"config",
                   {{"n_shapes", cfg.n_shapes},
                    {"views_per_shape", cfg.views_per_shape},
                    {"resolution", {cfg.height, cfg.width}},
                    {"seed", cfg.seed},
                    {"noise_background", cfg.noise_background},
                    {"families", families},
                    {"coverage_band", {cfg.min_coverage, cfg.max_coverage}}}},
                  {"shapes", shapes},
                  {"files", files},
                  {"warnings", warnings}};
  detail::write_text(out_dir / "manifest.json", manifest.dump());
  return manifest;
}

// In-memory dataset: every view of every shape, in manifest order.
struct Dataset {
  json manifest;
  std::vector<ViewSample> views;           // flattened
  std::vector<std::string> shape_ids;      // unique, in order
  std::vector<std::vector<int>> by_shape;  // indices into views

  int height() const { return views.empty() ? 0 : views.front().rgb.h; }
  int width() const { return views.empty() ? 0 : views.front().rgb.w; }

  std::string family_of_shape(const std::string& sid) const {
    for (const auto& s : manifest["shapes"])
      if (s["id"] == sid) return s["family"];
    return "?";
  }
};

inline Dataset load_dataset(const fs::path& root) {
  std::ifstream mf(root / "manifest.json");
  if (!mf) throw IoError("cannot open manifest: " + (root / "manifest.json").string());
  Dataset ds;
  mf >> ds.manifest;

  for (const auto& s : ds.manifest["shapes"]) {
    std::string sid = s["id"];
    ds.shape_ids.push_back(sid);
    std::vector<int> idxs;
    for (const auto& v : s["views"]) {
      std::string stem = v;
      ViewSample vs;
      vs.shape_id = sid;
      vs.view_id = stem;
      vs.family = s["family"];
      vs.rgb = from_png8(read_png((root / sid / (stem + "_rgb.png")).string()));
      PngImage mask_png = read_png((root / sid / (stem + "_mask.png")).string());
      vs.mask = mask_from_png8(mask_png);
      vs.nocs_visible = nocs_from_png16(read_png((root / sid / (stem + "_nocs_v.png")).string()), vs.mask);
      vs.nocs_hidden = nocs_from_png16(read_png((root / sid / (stem + "_nocs_h.png")).string()), vs.mask);
      std::ifstream cf(root / sid / (stem + "_camera.json"));
      if (!cf) throw IoError("cannot open camera json for " + sid + "/" + stem);
      json cj;
      cf >> cj;
      vs.camera = detail::camera_from_json(cj);
      idxs.push_back(int(ds.views.size()));
      ds.views.push_back(std::move(vs));
    }
    ds.by_shape.push_back(idxs);
  }
  return ds;
}

}  // namespace pix2surf
