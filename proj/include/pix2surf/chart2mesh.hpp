#pragma once

#include <algorithm>
#include <array>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "pix2surf/geometry.hpp"
#include "pix2surf/netcore.hpp"

namespace pix2surf {

struct InferParams {
  int upsample = 4;
  int uv_res = 128;
  int final_res = 512;
  double uv_grad_thresh = 0.05;  // chart-units gate for interpolation
  double edge_thresh = 0.05;     // 3D discontinuity bound for mesh edges
  double outlier_t = 0.02;       // nearest-neighbor distance threshold
  int knn = 4;
  int closing_iters = 2;
};

// Foreground region of the learned chart plus the unwrapped source pixels.
// grid indexing: cell (i,j) covers v in [i/res,(i+1)/res), u in [j/res,(j+1)/res).
struct ChartOccupancy {
  int res = 0;
  std::vector<uint8_t> grid;

  struct Sample {
    double u, v;        // chart position
    double src_r, src_c;  // continuous source pixel in the input image
  };
  std::vector<Sample> samples;

  bool occupied(int i, int j) const { return grid[size_t(i) * res + j] != 0; }
  int count() const {
    int n = 0;
    for (uint8_t g : grid) n += g ? 1 : 0;
    return n;
  }
};

namespace detail {

inline void dilate3(std::vector<uint8_t>& g, int res) {
  std::vector<uint8_t> out(g.size(), 0);
  for (int i = 0; i < res; ++i)
    for (int j = 0; j < res; ++j) {
      bool on = false;
      for (int di = -1; di <= 1 && !on; ++di)
        for (int dj = -1; dj <= 1 && !on; ++dj) {
          int ii = i + di, jj = j + dj;
          if (ii >= 0 && ii < res && jj >= 0 && jj < res && g[size_t(ii) * res + jj]) on = true;
        }
      out[size_t(i) * res + j] = on ? 1 : 0;
    }
  g.swap(out);
}

inline void erode3(std::vector<uint8_t>& g, int res) {
  std::vector<uint8_t> out(g.size(), 0);
  for (int i = 0; i < res; ++i)
    for (int j = 0; j < res; ++j) {
      bool on = true;
      for (int di = -1; di <= 1 && on; ++di)
        for (int dj = -1; dj <= 1 && on; ++dj) {
          int ii = i + di, jj = j + dj;
          if (ii < 0 || ii >= res || jj < 0 || jj >= res || !g[size_t(ii) * res + jj]) on = false;
        }
      out[size_t(i) * res + j] = on ? 1 : 0;
    }
  g.swap(out);
}

}  // namespace detail

// Maps the image-space foreground into chart space: x4 discontinuity-aware
// upsampling of mask and chart, nearest-cell splatting into the uv grid,
// upsampling to the final resolution, then morphological closing.
inline ChartOccupancy unwrap_mask(const std::vector<uint8_t>& mask, const Tensor& chart,
                                  const InferParams& ip = {}) {
  check_shape(chart.rank() == 3 && chart.dim(0) == 2, "unwrap_mask: chart must be [2,H,W]");
  const int H = chart.dim(1), W = chart.dim(2);
  check_shape(int(mask.size()) == H * W, "unwrap_mask: mask size mismatch");

  ChartOccupancy occ;
  occ.res = ip.final_res;
  occ.grid.assign(size_t(ip.final_res) * ip.final_res, 0);

  const int H4 = H * ip.upsample, W4 = W * ip.upsample;
  std::vector<uint8_t> occ_small(size_t(ip.uv_res) * ip.uv_res, 0);

  auto uv_at = [&](int r, int c, int ch) { return chart.at(ch, r, c); };

  for (int r4 = 0; r4 < H4; ++r4) {
    for (int c4 = 0; c4 < W4; ++c4) {
      double sr = (r4 + 0.5) / ip.upsample - 0.5;
      double sc = (c4 + 0.5) / ip.upsample - 0.5;
      int r0 = std::clamp(int(std::floor(sr)), 0, H - 1);
      int c0 = std::clamp(int(std::floor(sc)), 0, W - 1);
      int r1 = std::min(r0 + 1, H - 1);
      int c1 = std::min(c0 + 1, W - 1);
      double fr = std::clamp(sr - r0, 0.0, 1.0);
      double fc = std::clamp(sc - c0, 0.0, 1.0);

      // gate interpolation on the uv spread of the 2x2 source block
      double spread = 0;
      for (int ch = 0; ch < 2; ++ch) {
        double a = uv_at(r0, c0, ch), b = uv_at(r0, c1, ch), c = uv_at(r1, c0, ch),
               d = uv_at(r1, c1, ch);
        spread = std::max(spread, std::max({a, b, c, d}) - std::min({a, b, c, d}));
      }

      double u, v, mval;
      if (spread <= ip.uv_grad_thresh) {
        auto lerp2 = [&](int ch) {
          return (1 - fr) * ((1 - fc) * uv_at(r0, c0, ch) + fc * uv_at(r0, c1, ch)) +
                 fr * ((1 - fc) * uv_at(r1, c0, ch) + fc * uv_at(r1, c1, ch));
        };
        u = lerp2(0);
        v = lerp2(1);
        auto m = [&](int r, int c) { return mask[size_t(r) * W + c] ? 1.0 : 0.0; };
        mval = (1 - fr) * ((1 - fc) * m(r0, c0) + fc * m(r0, c1)) +
               fr * ((1 - fc) * m(r1, c0) + fc * m(r1, c1));
      } else {
        int rn = std::clamp(int(std::lround(sr)), 0, H - 1);
        int cn = std::clamp(int(std::lround(sc)), 0, W - 1);
        u = uv_at(rn, cn, 0);
        v = uv_at(rn, cn, 1);
        mval = mask[size_t(rn) * W + cn] ? 1.0 : 0.0;
      }
      if (mval < 0.5) continue;

      int j = std::clamp(int(std::floor(u * ip.uv_res)), 0, ip.uv_res - 1);
      int i = std::clamp(int(std::floor(v * ip.uv_res)), 0, ip.uv_res - 1);
      occ_small[size_t(i) * ip.uv_res + j] = 1;
      occ.samples.push_back({u, v, sr, sc});
    }
  }

  const int blow = ip.final_res / ip.uv_res;
  check_shape(blow >= 1 && ip.final_res % ip.uv_res == 0,
              "unwrap_mask: final_res must be a multiple of uv_res");
  for (int i = 0; i < ip.uv_res; ++i)
    for (int j = 0; j < ip.uv_res; ++j) {
      if (!occ_small[size_t(i) * ip.uv_res + j]) continue;
      for (int bi = 0; bi < blow; ++bi)
        for (int bj = 0; bj < blow; ++bj)
          occ.grid[size_t(i * blow + bi) * ip.final_res + (j * blow + bj)] = 1;
    }

  if (occ.count() > 0) {
    for (int it = 0; it < ip.closing_iters; ++it) detail::dilate3(occ.grid, ip.final_res);
    for (int it = 0; it < ip.closing_iters; ++it) detail::erode3(occ.grid, ip.final_res);
  }
  return occ;
}

// Keeps exactly the points whose nearest-neighbor distance is <= t. A point
// with no neighbor within t (including a lone point) is dropped. Grid-hashed
// but exact: any neighbor within t lies in an adjacent cell of size t.
inline std::vector<int> remove_outliers(const std::vector<Vec3>& points, double t) {
  std::vector<int> kept;
  const int n = int(points.size());
  if (n == 0) return kept;
  if (!(t > 0)) throw ConfigError("remove_outliers: threshold must be > 0");

  std::unordered_map<int64_t, std::vector<int>> cells;
  auto key = [&](const Vec3& p) {
    int ix = int(std::floor(p.x / t)), iy = int(std::floor(p.y / t)), iz = int(std::floor(p.z / t));
    return (int64_t(ix) << 42) ^ (int64_t(iy) << 21) ^ int64_t(iz);
  };
  for (int i = 0; i < n; ++i) cells[key(points[size_t(i)])].push_back(i);

  for (int i = 0; i < n; ++i) {
    const Vec3& p = points[size_t(i)];
    int ix = int(std::floor(p.x / t)), iy = int(std::floor(p.y / t)), iz = int(std::floor(p.z / t));
    bool ok = false;
    for (int dx = -1; dx <= 1 && !ok; ++dx)
      for (int dy = -1; dy <= 1 && !ok; ++dy)
        for (int dz = -1; dz <= 1 && !ok; ++dz) {
          auto it = cells.find((int64_t(ix + dx) << 42) ^ (int64_t(iy + dy) << 21) ^ int64_t(iz + dz));
          if (it == cells.end()) continue;
          for (int j : it->second) {
            if (j == i) continue;
            if (dist(p, points[size_t(j)]) <= t) { ok = true; break; }
          }
        }
    if (ok) kept.push_back(i);
  }
  return kept;
}

// Inverse-distance-weighted interpolation of the k nearest unwrapped source
// pixels in uv space, one color per occupied cell. Exact-coincidence queries
// return the source color untouched.
inline std::vector<double> texture_chart(const ImageF& image, const ChartOccupancy& occ,
                                         int k = 4) {
  const int R = occ.res;
  std::vector<double> colors(size_t(R) * R * 3, 1.0);
  if (occ.samples.empty() || occ.count() == 0) return colors;

  // colors of each unwrapped sample (bilinear in the source image)
  auto sample_color = [&](double sr, double sc, int ch) {
    int r0 = std::clamp(int(std::floor(sr)), 0, image.h - 1);
    int c0 = std::clamp(int(std::floor(sc)), 0, image.w - 1);
    int r1 = std::min(r0 + 1, image.h - 1);
    int c1 = std::min(c0 + 1, image.w - 1);
    double fr = std::clamp(sr - r0, 0.0, 1.0), fc = std::clamp(sc - c0, 0.0, 1.0);
    return (1 - fr) * ((1 - fc) * image.at(r0, c0, ch) + fc * image.at(r0, c1, ch)) +
           fr * ((1 - fc) * image.at(r1, c0, ch) + fc * image.at(r1, c1, ch));
  };

  const int nsrc = int(occ.samples.size());
  std::vector<std::array<double, 3>> src_rgb(size_t(nsrc), std::array<double, 3>{});
  for (int s = 0; s < nsrc; ++s)
    for (int ch = 0; ch < 3; ++ch)
      src_rgb[size_t(s)][size_t(ch)] = sample_color(occ.samples[size_t(s)].src_r,
                                                    occ.samples[size_t(s)].src_c, ch);

  // uv-space bucket grid for nearest-neighbor queries
  const int G = 64;
  std::vector<std::vector<int>> buckets(size_t(G) * G);
  auto bucket_of = [&](double u, double v) {
    int bu = std::clamp(int(std::floor(u * G)), 0, G - 1);
    int bv = std::clamp(int(std::floor(v * G)), 0, G - 1);
    return size_t(bv) * G + bu;
  };
  for (int s = 0; s < nsrc; ++s)
    buckets[bucket_of(occ.samples[size_t(s)].u, occ.samples[size_t(s)].v)].push_back(s);

  const int kk = std::min(k, nsrc);
  std::vector<std::pair<double, int>> best;
  for (int i = 0; i < R; ++i) {
    for (int j = 0; j < R; ++j) {
      if (!occ.occupied(i, j)) continue;
      double qu = (j + 0.5) / R, qv = (i + 0.5) / R;
      int bu = std::clamp(int(std::floor(qu * G)), 0, G - 1);
      int bv = std::clamp(int(std::floor(qv * G)), 0, G - 1);

      best.clear();
      for (int ring = 0; ring < G; ++ring) {
        bool any_cell = false;
        for (int dv = -ring; dv <= ring; ++dv) {
          for (int du = -ring; du <= ring; ++du) {
            if (std::max(std::abs(du), std::abs(dv)) != ring) continue;
            int cu = bu + du, cv = bv + dv;
            if (cu < 0 || cu >= G || cv < 0 || cv >= G) continue;
            any_cell = true;
            for (int s : buckets[size_t(cv) * G + cu]) {
              double dx = occ.samples[size_t(s)].u - qu, dy = occ.samples[size_t(s)].v - qv;
              best.emplace_back(std::sqrt(dx * dx + dy * dy), s);
            }
          }
        }
        (void)any_cell;
        if (int(best.size()) >= kk) {
          std::sort(best.begin(), best.end());
          // points in rings > ring are at least ring/G away; once the kth
          // best is strictly closer the set is final
          if (best[size_t(kk - 1)].first < double(ring) / G) break;
        }
      }
      std::sort(best.begin(), best.end());

      if (best[0].first < 1e-12) {
        const auto& c = src_rgb[size_t(best[0].second)];
        for (int ch = 0; ch < 3; ++ch) colors[(size_t(i) * R + j) * 3 + ch] = c[size_t(ch)];
        continue;
      }
      double wsum = 0;
      double acc[3] = {0, 0, 0};
      for (int q = 0; q < kk; ++q) {
        double wgt = 1.0 / best[size_t(q)].first;
        wsum += wgt;
        const auto& c = src_rgb[size_t(best[size_t(q)].second)];
        for (int ch = 0; ch < 3; ++ch) acc[ch] += wgt * c[size_t(ch)];
      }
      for (int ch = 0; ch < 3; ++ch) colors[(size_t(i) * R + j) * 3 + ch] = acc[ch] / wsum;
    }
  }
  return colors;
}

// Regular surface samples over the occupied chart region, connected along the
// grid. Edges never exceed the discontinuity bound.
struct UvMesh {
  struct Vertex {
    double u, v;
    Vec3 xyz;
    Vec3 rgb;
  };
  std::vector<Vertex> vertices;
  std::vector<std::pair<int, int>> edges;
  std::vector<std::array<int, 3>> faces;
  std::string view_id;
};

inline UvMesh extract_mesh(SurfaceModel& model, const Tensor& code, const ChartOccupancy& occ,
                           const std::vector<double>& colors, const InferParams& ip = {}) {
  UvMesh mesh;
  const int R = occ.res;
  std::vector<int> cell_list;
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < R; ++j)
      if (occ.occupied(i, j)) cell_list.push_back(i * R + j);
  if (cell_list.empty()) return mesh;

  Tensor uv({int(cell_list.size()), 2});
  for (int n = 0; n < int(cell_list.size()); ++n) {
    int i = cell_list[size_t(n)] / R, j = cell_list[size_t(n)] % R;
    uv.at(n, 0) = (j + 0.5) / R;
    uv.at(n, 1) = (i + 0.5) / R;
  }
  Tensor xyz = sp_eval(model, code, uv);

  std::vector<Vec3> pts(cell_list.size());
  for (size_t n = 0; n < cell_list.size(); ++n)
    pts[n] = {xyz.at(int(n), 0), xyz.at(int(n), 1), xyz.at(int(n), 2)};
  std::vector<int> kept = remove_outliers(pts, ip.outlier_t);

  std::vector<int> vert_of_cell(size_t(R) * R, -1);
  for (int idx : kept) {
    int cell = cell_list[size_t(idx)];
    int i = cell / R, j = cell % R;
    UvMesh::Vertex vtx;
    vtx.u = uv.at(idx, 0);
    vtx.v = uv.at(idx, 1);
    vtx.xyz = pts[size_t(idx)];
    vtx.rgb = colors.empty() ? Vec3{1, 1, 1}
                             : Vec3{colors[(size_t(i) * R + j) * 3], colors[(size_t(i) * R + j) * 3 + 1],
                                    colors[(size_t(i) * R + j) * 3 + 2]};
    vert_of_cell[size_t(cell)] = int(mesh.vertices.size());
    mesh.vertices.push_back(vtx);
  }

  auto vert_at = [&](int i, int j) -> int {
    if (i < 0 || i >= R || j < 0 || j >= R) return -1;
    return vert_of_cell[size_t(i) * R + j];
  };
  auto edge_ok = [&](int a, int b) {
    return a >= 0 && b >= 0 && dist(mesh.vertices[size_t(a)].xyz, mesh.vertices[size_t(b)].xyz) < ip.edge_thresh;
  };

  for (int i = 0; i < R; ++i) {
    for (int j = 0; j < R; ++j) {
      int v00 = vert_at(i, j);
      if (v00 < 0) continue;
      int v01 = vert_at(i, j + 1), v10 = vert_at(i + 1, j);
      if (edge_ok(v00, v01)) mesh.edges.push_back({v00, v01});
      if (edge_ok(v00, v10)) mesh.edges.push_back({v00, v10});
      int v11 = vert_at(i + 1, j + 1);
      if (v01 >= 0 && v10 >= 0 && v11 >= 0) {
        if (edge_ok(v00, v10) && edge_ok(v10, v11) && edge_ok(v11, v00))
          mesh.faces.push_back({v00, v10, v11});
        if (edge_ok(v00, v11) && edge_ok(v11, v01) && edge_ok(v01, v00))
          mesh.faces.push_back({v00, v11, v01});
      }
    }
  }
  return mesh;
}

// chart tensor for the fixed-chart control: per-pixel image coordinates
// normalized over the mask bounding box.
inline Tensor image_coord_chart(const std::vector<uint8_t>& mask, int H, int W) {
  int r0 = H, r1 = -1, c0 = W, c1 = -1;
  for (int p = 0; p < int(mask.size()); ++p) {
    if (!mask[size_t(p)]) continue;
    int r = p / W, c = p % W;
    r0 = std::min(r0, r); r1 = std::max(r1, r);
    c0 = std::min(c0, c); c1 = std::max(c1, c);
  }
  Tensor chart({2, H, W});
  if (r1 < 0) return chart;
  double dr = std::max(1, r1 - r0), dc = std::max(1, c1 - c0);
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      chart.at(0, r, c) = std::clamp((c - c0) / dc, 0.0, 1.0);
      chart.at(1, r, c) = std::clamp((r - r0) / dr, 0.0, 1.0);
    }
  return chart;
}

enum class ReconstructMode { Single, Multi };

struct ReconstructOutput {
  UvMesh mesh;
  Tensor chart;                   // the chart actually used for unwrapping
  std::vector<uint8_t> pred_mask;
  ChartOccupancy occupancy;
  std::vector<double> colors;     // final_res^2 * 3
  DecoderOutput dec;
};

// Full inference path: images -> per-view charts and codes -> occupancies ->
// textured per-view meshes in the shared container. No cross-view stitching.
inline std::vector<ReconstructOutput> reconstruct_detailed(SurfaceModel& model,
                                                           const std::vector<ImageF>& images,
                                                           ReconstructMode mode,
                                                           const InferParams& ip = {}) {
  if (images.empty()) throw ConfigError("reconstruct: no images");
  if (mode == ReconstructMode::Multi && !model.config.multiview)
    throw IncompatError("reconstruct: multi mode requires a multiview checkpoint");
  if (mode == ReconstructMode::Single && model.config.multiview)
    throw IncompatError("reconstruct: single mode requires a single-view checkpoint");

  std::vector<ForwardResult> fwd;
  if (mode == ReconstructMode::Multi) {
    std::vector<Tensor> tensors;
    std::vector<Tensor> empty_uv(images.size(), Tensor({0, 2}));
    for (const auto& img : images) tensors.push_back(net::image_to_tensor(img));
    fwd = forward_multi(model, tensors, empty_uv);
  } else {
    for (const auto& img : images)
      fwd.push_back(forward_single(model, net::image_to_tensor(img), Tensor({0, 2})));
  }

  std::vector<ReconstructOutput> out;
  for (size_t v = 0; v < images.size(); ++v) {
    ForwardResult& fr = fwd[v];
    const int H = images[v].h, W = images[v].w;
    ReconstructOutput ro;
    ro.pred_mask.assign(size_t(H) * W, 0);
    for (int p = 0; p < H * W; ++p)
      ro.pred_mask[size_t(p)] = fr.dec.mask_logits.data[size_t(p)] > 0 ? 1 : 0;

    ro.chart = model.config.image_coords_chart ? image_coord_chart(ro.pred_mask, H, W) : fr.dec.chart;
    ro.occupancy = unwrap_mask(ro.pred_mask, ro.chart, ip);
    ro.colors = texture_chart(images[v], ro.occupancy, ip.knn);
    ro.mesh = extract_mesh(model, fr.code, ro.occupancy, ro.colors, ip);
    ro.mesh.view_id = "view_" + std::to_string(v);
    ro.dec = std::move(fr.dec);
    out.push_back(std::move(ro));
  }
  return out;
}

inline std::vector<UvMesh> reconstruct(SurfaceModel& model, const std::vector<ImageF>& images,
                                       ReconstructMode mode, const InferParams& ip = {}) {
  std::vector<UvMesh> meshes;
  for (auto& ro : reconstruct_detailed(model, images, mode, ip)) meshes.push_back(std::move(ro.mesh));
  return meshes;
}

// ---- file outputs ---------------------------------------------------------------

inline void write_obj(const UvMesh& mesh, const std::string& obj_path,
                      const std::string& texture_name = "") {
  std::ofstream f(obj_path, std::ios::binary);
  if (!f) throw IoError("cannot open for write: " + obj_path);
  char buf[256];
  if (!texture_name.empty()) {
    std::string mtl_path = obj_path.substr(0, obj_path.rfind('.')) + ".mtl";
    std::string mtl_name = std::filesystem::path(mtl_path).filename().string();
    f << "mtllib " << mtl_name << "\n";
    std::ofstream mf(mtl_path, std::ios::binary);
    if (!mf) throw IoError("cannot open for write: " + mtl_path);
    mf << "newmtl chart\nKa 1 1 1\nKd 1 1 1\nmap_Kd " << texture_name << "\n";
  }
  for (const auto& vtx : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g %.9g %.9g %.9g\n", vtx.xyz.x, vtx.xyz.y,
                  vtx.xyz.z, vtx.rgb.x, vtx.rgb.y, vtx.rgb.z);
    f << buf;
  }
  for (const auto& vtx : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "vt %.9g %.9g\n", vtx.u, 1.0 - vtx.v);
    f << buf;
  }
  if (!texture_name.empty()) f << "usemtl chart\n";
  for (const auto& face : mesh.faces)
    f << "f " << face[0] + 1 << "/" << face[0] + 1 << " " << face[1] + 1 << "/" << face[1] + 1
      << " " << face[2] + 1 << "/" << face[2] + 1 << "\n";
  for (const auto& e : mesh.edges) f << "l " << e.first + 1 << " " << e.second + 1 << "\n";
  if (!f) throw IoError("write failed: " + obj_path);
}

// Reads back the subset of OBJ this project writes (v/vt/f/l lines).
inline UvMesh read_obj(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  UvMesh mesh;
  std::string line;
  while (std::getline(f, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      UvMesh::Vertex vtx{};
      ss >> vtx.xyz.x >> vtx.xyz.y >> vtx.xyz.z;
      if (!(ss >> vtx.rgb.x >> vtx.rgb.y >> vtx.rgb.z)) vtx.rgb = {1, 1, 1};
      mesh.vertices.push_back(vtx);
    } else if (tag == "f") {
      std::array<int, 3> face{};
      for (int i = 0; i < 3; ++i) {
        std::string tok;
        ss >> tok;
        face[size_t(i)] = std::stoi(tok.substr(0, tok.find('/'))) - 1;
      }
      mesh.faces.push_back(face);
    } else if (tag == "l") {
      int a, b;
      ss >> a >> b;
      mesh.edges.push_back({a - 1, b - 1});
    }
  }
  return mesh;
}

inline void write_texture_png(const std::vector<double>& colors, int res, const std::string& path) {
  ImageF img(res, res, 3, 1.0);
  for (size_t k = 0; k < img.data.size(); ++k) img.data[k] = colors[k];
  write_png(path, to_png8(img));
}

// 2-channel chart rendered as an RG image.
inline void write_chart_png(const Tensor& chart, const std::string& path) {
  const int H = chart.dim(1), W = chart.dim(2);
  ImageF img(H, W, 3, 0.0);
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      img.at(r, c, 0) = chart.at(0, r, c);
      img.at(r, c, 1) = chart.at(1, r, c);
    }
  write_png(path, to_png8(img));
}

}  // namespace pix2surf
