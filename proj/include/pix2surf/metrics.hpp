#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "pix2surf/chart2mesh.hpp"
#include "pix2surf/dataset.hpp"
#include "pix2surf/losses.hpp"

namespace pix2surf {

struct MetricValue {
  double value = 0.0;
  bool missing = false;
  std::string reason;

  static MetricValue of(double v) { return {v, false, ""}; }
  static MetricValue absent(const std::string& why) { return {0.0, true, why}; }
};

// ---- NOCS-map conversion -------------------------------------------------------

// Z-buffered point splatting on a sub-pixel grid. Each pixel is divided into
// SxS subcells with an independent min-depth winner; the pixel reports the
// winner of the subcell nearest its center. Edge samples that graze a pixel
// cannot shadow what the pixel center actually sees.
inline NocsMap surface_to_nocs_map(const std::vector<Vec3>& points, const Camera& camera,
                                   int height, int width) {
  camera.validate();
  NocsMap map(height, width);
  if (points.empty()) return map;
  Camera cam = camera;
  cam.height = height;
  cam.width = width;

  constexpr int S = 8;
  const double kBig = 1e30;
  const int sh = height * S, sw = width * S;
  std::vector<double> zbuf(size_t(sh) * sw, kBig);
  std::vector<int> winner(size_t(sh) * sw, -1);
  for (size_t i = 0; i < points.size(); ++i) {
    Camera::Projection pr = cam.project(points[i]);
    if (pr.depth <= 0) continue;
    int rs = int(std::floor((pr.row + 0.5) * S));
    int cs = int(std::floor((pr.col + 0.5) * S));
    if (rs < 0 || rs >= sh || cs < 0 || cs >= sw) continue;
    size_t cell = size_t(rs) * sw + cs;
    if (pr.depth < zbuf[cell]) {
      zbuf[cell] = pr.depth;
      winner[cell] = int(i);
    }
  }

  // subcell visit order: nearest to the pixel center first
  std::array<std::pair<double, int>, S * S> order;
  for (int i = 0; i < S * S; ++i) {
    double dr = (i / S + 0.5) / S - 0.5, dc = (i % S + 0.5) / S - 0.5;
    order[size_t(i)] = {dr * dr + dc * dc, i};
  }
  std::sort(order.begin(), order.end());

  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      for (const auto& [_, sub] : order) {
        size_t cell = size_t(r * S + sub / S) * sw + (c * S + sub % S);
        if (winner[cell] < 0) continue;
        const Vec3& q = points[size_t(winner[cell])];
        size_t p = size_t(r) * width + c;
        map.valid[p] = 1;
        map.coords[p * 3] = q.x;
        map.coords[p * 3 + 1] = q.y;
        map.coords[p * 3 + 2] = q.z;
        break;
      }
    }
  }
  return map;
}

// Triangle rasterization at exact pixel centers: z-buffered ray-plane
// intersections, so visibility and positions match a per-pixel ray cast up to
// tessellation error. Vertices not covered by any face are splatted into
// still-empty pixels afterwards, which keeps sparse chart meshes visible.
inline NocsMap rasterize_triangles(const std::vector<Vec3>& verts,
                                   const std::vector<std::array<int, 3>>& tris,
                                   const Camera& camera, int height, int width,
                                   std::vector<double>* depth_out = nullptr) {
  camera.validate();
  Camera cam = camera;
  cam.height = height;
  cam.width = width;
  NocsMap map(height, width);
  std::vector<double> zbuf(size_t(height) * width, 1e30);

  std::vector<Camera::Projection> proj(verts.size());
  for (size_t i = 0; i < verts.size(); ++i) proj[i] = cam.project(verts[i]);

  for (const auto& tri : tris) {
    const auto& pa = proj[size_t(tri[0])];
    const auto& pb = proj[size_t(tri[1])];
    const auto& pc = proj[size_t(tri[2])];
    if (pa.depth <= 1e-9 || pb.depth <= 1e-9 || pc.depth <= 1e-9) continue;
    int r0 = std::max(0, int(std::ceil(std::min({pa.row, pb.row, pc.row}))));
    int r1 = std::min(height - 1, int(std::floor(std::max({pa.row, pb.row, pc.row}))));
    int c0 = std::max(0, int(std::ceil(std::min({pa.col, pb.col, pc.col}))));
    int c1 = std::min(width - 1, int(std::floor(std::max({pa.col, pb.col, pc.col}))));
    if (r0 > r1 || c0 > c1) continue;

    const Vec3& A = verts[size_t(tri[0])];
    Vec3 ab = verts[size_t(tri[1])] - A;
    Vec3 ac = verts[size_t(tri[2])] - A;
    Vec3 n = cross(ab, ac);

    auto edge = [](double ax, double ay, double bx, double by, double px, double py) {
      return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
    };
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        double e0 = edge(pa.col, pa.row, pb.col, pb.row, c, r);
        double e1 = edge(pb.col, pb.row, pc.col, pc.row, c, r);
        double e2 = edge(pc.col, pc.row, pa.col, pa.row, c, r);
        bool inside = (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
        if (!inside) continue;
        Vec3 dir = cam.ray_dir(r, c);
        double denom = dot(n, dir);
        if (std::fabs(denom) < 1e-15) continue;
        double t = dot(n, A - cam.position) / denom;
        if (t <= 0) continue;
        size_t p = size_t(r) * width + c;
        if (t >= zbuf[p]) continue;
        zbuf[p] = t;
        Vec3 q = cam.position + dir * t;
        map.valid[p] = 1;
        map.coords[p * 3] = q.x;
        map.coords[p * 3 + 1] = q.y;
        map.coords[p * 3 + 2] = q.z;
      }
    }
  }
  if (depth_out) *depth_out = std::move(zbuf);
  return map;
}

inline NocsMap surface_to_nocs_map(const TriMesh& mesh, const Camera& camera, int height,
                                   int width) {
  return rasterize_triangles(mesh.vertices, mesh.triangles, camera, height, width);
}

// Chart-mesh variant: rasterizes the faces, then splats face-less vertices
// into pixels the rasterizer left empty.
inline NocsMap surface_to_nocs_map(const UvMesh& mesh, const Camera& camera, int height,
                                   int width) {
  std::vector<Vec3> verts;
  verts.reserve(mesh.vertices.size());
  for (const auto& v : mesh.vertices) verts.push_back(v.xyz);
  NocsMap map = rasterize_triangles(verts, mesh.faces, camera, height, width);
  NocsMap splat = surface_to_nocs_map(verts, camera, height, width);
  for (int p = 0; p < height * width; ++p) {
    if (map.valid[size_t(p)] || !splat.valid[size_t(p)]) continue;
    map.valid[size_t(p)] = 1;
    for (int c = 0; c < 3; ++c) map.coords[size_t(p) * 3 + c] = splat.coords[size_t(p) * 3 + c];
  }
  return map;
}

namespace detail {

inline std::vector<Vec3> map_points(const NocsMap& m) {
  std::vector<Vec3> pts;
  for (int p = 0; p < m.h * m.w; ++p)
    if (m.valid[size_t(p)])
      pts.push_back({m.coords[size_t(p) * 3], m.coords[size_t(p) * 3 + 1], m.coords[size_t(p) * 3 + 2]});
  return pts;
}

// Exact nearest-neighbor queries over [0,1]^3 with a uniform cell grid.
class PointGrid {
 public:
  explicit PointGrid(const std::vector<Vec3>& pts) : pts_(pts) {
    cells_.resize(size_t(G) * G * G);
    for (int i = 0; i < int(pts.size()); ++i) cells_[cell_of(pts[size_t(i)])].push_back(i);
  }

  double min_sqdist(const Vec3& q) const {
    int cx = coord(q.x), cy = coord(q.y), cz = coord(q.z);
    double best = 1e30;
    for (int shell = 0; shell < G; ++shell) {
      for (int dx = -shell; dx <= shell; ++dx)
        for (int dy = -shell; dy <= shell; ++dy)
          for (int dz = -shell; dz <= shell; ++dz) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != shell) continue;
            int x = cx + dx, y = cy + dy, z = cz + dz;
            if (x < 0 || x >= G || y < 0 || y >= G || z < 0 || z >= G) continue;
            for (int i : cells_[(size_t(x) * G + y) * G + z]) {
              Vec3 d = pts_[size_t(i)] - q;
              best = std::min(best, dot(d, d));
            }
          }
      double floor_dist = double(shell) / G;  // shells beyond are at least this far
      if (best <= floor_dist * floor_dist) break;
    }
    return best;
  }

 private:
  static constexpr int G = 24;
  static int coord(double v) { return std::clamp(int(v * G), 0, G - 1); }
  static size_t cell_of(const Vec3& p) {
    return (size_t(coord(p.x)) * G + coord(p.y)) * G + coord(p.z);
  }
  const std::vector<Vec3>& pts_;
  std::vector<std::vector<int>> cells_;
};

}  // namespace detail

// Two-way Chamfer with squared distances: mean-of-min in both directions, summed.
inline MetricValue recon_error(const NocsMap& pred, const NocsMap& gt) {
  std::vector<Vec3> p = detail::map_points(pred);
  std::vector<Vec3> g = detail::map_points(gt);
  if (p.empty()) return MetricValue::absent("empty prediction");
  if (g.empty()) return MetricValue::absent("empty ground truth");
  detail::PointGrid pg(p), gg(g);
  double d1 = 0, d2 = 0;
  for (const Vec3& x : g) d1 += pg.min_sqdist(x);
  for (const Vec3& x : p) d2 += gg.min_sqdist(x);
  return MetricValue::of(d1 / double(g.size()) + d2 / double(p.size()));
}

// Mean squared distance at pixels valid in both maps.
inline MetricValue corr_error(const NocsMap& pred, const NocsMap& gt) {
  check_shape(pred.h == gt.h && pred.w == gt.w, "corr_error: resolution mismatch");
  double acc = 0;
  int n = 0;
  for (int p = 0; p < gt.h * gt.w; ++p) {
    if (!pred.valid[size_t(p)] || !gt.valid[size_t(p)]) continue;
    ++n;
    for (int c = 0; c < 3; ++c) {
      double d = pred.coords[size_t(p) * 3 + c] - gt.coords[size_t(p) * 3 + c];
      acc += d * d;
    }
  }
  if (n == 0) return MetricValue::absent("empty mask intersection");
  return MetricValue::of(acc / n);
}

// Mean squared distance between predictions at pixels whose ground-truth NOCS
// positions coincide across views (all qualifying pairs, pooled over all view
// pairs). Pairs where either pixel lacks a prediction are skipped.
inline MetricValue consistency_error(const std::vector<const NocsMap*>& pred_maps,
                                     const std::vector<const NocsMap*>& gt_maps,
                                     double eps = 1e-3) {
  if (gt_maps.size() < 2) return MetricValue::absent("need at least two views");
  const int V = int(gt_maps.size());
  double acc = 0;
  int64_t n = 0;
  for (int a = 0; a < V; ++a) {
    for (int b = a + 1; b < V; ++b) {
      const NocsMap& ga = *gt_maps[size_t(a)];
      const NocsMap& gb = *gt_maps[size_t(b)];
      const NocsMap& pa = *pred_maps[size_t(a)];
      const NocsMap& pb = *pred_maps[size_t(b)];
      detail::NocsHash hash(eps);
      std::vector<int> pix_b;
      for (int p = 0; p < gb.h * gb.w; ++p) {
        if (!gb.valid[size_t(p)] || !pb.valid[size_t(p)]) continue;
        hash.insert({gb.coords[size_t(p) * 3], gb.coords[size_t(p) * 3 + 1],
                     gb.coords[size_t(p) * 3 + 2]},
                    int(pix_b.size()));
        pix_b.push_back(p);
      }
      for (int p = 0; p < ga.h * ga.w; ++p) {
        if (!ga.valid[size_t(p)] || !pa.valid[size_t(p)]) continue;
        Vec3 ya{ga.coords[size_t(p) * 3], ga.coords[size_t(p) * 3 + 1], ga.coords[size_t(p) * 3 + 2]};
        hash.for_neighbors(ya, [&](int id) {
          int q = pix_b[size_t(id)];
          Vec3 yb{gb.coords[size_t(q) * 3], gb.coords[size_t(q) * 3 + 1], gb.coords[size_t(q) * 3 + 2]};
          if (dist(ya, yb) >= eps) return;
          Vec3 xa{pa.coords[size_t(p) * 3], pa.coords[size_t(p) * 3 + 1], pa.coords[size_t(p) * 3 + 2]};
          Vec3 xb{pb.coords[size_t(q) * 3], pb.coords[size_t(q) * 3 + 1], pb.coords[size_t(q) * 3 + 2]};
          Vec3 d = xa - xb;
          acc += dot(d, d);
          ++n;
        });
      }
    }
  }
  if (n == 0) return MetricValue::absent("no correspondences within eps");
  return MetricValue::of(acc / double(n));
}

// ---- discontinuity statistics -----------------------------------------------------

struct DiscontinuityHistogram {
  static constexpr int kBins = 20;
  std::array<double, kBins + 1> edges{};
  std::array<int64_t, kBins> counts{};

  DiscontinuityHistogram() {
    const double lo = 0.05, hi = std::sqrt(3.0);
    for (int i = 0; i <= kBins; ++i) edges[size_t(i)] = lo + (hi - lo) * i / kBins;
  }

  int64_t total() const {
    int64_t t = 0;
    for (int64_t c : counts) t += c;
    return t;
  }
};

// Histogram of 3D distances between 4-connected valid pixel pairs, restricted
// to [0.05, sqrt(3)]. Pairs below the discontinuity threshold are excluded.
inline DiscontinuityHistogram discontinuity_histogram(const NocsMap& map) {
  DiscontinuityHistogram h;
  const double lo = h.edges.front(), hi = h.edges.back();
  const double width = (hi - lo) / DiscontinuityHistogram::kBins;
  auto at = [&](int p) {
    return Vec3{map.coords[size_t(p) * 3], map.coords[size_t(p) * 3 + 1], map.coords[size_t(p) * 3 + 2]};
  };
  for (int r = 0; r < map.h; ++r) {
    for (int c = 0; c < map.w; ++c) {
      int p = r * map.w + c;
      if (!map.valid[size_t(p)]) continue;
      const int neighbors[2] = {c + 1 < map.w ? p + 1 : -1, r + 1 < map.h ? p + map.w : -1};
      for (int q : neighbors) {
        if (q < 0 || !map.valid[size_t(q)]) continue;
        double d = dist(at(p), at(q));
        if (d < lo || d > hi) continue;
        int bin = std::min(DiscontinuityHistogram::kBins - 1, int((d - lo) / width));
        h.counts[size_t(bin)] += 1;
      }
    }
  }
  return h;
}

// Correlation of L1-normalized bins. Degenerate cases: both histograms empty
// score 1 (identical "no discontinuities"), one empty scores 0.
inline MetricValue discontinuity_score(const DiscontinuityHistogram& pred,
                                       const DiscontinuityHistogram& gt) {
  int64_t sp = pred.total(), sg = gt.total();
  if (sp == 0 && sg == 0) return {1.0, false, "both histograms empty"};
  if (sp == 0 || sg == 0) return {0.0, false, "one histogram empty"};
  double acc = 0;
  for (int i = 0; i < DiscontinuityHistogram::kBins; ++i)
    acc += double(pred.counts[size_t(i)]) * double(gt.counts[size_t(i)]);
  return MetricValue::of(acc / (double(sp) * double(sg)));
}

// ---- report assembly ---------------------------------------------------------------

struct MetricsReport {
  struct Record {
    std::string shape_id, view_id, family;
    MetricValue e_rec, e_corr, e_cons, s_cont;
    MetricValue e_rec_hidden{0, true, "hidden evaluation disabled"};
  };
  std::vector<Record> records;
  nlohmann::json config_echo;

  // Each metric aggregates over the records where it is defined; the per-metric
  // counts record the coverage.
  struct Aggregate {
    double e_rec = 0, e_corr = 0, e_cons = 0, s_cont = 0, e_rec_hidden = 0;
    int e_rec_count = 0, e_corr_count = 0, e_cons_count = 0, s_cont_count = 0, hidden_count = 0;
    int count = 0, missing = 0;
  };

  static void accumulate(Aggregate& a, const Record& r) {
    if (r.e_rec.missing) {
      a.missing += 1;
    } else {
      a.count += 1;
    }
    auto add = [](const MetricValue& v, double& sum, int& n) {
      if (v.missing) return;
      sum += v.value;
      n += 1;
    };
    add(r.e_rec, a.e_rec, a.e_rec_count);
    add(r.e_corr, a.e_corr, a.e_corr_count);
    add(r.e_cons, a.e_cons, a.e_cons_count);
    add(r.s_cont, a.s_cont, a.s_cont_count);
    add(r.e_rec_hidden, a.e_rec_hidden, a.hidden_count);
  }

  Aggregate overall() const {
    Aggregate a;
    for (const auto& r : records) accumulate(a, r);
    finish(a);
    return a;
  }

  std::map<std::string, Aggregate> per_family() const {
    std::map<std::string, Aggregate> out;
    for (const auto& r : records) accumulate(out[r.family], r);
    for (auto& [_, a] : out) finish(a);
    return out;
  }

  static void finish(Aggregate& a) {
    if (a.e_rec_count > 0) a.e_rec /= a.e_rec_count;
    if (a.e_corr_count > 0) a.e_corr /= a.e_corr_count;
    if (a.e_cons_count > 0) a.e_cons /= a.e_cons_count;
    if (a.s_cont_count > 0) a.s_cont /= a.s_cont_count;
    if (a.hidden_count > 0) a.e_rec_hidden /= a.hidden_count;
  }

  nlohmann::json to_json() const {
    auto mv = [](const MetricValue& v) -> nlohmann::json {
      if (v.missing) return {{"missing", true}, {"reason", v.reason}};
      return {{"value", v.value}};
    };
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& r : records)
      recs.push_back({{"shape_id", r.shape_id},
                      {"view_id", r.view_id},
                      {"family", r.family},
                      {"e_rec", mv(r.e_rec)},
                      {"e_corr", mv(r.e_corr)},
                      {"e_cons", mv(r.e_cons)},
                      {"s_cont", mv(r.s_cont)},
                      {"e_rec_hidden", mv(r.e_rec_hidden)}});
    auto agg_json = [](const Aggregate& a) -> nlohmann::json {
      return {{"e_rec", a.e_rec},
              {"e_rec_x1000", a.e_rec * 1000.0},
              {"e_corr", a.e_corr},
              {"e_corr_x1000", a.e_corr * 1000.0},
              {"e_cons", a.e_cons},
              {"e_cons_x1000", a.e_cons * 1000.0},
              {"s_cont", a.s_cont},
              {"e_rec_hidden", a.e_rec_hidden},
              {"e_rec_hidden_x1000", a.e_rec_hidden * 1000.0},
              {"count", a.count},
              {"missing", a.missing},
              {"counts",
               {{"e_rec", a.e_rec_count},
                {"e_corr", a.e_corr_count},
                {"e_cons", a.e_cons_count},
                {"s_cont", a.s_cont_count},
                {"e_rec_hidden", a.hidden_count}}}};
    };
    nlohmann::json fam;
    for (const auto& [name, a] : per_family()) fam[name] = agg_json(a);
    return {{"config", config_echo},
            {"records", recs},
            {"aggregates", {{"overall", agg_json(overall())}, {"per_family", fam}}},
            {"full_scale_reference",
             {{"single_view_avg_e_rec_x1000", 1.73},
              {"multi_view_avg_e_rec_x1000", 1.52},
              {"single_view_avg_e_cons_x1000", 9.65},
              {"multi_view_avg_e_cons_x1000", 8.38},
              {"single_view_avg_s_cont", 0.59},
              {"note", "published full-scale reference values; context only, not desk-scale targets"}}}};
  }

  std::string to_csv() const {
    std::string out = "shape_id,view_id,family,e_rec,e_corr,e_cons,s_cont,e_rec_hidden,missing\n";
    auto cell = [](const MetricValue& v) { return v.missing ? std::string("") : format_double(v.value); };
    for (const auto& r : records) {
      bool miss = r.e_rec.missing || r.e_corr.missing || r.e_cons.missing || r.s_cont.missing;
      out += r.shape_id + "," + r.view_id + "," + r.family + "," + cell(r.e_rec) + "," +
             cell(r.e_corr) + "," + cell(r.e_cons) + "," + cell(r.s_cont) + "," +
             cell(r.e_rec_hidden) + "," + (miss ? "1" : "0") + "\n";
    }
    return out;
  }
};

// Per-view predictions expressed as NOCS maps (already converted with the
// ground-truth cameras). Missing entries are recorded, not fatal.
struct PredictionSet {
  std::vector<std::optional<NocsMap>> visible;  // aligned with dataset views
  std::vector<std::optional<NocsMap>> hidden;   // optional hidden-layer maps
};

inline MetricsReport evaluate(const PredictionSet& preds, const Dataset& ds, double eps = 1e-3) {
  MetricsReport report;
  report.config_echo = {{"eps_eval", eps},
                        {"bins", DiscontinuityHistogram::kBins},
                        {"disc_threshold", 0.05}};
  check_shape(preds.visible.size() == ds.views.size(), "evaluate: prediction count mismatch");

  // per-shape pooled consistency, assigned to each of the shape's views
  std::vector<MetricValue> cons_by_shape;
  for (const auto& idxs : ds.by_shape) {
    std::vector<const NocsMap*> pm, gm;
    bool complete = true;
    for (int vi : idxs) {
      if (!preds.visible[size_t(vi)].has_value()) {
        complete = false;
        break;
      }
      pm.push_back(&*preds.visible[size_t(vi)]);
      gm.push_back(&ds.views[size_t(vi)].nocs_visible);
    }
    cons_by_shape.push_back(complete && pm.size() >= 2
                                ? consistency_error(pm, gm, eps)
                                : MetricValue::absent(pm.size() < 2 ? "fewer than two views"
                                                                    : "missing predictions"));
  }

  for (size_t si = 0; si < ds.by_shape.size(); ++si) {
    for (int vi : ds.by_shape[si]) {
      const ViewSample& vs = ds.views[size_t(vi)];
      MetricsReport::Record rec;
      rec.shape_id = vs.shape_id;
      rec.view_id = vs.view_id;
      rec.family = vs.family;
      if (!preds.visible[size_t(vi)].has_value()) {
        rec.e_rec = rec.e_corr = rec.s_cont = MetricValue::absent("missing prediction");
        rec.e_cons = cons_by_shape[si];
        report.records.push_back(rec);
        continue;
      }
      const NocsMap& pm = *preds.visible[size_t(vi)];
      rec.e_rec = recon_error(pm, vs.nocs_visible);
      rec.e_corr = corr_error(pm, vs.nocs_visible);
      rec.e_cons = cons_by_shape[si];
      rec.s_cont = discontinuity_score(discontinuity_histogram(pm),
                                       discontinuity_histogram(vs.nocs_visible));
      if (size_t(vi) < preds.hidden.size() && preds.hidden[size_t(vi)].has_value())
        rec.e_rec_hidden = recon_error(*preds.hidden[size_t(vi)], vs.nocs_hidden);
      report.records.push_back(rec);
    }
  }
  return report;
}

}  // namespace pix2surf
