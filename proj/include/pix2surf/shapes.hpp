#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "pix2surf/common.hpp"
#include "pix2surf/geometry.hpp"

namespace pix2surf {

enum class ShapeFamily { BoxUnion, Superellipsoid, SweptProfile };

inline const char* family_name(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::BoxUnion: return "box-union";
    case ShapeFamily::Superellipsoid: return "superellipsoid";
    case ShapeFamily::SweptProfile: return "swept-profile";
  }
  return "?";
}

inline ShapeFamily family_from_name(const std::string& s) {
  if (s == "box-union") return ShapeFamily::BoxUnion;
  if (s == "superellipsoid") return ShapeFamily::Superellipsoid;
  if (s == "swept-profile") return ShapeFamily::SweptProfile;
  throw ConfigError("unknown shape family: " + s);
}

struct AxisBox {
  Vec3 center, half;

  // Max-norm signed value: negative inside, zero on surface.
  double sign(const Vec3& p) const {
    double dx = std::fabs(p.x - center.x) - half.x;
    double dy = std::fabs(p.y - center.y) - half.y;
    double dz = std::fabs(p.z - center.z) - half.z;
    return std::max(dx, std::max(dy, dz));
  }
};

// Procedural canonical shape living inside the unit container [0,1]^3.
// Deterministic in (family, seed): params are drawn once from a seeded stream.
struct CanonicalShape {
  ShapeFamily family = ShapeFamily::BoxUnion;
  std::vector<double> params;
  uint64_t seed = 0;

  // -- family views ----------------------------------------------------------
  std::vector<AxisBox> boxes() const {
    std::vector<AxisBox> out;
    int n = int(params[0]);
    for (int i = 0; i < n; ++i) {
      const double* q = &params[1 + size_t(i) * 6];
      out.push_back({{q[0], q[1], q[2]}, {q[3], q[4], q[5]}});
    }
    return out;
  }

  // superellipsoid params: [ax, ay, az, exponent]
  // swept params: [z0, z1, base, amp, freq, phase]

  // Signed inside/outside value; negative strictly inside, continuous.
  double sign_value(const Vec3& p) const {
    switch (family) {
      case ShapeFamily::BoxUnion: {
        double s = 1e30;
        int n = int(params[0]);
        for (int i = 0; i < n; ++i) {
          const double* q = &params[1 + size_t(i) * 6];
          double dx = std::fabs(p.x - q[0]) - q[3];
          double dy = std::fabs(p.y - q[1]) - q[4];
          double dz = std::fabs(p.z - q[2]) - q[5];
          s = std::min(s, std::max(dx, std::max(dy, dz)));
        }
        return s;
      }
      case ShapeFamily::Superellipsoid: {
        double m = params[3];
        double v = std::pow(std::fabs((p.x - 0.5) / params[0]), m) +
                   std::pow(std::fabs((p.y - 0.5) / params[1]), m) +
                   std::pow(std::fabs((p.z - 0.5) / params[2]), m);
        return v - 1.0;
      }
      case ShapeFamily::SweptProfile: {
        double rho = std::sqrt((p.x - 0.5) * (p.x - 0.5) + (p.y - 0.5) * (p.y - 0.5));
        return std::max({params[0] - p.z, p.z - params[1], rho - profile_radius(p.z)});
      }
    }
    return 1e30;
  }

  bool inside(const Vec3& p) const { return sign_value(p) < 0.0; }

  double profile_radius(double z) const {
    double z0 = params[0], z1 = params[1];
    double u = (z - z0) / (z1 - z0);
    return params[2] + params[3] * std::sin(2.0 * 3.141592653589793 * params[4] * u + params[5]);
  }

  // Procedural color field over the container, rgb in [0,1].
  Vec3 texture(const Vec3& p) const {
    Vec3 rgb;
    uint64_t s = seed ^ 0xA5A5A5A5DEADBEEFull;
    for (int ch = 0; ch < 3; ++ch) {
      double kx = 0.5 + 2.5 * (double(splitmix64(s) >> 11) * 0x1.0p-53);
      double ky = 0.5 + 2.5 * (double(splitmix64(s) >> 11) * 0x1.0p-53);
      double kz = 0.5 + 2.5 * (double(splitmix64(s) >> 11) * 0x1.0p-53);
      double ph = 6.283185307179586 * (double(splitmix64(s) >> 11) * 0x1.0p-53);
      double v = 0.5 + 0.5 * std::sin(6.283185307179586 * (kx * p.x + ky * p.y + kz * p.z) + ph);
      if (ch == 0) rgb.x = v;
      else if (ch == 1) rgb.y = v;
      else rgb.z = v;
    }
    return rgb;
  }

  // Loose axis-aligned bound used to clip rays.
  void bounds(Vec3& lo, Vec3& hi) const {
    lo = {1, 1, 1};
    hi = {0, 0, 0};
    auto grow = [&](const Vec3& a, const Vec3& b) {
      lo = {std::min(lo.x, a.x), std::min(lo.y, a.y), std::min(lo.z, a.z)};
      hi = {std::max(hi.x, b.x), std::max(hi.y, b.y), std::max(hi.z, b.z)};
    };
    switch (family) {
      case ShapeFamily::BoxUnion:
        for (const auto& b : boxes()) grow(b.center - b.half, b.center + b.half);
        break;
      case ShapeFamily::Superellipsoid:
        grow({0.5 - params[0], 0.5 - params[1], 0.5 - params[2]},
             {0.5 + params[0], 0.5 + params[1], 0.5 + params[2]});
        break;
      case ShapeFamily::SweptProfile: {
        double rmax = params[2] + std::fabs(params[3]);
        grow({0.5 - rmax, 0.5 - rmax, params[0]}, {0.5 + rmax, 0.5 + rmax, params[1]});
        break;
      }
    }
  }
};

// Deterministic procedural generator. The box-union family is biased toward
// frame-plus-backplate composites: they carry a see-through hole whose
// front-to-back jump concentrates the discontinuity statistics.
inline CanonicalShape generate_shape(ShapeFamily family, uint64_t seed) {
  CanonicalShape shape;
  shape.family = family;
  shape.seed = seed;
  Rng rng(derive_seed(seed, uint64_t(family) + 17));

  switch (family) {
    case ShapeFamily::BoxUnion: {
      std::vector<AxisBox> boxes;
      if (rng.uniform() < 0.7) {
        // Window: rectangular frame of four bars plus a plate behind it.
        int axis = rng.uniform_int(0, 2);  // depth axis
        int u = (axis + 1) % 3, v = (axis + 2) % 3;
        double cu = rng.uniform(0.46, 0.54), cv = rng.uniform(0.46, 0.54);
        double ou = rng.uniform(0.20, 0.28), ov = rng.uniform(0.20, 0.28);
        double bar = rng.uniform(0.06, 0.10);
        double bar_depth = rng.uniform(0.045, 0.075);
        double gap = rng.uniform(0.20, 0.32);
        double front = rng.uniform(0.60, 0.72);
        double plate_half = rng.uniform(0.03, 0.05);

        auto make = [&](double pu, double pv, double hu, double hv, double pa, double ha) {
          Vec3 c, h;
          double cc[3], hh[3];
          cc[axis] = pa; cc[u] = pu; cc[v] = pv;
          hh[axis] = ha; hh[u] = hu; hh[v] = hv;
          c = {cc[0], cc[1], cc[2]};
          h = {hh[0], hh[1], hh[2]};
          return AxisBox{c, h};
        };
        // four bars of the frame
        boxes.push_back(make(cu, cv + ov, ou + bar, bar, front, bar_depth));
        boxes.push_back(make(cu, cv - ov, ou + bar, bar, front, bar_depth));
        boxes.push_back(make(cu - ou, cv, bar, ov - bar, front, bar_depth));
        boxes.push_back(make(cu + ou, cv, bar, ov - bar, front, bar_depth));
        // backplate
        boxes.push_back(make(cu, cv, ou + 1.5 * bar, ov + 1.5 * bar, front - gap, plate_half));
      } else {
        int n = rng.uniform_int(2, 4);
        for (int i = 0; i < n; ++i) {
          Vec3 h{rng.uniform(0.06, 0.22), rng.uniform(0.06, 0.22), rng.uniform(0.06, 0.22)};
          Vec3 c{rng.uniform(0.05 + h.x, 0.95 - h.x), rng.uniform(0.05 + h.y, 0.95 - h.y),
                 rng.uniform(0.05 + h.z, 0.95 - h.z)};
          boxes.push_back({c, h});
        }
      }
      shape.params.push_back(double(boxes.size()));
      for (const auto& b : boxes) {
        // clamp into the container
        Vec3 c = b.center, h = b.half;
        for (int d = 0; d < 3; ++d) {
          double lo = (d == 0 ? c.x - h.x : d == 1 ? c.y - h.y : c.z - h.z);
          double hi = (d == 0 ? c.x + h.x : d == 1 ? c.y + h.y : c.z + h.z);
          if (lo < 0.02 || hi > 0.98) {
            double cc = std::min(0.98 - (hi - lo) / 2, std::max(0.02 + (hi - lo) / 2, (lo + hi) / 2));
            if (d == 0) c.x = cc;
            else if (d == 1) c.y = cc;
            else c.z = cc;
          }
        }
        shape.params.insert(shape.params.end(), {c.x, c.y, c.z, h.x, h.y, h.z});
      }
      break;
    }
    case ShapeFamily::Superellipsoid: {
      shape.params = {rng.uniform(0.18, 0.42), rng.uniform(0.18, 0.42), rng.uniform(0.18, 0.42),
                      rng.uniform(1.6, 5.0)};
      break;
    }
    case ShapeFamily::SweptProfile: {
      double z0 = rng.uniform(0.1, 0.25);
      double z1 = rng.uniform(0.72, 0.9);
      double base = rng.uniform(0.14, 0.3);
      double amp = rng.uniform(0.04, std::min(base - 0.06, 0.43 - base));
      double freq = double(rng.uniform_int(1, 3));
      double phase = rng.uniform(0.0, 6.283185307179586);
      shape.params = {z0, z1, base, amp, freq, phase};
      break;
    }
  }
  return shape;
}

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
};

// Fine triangulation of the analytic boundary. Box faces are exact; curved
// families use parameter grids with chord error well below raster tolerance.
inline TriMesh tessellate_shape(const CanonicalShape& shape, int res = 192) {
  TriMesh mesh;
  auto quad = [&](Vec3 a, Vec3 b, Vec3 c, Vec3 d) {
    int base = int(mesh.vertices.size());
    mesh.vertices.insert(mesh.vertices.end(), {a, b, c, d});
    mesh.triangles.push_back({base, base + 1, base + 2});
    mesh.triangles.push_back({base, base + 2, base + 3});
  };

  switch (shape.family) {
    case ShapeFamily::BoxUnion: {
      const int n = std::max(2, res / 16);
      for (const auto& box : shape.boxes()) {
        double c[3] = {box.center.x, box.center.y, box.center.z};
        double h[3] = {box.half.x, box.half.y, box.half.z};
        for (int axis = 0; axis < 3; ++axis) {
          int u = (axis + 1) % 3, v = (axis + 2) % 3;
          for (int side = -1; side <= 1; side += 2) {
            for (int i = 0; i < n; ++i) {
              for (int j = 0; j < n; ++j) {
                auto corner = [&](int di, int dj) {
                  double p[3];
                  p[axis] = c[axis] + side * h[axis];
                  p[u] = c[u] - h[u] + 2 * h[u] * double(i + di) / n;
                  p[v] = c[v] - h[v] + 2 * h[v] * double(j + dj) / n;
                  return Vec3{p[0], p[1], p[2]};
                };
                quad(corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1));
              }
            }
          }
        }
      }
      break;
    }
    case ShapeFamily::Superellipsoid: {
      const int nth = res, nph = std::max(8, res / 2);
      double m = shape.params[3];
      auto at = [&](int it, int ip) {
        double th = 6.283185307179586 * it / nth;
        double ph = 3.141592653589793 * (double(ip) / nph) - 1.5707963267948966;
        Vec3 w{std::cos(ph) * std::cos(th), std::cos(ph) * std::sin(th), std::sin(ph)};
        double denom = std::pow(std::fabs(w.x / shape.params[0]), m) +
                       std::pow(std::fabs(w.y / shape.params[1]), m) +
                       std::pow(std::fabs(w.z / shape.params[2]), m);
        double s = std::pow(denom, -1.0 / m);
        return Vec3{0.5 + w.x * s, 0.5 + w.y * s, 0.5 + w.z * s};
      };
      for (int it = 0; it < nth; ++it)
        for (int ip = 0; ip < nph; ++ip)
          quad(at(it, ip), at(it + 1, ip), at(it + 1, ip + 1), at(it, ip + 1));
      break;
    }
    case ShapeFamily::SweptProfile: {
      const int nth = res, nz = std::max(16, res / 2);
      double z0 = shape.params[0], z1 = shape.params[1];
      auto lateral = [&](int it, int iz) {
        double th = 6.283185307179586 * it / nth;
        double z = z0 + (z1 - z0) * double(iz) / nz;
        double r = shape.profile_radius(z);
        return Vec3{0.5 + r * std::cos(th), 0.5 + r * std::sin(th), z};
      };
      for (int it = 0; it < nth; ++it)
        for (int iz = 0; iz < nz; ++iz)
          quad(lateral(it, iz), lateral(it + 1, iz), lateral(it + 1, iz + 1), lateral(it, iz + 1));
      for (int cap = 0; cap < 2; ++cap) {
        double z = cap ? z1 : z0;
        double r = shape.profile_radius(z);
        int center = int(mesh.vertices.size());
        mesh.vertices.push_back({0.5, 0.5, z});
        int ring = int(mesh.vertices.size());
        for (int it = 0; it < nth; ++it) {
          double th = 6.283185307179586 * it / nth;
          mesh.vertices.push_back({0.5 + r * std::cos(th), 0.5 + r * std::sin(th), z});
        }
        for (int it = 0; it < nth; ++it)
          mesh.triangles.push_back({center, ring + it, ring + (it + 1) % nth});
      }
      break;
    }
  }
  return mesh;
}

// Deterministic surface point sampler; density is approximate but covers the
// whole boundary. Used for splat-based map conversion and GT clouds.
inline std::vector<Vec3> sample_surface(const CanonicalShape& shape, int n, uint64_t seed) {
  std::vector<Vec3> pts;
  pts.reserve(size_t(n));
  Rng rng(derive_seed(seed, 0x5a17));

  switch (shape.family) {
    case ShapeFamily::BoxUnion: {
      auto bxs = shape.boxes();
      // face list with areas
      struct Face { int box, axis, side; double area; };
      std::vector<Face> faces;
      double total = 0;
      for (int bi = 0; bi < int(bxs.size()); ++bi) {
        const auto& b = bxs[size_t(bi)];
        double hs[3] = {b.half.x, b.half.y, b.half.z};
        for (int axis = 0; axis < 3; ++axis) {
          double area = 4.0 * hs[(axis + 1) % 3] * hs[(axis + 2) % 3];
          for (int side = -1; side <= 1; side += 2) {
            faces.push_back({bi, axis, side, area});
            total += area;
          }
        }
      }
      int guard = 0;
      while (int(pts.size()) < n && guard < n * 50) {
        ++guard;
        double pick = rng.uniform() * total;
        size_t fi = 0;
        for (; fi + 1 < faces.size(); ++fi) {
          if (pick < faces[fi].area) break;
          pick -= faces[fi].area;
        }
        const Face& f = faces[fi];
        const auto& b = bxs[size_t(f.box)];
        double c[3] = {b.center.x, b.center.y, b.center.z};
        double h[3] = {b.half.x, b.half.y, b.half.z};
        double p[3];
        p[f.axis] = c[f.axis] + f.side * h[f.axis];
        int u = (f.axis + 1) % 3, v = (f.axis + 2) % 3;
        p[u] = c[u] + h[u] * rng.uniform(-1.0, 1.0);
        p[v] = c[v] + h[v] * rng.uniform(-1.0, 1.0);
        Vec3 q{p[0], p[1], p[2]};
        // reject points swallowed by another box's interior
        bool covered = false;
        for (int bj = 0; bj < int(bxs.size()) && !covered; ++bj)
          if (bj != f.box && bxs[size_t(bj)].sign(q) < -1e-9) covered = true;
        if (!covered) pts.push_back(q);
      }
      break;
    }
    case ShapeFamily::Superellipsoid: {
      double m = shape.params[3];
      for (int i = 0; i < n; ++i) {
        // radial projection of a uniform sphere direction; exact for this implicit
        double z = rng.uniform(-1.0, 1.0);
        double t = rng.uniform(0.0, 6.283185307179586);
        double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        Vec3 w{r * std::cos(t), r * std::sin(t), z};
        double denom = std::pow(std::fabs(w.x / shape.params[0]), m) +
                       std::pow(std::fabs(w.y / shape.params[1]), m) +
                       std::pow(std::fabs(w.z / shape.params[2]), m);
        double s = std::pow(denom, -1.0 / m);
        pts.push_back({0.5 + w.x * s, 0.5 + w.y * s, 0.5 + w.z * s});
      }
      break;
    }
    case ShapeFamily::SweptProfile: {
      double z0 = shape.params[0], z1 = shape.params[1];
      double rmean = shape.params[2];
      double lateral = 6.283185307179586 * rmean * (z1 - z0);
      double r0 = shape.profile_radius(z0), r1 = shape.profile_radius(z1);
      double caps = 3.141592653589793 * (r0 * r0 + r1 * r1);
      for (int i = 0; i < n; ++i) {
        double th = rng.uniform(0.0, 6.283185307179586);
        if (rng.uniform() * (lateral + caps) < lateral) {
          double z = rng.uniform(z0, z1);
          double r = shape.profile_radius(z);
          pts.push_back({0.5 + r * std::cos(th), 0.5 + r * std::sin(th), z});
        } else {
          bool top = rng.uniform() * (r0 * r0 + r1 * r1) >= r0 * r0;
          double rr = (top ? r1 : r0) * std::sqrt(rng.uniform());
          pts.push_back({0.5 + rr * std::cos(th), 0.5 + rr * std::sin(th), top ? z1 : z0});
        }
      }
      break;
    }
  }
  return pts;
}

}  // namespace pix2surf
