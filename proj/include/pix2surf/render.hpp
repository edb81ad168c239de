#pragma once

#include <string>
#include <vector>

#include "pix2surf/geometry.hpp"
#include "pix2surf/image.hpp"
#include "pix2surf/shapes.hpp"

namespace pix2surf {

// One observation of a shape: RGB + visible/hidden NOCS maps + mask + camera.
struct ViewSample {
  ImageF rgb;
  NocsMap nocs_visible;
  NocsMap nocs_hidden;
  std::vector<uint8_t> mask;  // h*w, 1 = foreground
  Camera camera;
  std::string shape_id;
  std::string view_id;
  std::string family;
};

namespace detail {

// All sign-change roots of shape.sign_value along p(t) = o + t*d, t in [t0,t1].
// Uniform bracketing plus bisection; deterministic.
inline std::vector<double> ray_roots(const CanonicalShape& shape, const Vec3& o, const Vec3& d,
                                     double t0, double t1, int steps = 384) {
  std::vector<double> roots;
  if (!(t1 > t0)) return roots;
  double dt = (t1 - t0) / steps;
  double prev_t = t0;
  double prev_v = shape.sign_value(o + d * prev_t);
  for (int i = 1; i <= steps; ++i) {
    double t = t0 + dt * i;
    double v = shape.sign_value(o + d * t);
    if ((prev_v < 0.0) != (v < 0.0)) {
      double a = prev_t, b = t, fa = prev_v;
      for (int it = 0; it < 60; ++it) {
        double mid = 0.5 * (a + b);
        double fm = shape.sign_value(o + d * mid);
        if ((fa < 0.0) != (fm < 0.0)) b = mid;
        else { a = mid; fa = fm; }
      }
      roots.push_back(0.5 * (a + b));
    }
    prev_t = t;
    prev_v = v;
  }
  return roots;
}

inline bool ray_box(const Vec3& o, const Vec3& d, const Vec3& lo, const Vec3& hi,
                    double& t0, double& t1) {
  t0 = 0.0;
  t1 = 1e30;
  for (int a = 0; a < 3; ++a) {
    double ov = o[a], dv = d[a], l = lo[a], h = hi[a];
    if (std::fabs(dv) < 1e-15) {
      if (ov < l || ov > h) return false;
    } else {
      double ta = (l - ov) / dv, tb = (h - ov) / dv;
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
      if (t0 > t1) return false;
    }
  }
  return true;
}

inline Vec3 clamp01(const Vec3& p) {
  return {std::min(1.0, std::max(0.0, p.x)), std::min(1.0, std::max(0.0, p.y)),
          std::min(1.0, std::max(0.0, p.z))};
}

}  // namespace detail

// Ray-casts the shape: the first hit fills nocs_visible, the last hit fills
// nocs_hidden. Background is white unless noise_background is set.
inline ViewSample render_view(const CanonicalShape& shape, const Camera& camera,
                              bool noise_background = false, uint64_t noise_seed = 0) {
  camera.validate();
  if (shape.inside(camera.position)) throw RenderError("camera lies inside the shape");

  const int h = camera.height, w = camera.width;
  ViewSample vs;
  vs.camera = camera;
  vs.rgb = ImageF(h, w, 3, 1.0);
  vs.nocs_visible = NocsMap(h, w);
  vs.nocs_hidden = NocsMap(h, w);
  vs.mask.assign(size_t(h) * w, 0);
  vs.family = family_name(shape.family);

  Vec3 blo, bhi;
  shape.bounds(blo, bhi);
  const Vec3 pad{0.01, 0.01, 0.01};
  blo = blo - pad;
  bhi = bhi + pad;

  Rng noise(derive_seed(noise_seed, 0xb6));
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (noise_background) {
        vs.rgb.at(r, c, 0) = noise.uniform();
        vs.rgb.at(r, c, 1) = noise.uniform();
        vs.rgb.at(r, c, 2) = noise.uniform();
      }
      Vec3 dir = camera.ray_dir(r, c);
      double t0, t1;
      if (!detail::ray_box(camera.position, dir, blo, bhi, t0, t1)) continue;
      auto roots = detail::ray_roots(shape, camera.position, dir, t0, t1);
      if (roots.empty()) continue;
      Vec3 pv = detail::clamp01(camera.position + dir * roots.front());
      Vec3 ph = detail::clamp01(camera.position + dir * roots.back());
      vs.mask[size_t(r) * w + c] = 1;
      vs.nocs_visible.set_valid(r, c, true);
      vs.nocs_hidden.set_valid(r, c, true);
      for (int k = 0; k < 3; ++k) {
        vs.nocs_visible.at(r, c, k) = pv[k];
        vs.nocs_hidden.at(r, c, k) = ph[k];
      }
      Vec3 col = shape.texture(pv);
      vs.rgb.at(r, c, 0) = col.x;
      vs.rgb.at(r, c, 1) = col.y;
      vs.rgb.at(r, c, 2) = col.z;
    }
  }
  vs.nocs_visible.valid = vs.mask;
  vs.nocs_hidden.valid = vs.mask;
  return vs;
}

// Uniform direction on the sphere, radius in [1.5, 2.5] around the container
// center, looking at the center.
inline Camera sample_camera(Rng& rng, int height, int width) {
  Camera cam;
  double z = rng.uniform(-1.0, 1.0);
  double th = rng.uniform(0.0, 6.283185307179586);
  double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  Vec3 dir{r * std::cos(th), r * std::sin(th), z};
  double radius = rng.uniform(1.5, 2.5);
  cam.position = Vec3{0.5, 0.5, 0.5} + dir * radius;
  cam.look_at = {0.5, 0.5, 0.5};
  cam.up = std::fabs(dir.z) > 0.99 ? Vec3{0, 1, 0} : Vec3{0, 0, 1};
  cam.fov = 0.6;
  cam.height = height;
  cam.width = width;
  return cam;
}

inline double foreground_coverage(const ViewSample& vs) {
  double n = 0;
  for (uint8_t m : vs.mask) n += m;
  return n / double(vs.mask.size());
}

}  // namespace pix2surf
