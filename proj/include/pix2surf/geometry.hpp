#pragma once

#include <cmath>

#include "pix2surf/common.hpp"

namespace pix2surf {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3() = default;
  Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }

  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(const Vec3& a) {
  double n = norm(a);
  if (n == 0) throw ShapeError("cannot normalize zero vector");
  return a / n;
}
inline double dist(const Vec3& a, const Vec3& b) { return norm(a - b); }

// Pinhole camera. fov is the vertical field of view in radians; rows count
// top-down, row 0 maps to the top of the frame.
struct Camera {
  Vec3 position;
  Vec3 look_at;
  Vec3 up{0, 0, 1};
  double fov = 0.6;
  int height = 64;
  int width = 64;

  void validate() const {
    if (dist(position, look_at) < 1e-12) throw ConfigError("camera: look_at equals position");
    if (!(fov > 0 && fov < 3.141592653589793)) throw ConfigError("camera: fov out of (0, pi)");
    Vec3 f = look_at - position;
    if (norm(cross(f, up)) < 1e-9 * norm(f) * norm(up))
      throw ConfigError("camera: up parallel to view direction");
    if (height <= 0 || width <= 0) throw ConfigError("camera: resolution must be positive");
  }

  struct Basis {
    Vec3 forward, right, upv;
  };

  Basis basis() const {
    Vec3 f = normalized(look_at - position);
    Vec3 r = normalized(cross(f, up));
    Vec3 u = cross(r, f);
    return {f, r, u};
  }

  // Ray direction through the center of pixel (row, col), normalized.
  Vec3 ray_dir(double row, double col) const {
    Basis b = basis();
    double t = std::tan(fov * 0.5);
    double aspect = double(width) / double(height);
    double py = 1.0 - 2.0 * (row + 0.5) / double(height);
    double px = 2.0 * (col + 0.5) / double(width) - 1.0;
    Vec3 d = b.forward + b.right * (px * t * aspect) + b.upv * (py * t);
    return normalized(d);
  }

  // Projects a world point to continuous pixel coordinates (row, col) and
  // camera depth. depth <= 0 means the point is behind the camera.
  struct Projection {
    double row, col, depth;
  };

  Projection project(const Vec3& p) const {
    Basis b = basis();
    Vec3 d = p - position;
    double z = dot(d, b.forward);
    double t = std::tan(fov * 0.5);
    double aspect = double(width) / double(height);
    if (z <= 0) return {0, 0, z};
    double px = dot(d, b.right) / (z * t * aspect);
    double py = dot(d, b.upv) / (z * t);
    double col = (px + 1.0) * 0.5 * width - 0.5;
    double row = (1.0 - py) * 0.5 * height - 0.5;
    return {row, col, z};
  }
};

}  // namespace pix2surf
