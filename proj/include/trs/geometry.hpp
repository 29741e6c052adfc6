#pragma once

#include <optional>

#include "trs/common.hpp"

namespace trs {

// World convention: object centered at the origin inside the bounding sphere,
// right-handed axes, +y up. Cameras look down their local -z axis.

// Pinhole camera with square pixels and the principal point at the image
// center. `rotation` columns are the camera's right/up/back axes in world
// space; `translation` is the camera position.
struct Camera {
  Mat3 rotation;      // camera-to-world
  Vec3 translation;   // camera position, world units
  Real fov_y = 0;     // vertical field of view, radians
  int width = 0, height = 0;

  Vec3 forward() const { return -Vec3{rotation(0, 2), rotation(1, 2), rotation(2, 2)}; }

  void validate() const {
    if (!(fov_y > 0 && fov_y < kPi)) throw std::invalid_argument("camera: fov_y out of (0, pi)");
    if (width < 1 || height < 1) throw std::invalid_argument("camera: non-positive resolution");
    Mat3 rtr = rotation.transposed() * rotation;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (std::abs(rtr(i, j) - (i == j ? 1.0 : 0.0)) > 1e-6)
          throw std::invalid_argument("camera: rotation not orthonormal");
    if (det(rotation) < 0) throw std::invalid_argument("camera: rotation is a reflection");
  }
};

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit length
  Real t_near = 0;
  Real t_far = std::numeric_limits<Real>::infinity();

  Vec3 at(Real t) const { return origin + direction * t; }
};

// Sphere centered at the world origin; its interior is the rendering
// integration domain.
struct BoundingSphere {
  Real radius = 0.87;
};

inline Camera look_at_camera(const Vec3& eye, const Vec3& target, const Vec3& up,
                             Real fov_y, int width, int height) {
  Vec3 fwd = target - eye;
  if (norm(fwd) == 0) throw std::invalid_argument("look_at: eye equals target");
  fwd = normalized(fwd);
  Vec3 right = cross(fwd, up);
  if (norm(right) < 1e-12) throw std::invalid_argument("look_at: up parallel to view direction");
  right = normalized(right);
  Vec3 true_up = cross(right, fwd);
  Camera cam;
  cam.rotation = Mat3::from_columns(right, true_up, -fwd);
  cam.translation = eye;
  cam.fov_y = fov_y;
  cam.width = width;
  cam.height = height;
  cam.validate();
  return cam;
}

// World-space ray through pixel (px, py), offset by `jitter` from the pixel's
// top-left corner; (0.5, 0.5) is the pixel center. Pixel (0,0) is top-left.
inline Ray ray_through_pixel(const Camera& cam, int px, int py,
                             std::optional<std::pair<Real, Real>> jitter = {}) {
  if (px < 0 || py < 0 || px >= cam.width || py >= cam.height)
    throw std::invalid_argument("ray_through_pixel: pixel out of bounds");
  Real ox = jitter ? jitter->first : 0.5;
  Real oy = jitter ? jitter->second : 0.5;
  Real tan_half = std::tan(cam.fov_y / 2);
  Real aspect = Real(cam.width) / Real(cam.height);
  // NDC in [-1, 1], +y up in camera space.
  Real ndc_x = (2 * (px + ox) / cam.width - 1) * tan_half * aspect;
  Real ndc_y = (1 - 2 * (py + oy) / cam.height) * tan_half;
  Vec3 dir_cam{ndc_x, ndc_y, -1};
  Ray ray;
  ray.origin = cam.translation;
  ray.direction = normalized(cam.rotation * dir_cam);
  return ray;
}

// Intersects the ray with the sphere and returns it with [t_near, t_far]
// clipped to the non-negative part of the intersection interval. Empty
// optional on a miss.
inline std::optional<Ray> clip_to_sphere(const Ray& ray, const BoundingSphere& sphere) {
  // |o + t d|^2 = r^2 with |d| = 1.
  Real b = dot(ray.origin, ray.direction);
  Real c = dot(ray.origin, ray.origin) - sphere.radius * sphere.radius;
  Real disc = b * b - c;
  if (disc <= 0) return std::nullopt;
  Real sq = std::sqrt(disc);
  Real t0 = -b - sq, t1 = -b + sq;
  if (t1 <= 0) return std::nullopt;
  Ray out = ray;
  out.t_near = std::max<Real>(t0, 0);
  out.t_far = t1;
  return out;
}

}  // namespace trs
