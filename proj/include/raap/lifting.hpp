#pragma once

// Pinhole lifting of 2D affordances into the camera frame.
//
// Pixel coordinates follow the image convention used everywhere else: origin
// at the top-left pixel center, u (x) to the right, v (y) downward. Camera
// frame: X right, Y down, Z forward.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "raap/errors.hpp"
#include "raap/kernels.hpp"

namespace raap {

template <typename Scalar>
struct Intrinsics {
  Scalar fx = 1;
  Scalar fy = 1;
  Scalar cx = 0;
  Scalar cy = 0;

  void validate() const {
    if (!(fx > Scalar(0)) || !(fy > Scalar(0))) {
      throw ContractError("intrinsics: focal lengths must be positive");
    }
  }
};

/// Metric depth per pixel; a pixel is valid when its depth is finite and positive.
template <typename Scalar>
struct DepthMap {
  RowMatrix<Scalar> depth;  // H x W

  int height() const { return static_cast<int>(depth.rows()); }
  int width() const { return static_cast<int>(depth.cols()); }

  bool valid(int x, int y) const {
    if (x < 0 || y < 0 || x >= width() || y >= height()) {
      return false;
    }
    const Scalar z = depth(y, x);
    return std::isfinite(z) && z > Scalar(0);
  }
};

template <typename Scalar>
struct Affordance3D {
  Eigen::Matrix<Scalar, 3, 1> contact;
  Eigen::Matrix<Scalar, 3, 1> direction;
};

/// Plane {p : normal . p = offset} with unit normal.
template <typename Scalar>
struct Plane {
  Eigen::Matrix<Scalar, 3, 1> normal;
  Scalar offset;
};

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> backproject(const Eigen::Matrix<Scalar, 2, 1>& pixel, Scalar z,
                                        const Intrinsics<Scalar>& intr) {
  if (!(z > Scalar(0))) {
    throw ContractError("backproject: depth must be positive");
  }
  intr.validate();
  return {(pixel.x() - intr.cx) * z / intr.fx, (pixel.y() - intr.cy) * z / intr.fy, z};
}

template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> project(const Eigen::Matrix<Scalar, 3, 1>& point, const Intrinsics<Scalar>& intr) {
  if (!(point.z() > Scalar(0))) {
    throw GeometryError("project: point behind the camera");
  }
  return {intr.fx * point.x() / point.z() + intr.cx, intr.fy * point.y() / point.z() + intr.cy};
}

/// Direction (not normalized, unit z) of the camera ray through `pixel`.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> camera_ray(const Eigen::Matrix<Scalar, 2, 1>& pixel, const Intrinsics<Scalar>& intr) {
  return {(pixel.x() - intr.cx) / intr.fx, (pixel.y() - intr.cy) / intr.fy, Scalar(1)};
}

/// Intersection of the ray through `pixel` with `plane`.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> intersect_ray(const Eigen::Matrix<Scalar, 2, 1>& pixel, const Plane<Scalar>& plane,
                                          const Intrinsics<Scalar>& intr) {
  const Eigen::Matrix<Scalar, 3, 1> ray = camera_ray(pixel, intr);
  const Scalar denom = plane.normal.dot(ray);
  if (std::abs(denom) < Scalar(1e-12) * ray.norm()) {
    throw GeometryError("ray is parallel to the surface plane");
  }
  const Scalar t = plane.offset / denom;
  if (!(t > Scalar(0))) {
    throw GeometryError("surface plane lies behind the camera along the ray");
  }
  return t * ray;
}

namespace detail {

template <typename Scalar>
struct Window {
  int x0, x1, y0, y1;  // inclusive
};

template <typename Scalar>
std::optional<Window<Scalar>> chebyshev_window(const Eigen::Matrix<Scalar, 2, 1>& center, Scalar radius,
                                               int width, int height) {
  const int x0 = std::max(0, static_cast<int>(std::ceil(center.x() - radius)));
  const int x1 = std::min(width - 1, static_cast<int>(std::floor(center.x() + radius)));
  const int y0 = std::max(0, static_cast<int>(std::ceil(center.y() - radius)));
  const int y1 = std::min(height - 1, static_cast<int>(std::floor(center.y() + radius)));
  if (x0 > x1 || y0 > y1) {
    return std::nullopt;
  }
  return Window<Scalar>{x0, x1, y0, y1};
}

}  // namespace detail

/// Pixel chosen by lift_contact together with its camera-frame point.
template <typename Scalar>
struct SurfacePoint {
  Eigen::Vector2i pixel;
  Eigen::Matrix<Scalar, 3, 1> point;
};

/// Closest valid surface point to `contact` among pixels within Chebyshev
/// radius `radius`. Ordering: pixel distance, then depth, then row-major index.
template <typename Scalar>
SurfacePoint<Scalar> lift_contact(const Eigen::Matrix<Scalar, 2, 1>& contact, const DepthMap<Scalar>& depth,
                                  const Intrinsics<Scalar>& intr, Scalar radius = Scalar(5)) {
  if (!(radius >= Scalar(0))) {
    throw ContractError("lift_contact: radius must be non-negative");
  }
  intr.validate();
  const auto window = detail::chebyshev_window(contact, radius, depth.width(), depth.height());
  std::optional<SurfacePoint<Scalar>> best;
  Scalar best_dist = std::numeric_limits<Scalar>::infinity();
  Scalar best_z = std::numeric_limits<Scalar>::infinity();
  if (window) {
    // Row-major scan with strict comparisons keeps the lowest index on full ties.
    for (int y = window->y0; y <= window->y1; ++y) {
      for (int x = window->x0; x <= window->x1; ++x) {
        if (!depth.valid(x, y)) {
          continue;
        }
        const Scalar dist = std::hypot(Scalar(x) - contact.x(), Scalar(y) - contact.y());
        const Scalar z = depth.depth(y, x);
        if (dist < best_dist || (dist == best_dist && z < best_z)) {
          best_dist = dist;
          best_z = z;
          best = SurfacePoint<Scalar>{{x, y}, backproject(Eigen::Matrix<Scalar, 2, 1>(Scalar(x), Scalar(y)), z, intr)};
        }
      }
    }
  }
  if (!best) {
    throw NoSurfaceError("no valid depth within the contact radius");
  }
  return *best;
}

/// Total-least-squares plane through the valid backprojected points in the
/// window around `center`. Returns nullopt for fewer than 3 points or a
/// collinear configuration.
template <typename Scalar>
std::optional<Plane<Scalar>> fit_local_plane(const Eigen::Matrix<Scalar, 2, 1>& center, const DepthMap<Scalar>& depth,
                                             const Intrinsics<Scalar>& intr, Scalar radius) {
  using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
  const auto window = detail::chebyshev_window(center, radius, depth.width(), depth.height());
  if (!window) {
    return std::nullopt;
  }
  std::vector<Vec3> points;
  for (int y = window->y0; y <= window->y1; ++y) {
    for (int x = window->x0; x <= window->x1; ++x) {
      if (depth.valid(x, y)) {
        points.push_back(backproject(Eigen::Matrix<Scalar, 2, 1>(Scalar(x), Scalar(y)), depth.depth(y, x), intr));
      }
    }
  }
  if (points.size() < 3) {
    return std::nullopt;
  }
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : points) {
    centroid += p;
  }
  centroid /= Scalar(points.size());
  Eigen::Matrix<Scalar, 3, 3> cov = Eigen::Matrix<Scalar, 3, 3>::Zero();
  for (const auto& p : points) {
    const Vec3 c = p - centroid;
    cov += c * c.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<Scalar, 3, 3>> solver(cov);
  const auto& ev = solver.eigenvalues();  // ascending
  if (ev(1) <= std::numeric_limits<Scalar>::epsilon() * std::max(ev(2), Scalar(1e-300)) * Scalar(1e3)) {
    return std::nullopt;
  }
  Vec3 normal = solver.eigenvectors().col(0).normalized();
  // Orient toward the camera so offsets are comparable across fits.
  if (normal.dot(centroid) > Scalar(0)) {
    normal = -normal;
  }
  return Plane<Scalar>{normal, normal.dot(centroid)};
}

/// Lifts a unit image direction onto the local surface around the contact.
///
/// The contact pixel and the pixel `step` along `direction` are cast onto the
/// fitted local plane (a fronto-parallel plane through `contact3d` when the
/// fit is degenerate); the result is their normalized difference.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> lift_direction(const Eigen::Matrix<Scalar, 2, 1>& direction,
                                           const Eigen::Matrix<Scalar, 3, 1>& contact3d,
                                           const Eigen::Matrix<Scalar, 2, 1>& contact, const DepthMap<Scalar>& depth,
                                           const Intrinsics<Scalar>& intr, Scalar radius = Scalar(5),
                                           Scalar step = Scalar(10)) {
  const Scalar n = direction.norm();
  if (!(n > Scalar(0))) {
    throw ContractError("lift_direction: zero direction");
  }
  if (std::abs(n - Scalar(1)) > Scalar(1e-6)) {
    throw ContractError("lift_direction: direction must be unit length");
  }
  intr.validate();
  Plane<Scalar> plane = fit_local_plane(contact, depth, intr, radius)
                            .value_or(Plane<Scalar>{Eigen::Matrix<Scalar, 3, 1>(0, 0, -1), -contact3d.z()});
  const Eigen::Matrix<Scalar, 3, 1> start = intersect_ray(contact, plane, intr);
  const Eigen::Matrix<Scalar, 3, 1> end = intersect_ray(Eigen::Matrix<Scalar, 2, 1>(contact + step * direction), plane, intr);
  const Eigen::Matrix<Scalar, 3, 1> delta = end - start;
  const Scalar len = delta.norm();
  if (!(len > Scalar(0))) {
    throw GeometryError("lift_direction: degenerate displacement");
  }
  return delta / len;
}

/// Contact lifting followed by direction lifting.
template <typename Scalar>
Affordance3D<Scalar> lift_affordance(const Eigen::Matrix<Scalar, 2, 1>& contact,
                                     const Eigen::Matrix<Scalar, 2, 1>& direction, const DepthMap<Scalar>& depth,
                                     const Intrinsics<Scalar>& intr, Scalar radius = Scalar(5),
                                     Scalar step = Scalar(10)) {
  const SurfacePoint<Scalar> surface = lift_contact(contact, depth, intr, radius);
  return {surface.point, lift_direction(direction, surface.point, contact, depth, intr, radius, step)};
}

}  // namespace raap
