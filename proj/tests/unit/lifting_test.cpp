#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "raap/lifting.hpp"

namespace raap {
namespace {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

const Intrinsics<double> kCam{100.0, 100.0, 50.0, 50.0};

/// Depth of the plane n . p = c seen through every pixel.
DepthMap<double> plane_depth(const Vec3& n, double c, int w, int h, const Intrinsics<double>& cam) {
  DepthMap<double> d;
  d.depth.resize(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Vec3 ray((x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0);
      d.depth(y, x) = c / n.dot(ray);
    }
  }
  return d;
}

Vec3 ray_plane(const Vec2& px, const Vec3& n, double c, const Intrinsics<double>& cam) {
  const Vec3 ray((px.x() - cam.cx) / cam.fx, (px.y() - cam.cy) / cam.fy, 1.0);
  return ray * (c / n.dot(ray));
}

TEST(Backproject, HandExampleAndRoundTrip) {
  const Vec3 p = backproject<double>(Vec2(150, 50), 2.0, kCam);
  EXPECT_TRUE(p.isApprox(Vec3(2, 0, 2)));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 100), z(0.1, 10);
  for (int i = 0; i < 200; ++i) {
    const Vec2 px(u(rng), u(rng));
    const double depth = z(rng);
    const Vec3 q = backproject<double>(px, depth, kCam);
    EXPECT_NEAR(q.z(), depth, 1e-12);
    EXPECT_TRUE(project<double>(q, kCam).isApprox(px, 1e-12));
  }
  EXPECT_THROW(backproject<double>(Vec2(0, 0), 0.0, kCam), ContractError);
  EXPECT_THROW(backproject<double>(Vec2(0, 0), 1.0, Intrinsics<double>{0, 1, 0, 0}), ContractError);
}

TEST(LiftContact, MatchesBruteForceSearch) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    DepthMap<double> d;
    d.depth.resize(20, 24);
    for (int y = 0; y < 20; ++y) {
      for (int x = 0; x < 24; ++x) {
        const double r = u(rng);
        // Coarse depths make ties on distance common.
        d.depth(y, x) = r < 0.5 ? std::numeric_limits<double>::quiet_NaN() : (r < 0.6 ? -1.0 : std::round(u(rng) * 4) + 1);
      }
    }
    const Vec2 c(std::round(u(rng) * 26 - 1), std::round(u(rng) * 22 - 1));
    // Oracle: every pixel, filtered by the Chebyshev window.
    double best_d = std::numeric_limits<double>::infinity(), best_z = 0;
    Eigen::Vector2i best(-1, -1);
    for (int y = 0; y < 20; ++y) {
      for (int x = 0; x < 24; ++x) {
        const double z = d.depth(y, x);
        if (!(z > 0) || std::abs(x - c.x()) > 5 || std::abs(y - c.y()) > 5) continue;
        const double dist = std::hypot(x - c.x(), y - c.y());
        if (dist < best_d || (dist == best_d && z < best_z)) {
          best_d = dist;
          best_z = z;
          best = {x, y};
        }
      }
    }
    if (best.x() < 0) {
      EXPECT_THROW(lift_contact<double>(c, d, kCam), NoSurfaceError);
      continue;
    }
    const SurfacePoint<double> s = lift_contact<double>(c, d, kCam);
    EXPECT_EQ(s.pixel, best);
    EXPECT_TRUE(s.point.isApprox(backproject<double>(best.cast<double>(), best_z, kCam)));
  }
}

TEST(LiftContact, NoValidDepth) {
  DepthMap<double> d;
  d.depth = RowMatrix<double>::Constant(10, 10, std::numeric_limits<double>::quiet_NaN());
  d.depth(0, 0) = 1.0;
  EXPECT_THROW(lift_contact<double>(Vec2(8, 8), d, kCam), NoSurfaceError);
  EXPECT_NO_THROW(lift_contact<double>(Vec2(5, 5), d, kCam));
  EXPECT_THROW(lift_contact<double>(Vec2(5, 5), d, kCam, -1.0), ContractError);
}

TEST(LiftDirection, FrontoParallelPlane) {
  const DepthMap<double> d = plane_depth(Vec3(0, 0, 1), 2.0, 100, 100, kCam);
  const auto a = lift_affordance<double>(Vec2(40, 60), Vec2(1, 0), d, kCam);
  EXPECT_TRUE(a.direction.isApprox(Vec3(1, 0, 0), 1e-12));
  EXPECT_TRUE(a.contact.isApprox(Vec3(-0.2, 0.2, 2.0), 1e-12));
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> ang(0, 2 * std::numbers::pi);
  for (int i = 0; i < 50; ++i) {
    const double t = ang(rng);
    const Vec2 dir(std::cos(t), std::sin(t));
    const Vec3 lifted = lift_affordance<double>(Vec2(50, 50), dir, d, kCam).direction;
    EXPECT_TRUE(lifted.isApprox(Vec3(dir.x(), dir.y(), 0), 1e-12));
    EXPECT_TRUE(lift_affordance<double>(Vec2(50, 50), Vec2(-dir), d, kCam).direction.isApprox(-lifted, 1e-12));
  }
}

TEST(LiftDirection, TiltedPlaneMatchesRayPlaneOracle) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 50; ++i) {
    const Vec3 n = Vec3(0.4 * u(rng), 0.4 * u(rng), 1.0).normalized();
    const double c = 1.5 + 0.5 * u(rng);
    const DepthMap<double> d = plane_depth(n, c, 100, 100, kCam);
    const Vec2 contact(std::round(50 + 20 * u(rng)), std::round(50 + 20 * u(rng)));
    const Vec2 dir = Vec2(u(rng), u(rng)).normalized();
    const auto a = lift_affordance<double>(contact, dir, d, kCam);
    const Vec3 expected = (ray_plane(contact + 10.0 * dir, n, c, kCam) - ray_plane(contact, n, c, kCam)).normalized();
    EXPECT_TRUE(a.direction.isApprox(expected, 1e-8));
    EXPECT_NEAR(a.direction.dot(n), 0.0, 1e-8);
    EXPECT_NEAR(a.direction.norm(), 1.0, 1e-12);
    EXPECT_TRUE(lift_affordance<double>(contact, Vec2(-dir), d, kCam).direction.isApprox(-a.direction, 1e-12));

    // Uniform depth scaling moves the surface but keeps its orientation.
    DepthMap<double> scaled = d;
    scaled.depth *= 3.0;
    const auto b = lift_affordance<double>(contact, dir, scaled, kCam);
    EXPECT_TRUE(b.direction.isApprox(a.direction, 1e-8));
    EXPECT_TRUE(b.contact.isApprox(3.0 * a.contact, 1e-12));
  }
}

TEST(LiftDirection, DegenerateFitFallsBackToFrontoParallel) {
  DepthMap<double> d;
  d.depth = RowMatrix<double>::Constant(100, 100, std::numeric_limits<double>::quiet_NaN());
  d.depth(50, 50) = 2.0;
  const auto a = lift_affordance<double>(Vec2(50, 50), Vec2(0, 1), d, kCam);
  EXPECT_TRUE(a.direction.isApprox(Vec3(0, 1, 0), 1e-12));
}

TEST(LiftDirection, Errors) {
  const DepthMap<double> d = plane_depth(Vec3(0, 0, 1), 2.0, 20, 20, kCam);
  EXPECT_THROW(lift_affordance<double>(Vec2(10, 10), Vec2(0, 0), d, kCam), ContractError);
  EXPECT_THROW(lift_affordance<double>(Vec2(10, 10), Vec2(2, 0), d, kCam), ContractError);
  EXPECT_THROW(intersect_ray<double>(Vec2(50, 50), Plane<double>{Vec3(1, 0, 0), 1.0}, kCam), GeometryError);
  EXPECT_THROW(intersect_ray<double>(Vec2(50, 50), Plane<double>{Vec3(0, 0, 1), -1.0}, kCam), GeometryError);
  EXPECT_THROW(project<double>(Vec3(0, 0, -1), kCam), GeometryError);
}

TEST(Lifting, FloatScalarAgrees) {
  const Intrinsics<float> cam{100.f, 100.f, 50.f, 50.f};
  DepthMap<float> d;
  d.depth = RowMatrix<float>::Constant(100, 100, 2.f);
  const auto a = lift_affordance<float>(Eigen::Vector2f(40, 60), Eigen::Vector2f(0, -1), d, cam);
  EXPECT_TRUE(a.direction.isApprox(Eigen::Vector3f(0, -1, 0), 1e-5f));
}

}  // namespace
}  // namespace raap
