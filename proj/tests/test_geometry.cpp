#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "omnistereo/geometry.hpp"

using namespace omnistereo;

namespace {

void expect_vec(const Vec3& a, const Vec3& b, double tol = 1e-12) {
  EXPECT_NEAR(a.x(), b.x(), tol);
  EXPECT_NEAR(a.y(), b.y(), tol);
  EXPECT_NEAR(a.z(), b.z(), tol);
}

const PanoramaGeometry kCyl{Projection::Cylindrical, 512, 1024};
const PanoramaGeometry kCas{Projection::Cassini, 512, 1024};

}  // namespace

TEST(Spherical, ForwardExamples) {
  expect_vec(spherical_to_cartesian({1.0, 0.0, 0.0}), {0, 0, 1});
  expect_vec(spherical_to_cartesian({2.0, kPi / 2, 0.0}), {2, 0, 0});
  expect_vec(spherical_to_cartesian({1.0, 0.0, kPi / 2}), {0, 1, 0});
}

TEST(Spherical, InverseExamples) {
  auto s = cartesian_to_spherical({0, 0, 1});
  EXPECT_DOUBLE_EQ(s.rho, 1.0);
  EXPECT_DOUBLE_EQ(s.phi, 0.0);
  EXPECT_DOUBLE_EQ(s.theta, 0.0);

  s = cartesian_to_spherical({1, 0, 0});
  EXPECT_DOUBLE_EQ(s.rho, 1.0);
  EXPECT_DOUBLE_EQ(s.phi, kPi / 2);
  EXPECT_EQ(s.theta, 0.0);  // pole convention

  s = cartesian_to_spherical({0, 1, 1});
  EXPECT_NEAR(s.rho, std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(s.phi, 0.0, 1e-15);
  EXPECT_NEAR(s.theta, kPi / 4, 1e-15);
}

TEST(Spherical, OriginIsDomainError) { EXPECT_THROW(cartesian_to_spherical({0, 0, 0}), DomainError); }

TEST(Cylindrical, Examples) {
  expect_vec(cylindrical_to_cartesian({1.0, 0.0, 0.0}), {0, 0, 1});
  expect_vec(cylindrical_to_cartesian({1.0, kPi / 2, 3.0}), {3, 1, 0});
  expect_vec(cylindrical_to_cartesian({2.0, wrap_angle(kPi), -1.0}), {-1, 0, -2});
  EXPECT_THROW(cartesian_to_cylindrical({2, 0, 0}), DomainError);
}

TEST(Angles, WrapIntoHalfOpenRange) {
  EXPECT_DOUBLE_EQ(wrap_angle(kPi), -kPi);
  EXPECT_DOUBLE_EQ(wrap_angle(-kPi), -kPi);
  EXPECT_NEAR(wrap_angle(3 * kPi + 0.25), -kPi + 0.25, 1e-12);
  EXPECT_NEAR(wrap_angle(-0.5), -0.5, 0.0);
}

TEST(Projection, CylindricalExamples) {
  auto px = project_to_pixel({0, 0, 1}, kCyl);
  EXPECT_DOUBLE_EQ(px.u, 256.0);
  EXPECT_DOUBLE_EQ(px.v, 512.0);
  px = project_to_pixel({1, 0, 1}, kCyl);
  EXPECT_NEAR(px.u, 256.0 - 1024.0 / (2 * kPi), 1e-9);
  EXPECT_NEAR(px.u, 93.0254, 1e-4);
  EXPECT_DOUBLE_EQ(px.v, 512.0);
}

TEST(Projection, CassiniExample) {
  const auto px = project_to_pixel({0, 1, 1}, kCas);
  EXPECT_NEAR(px.u, 256.0, 1e-12);
  EXPECT_NEAR(px.v, 640.0, 1e-12);
}

TEST(Projection, UndefinedCasesThrow) {
  EXPECT_THROW(project_to_pixel({1, 0, 0}, kCyl), DomainError);
  EXPECT_THROW(project_to_pixel({0, 0, 0}, kCas), DomainError);
  EXPECT_THROW(project_to_pixel({0, 0, -1}, PanoramaGeometry{Projection::Perspective, 64, 64}), DomainError);
}

TEST(Unprojection, Examples) {
  expect_vec(unproject_pixel({256, 512}, kCyl), {0, 0, 1});
  expect_vec(unproject_pixel({256, 512}, kCas), {0, 0, 1});
  const Vec3 r = unproject_pixel({256.0 - 1024.0 / (2 * kPi), 512}, kCyl);
  expect_vec(r, Vec3(1, 0, 1).normalized());
  EXPECT_NEAR(r.norm(), 1.0, 1e-15);
}

TEST(Projection, ErpIsTransverseCassini) {
  // ERP: longitude across the width around the vertical axis, latitude down the rows.
  const PanoramaGeometry erp{Projection::ERP, 1024, 512};
  auto px = project_to_pixel({0, 0, 1}, erp);
  EXPECT_NEAR(px.u, 512.0, 1e-12);
  EXPECT_NEAR(px.v, 256.0, 1e-12);
  px = project_to_pixel({1, 0, 1}, erp);  // 45 degrees toward +x
  EXPECT_NEAR(std::abs(px.u - 512.0), 128.0, 1e-9);
  EXPECT_NEAR(px.v, 256.0, 1e-12);
  px = project_to_pixel({0, 1, 0}, erp);  // straight along +y is a pole row
  EXPECT_NEAR(std::min(px.v, 512.0 - px.v), 0.0, 1e-9);
}

TEST(Projection, RoundTripAllProjections) {
  std::mt19937_64 rng(3);
  const PanoramaGeometry geoms[] = {{Projection::Cassini, 256, 512},
                                    {Projection::ERP, 512, 256},
                                    {Projection::Cylindrical, 256, 512},
                                    {Projection::Perspective, 200, 160}};
  for (const auto& g : geoms) {
    std::uniform_real_distribution<double> u(2.0, g.width - 3.0);
    std::uniform_real_distribution<double> v(2.0, g.height - 3.0);
    for (int k = 0; k < 2000; ++k) {
      const PixelCoord px{u(rng), v(rng)};
      const auto back = project_to_pixel(unproject_pixel(px, g) * 3.7, g);
      EXPECT_NEAR(back.u, px.u, 1e-9);
      EXPECT_NEAR(back.v, px.v, 1e-9);
    }
  }
}

TEST(HorizontalFov, Examples) {
  EXPECT_NEAR(horizontal_fov(kCyl), 2.0 * std::atan(kPi / 2), 1e-15);
  EXPECT_NEAR(horizontal_fov(kCyl), 2.007770, 1e-6);
  EXPECT_NEAR(horizontal_fov(kCyl) * 180 / kPi, 115.04, 0.01);
  // W = 2R: H = 2 pi R, so W / H = 1 / pi.
  const PanoramaGeometry square{Projection::Cylindrical, 200, static_cast<int>(std::lround(200 * kPi))};
  EXPECT_NEAR(horizontal_fov(square), kPi / 2, 2e-3);
  EXPECT_NEAR(horizontal_fov({Projection::Cylindrical, 1, 1 << 20}), 0.0, 1e-5);
  EXPECT_THROW(horizontal_fov(kCas), DomainError);
}

TEST(ScaleFactors, Examples) {
  const double R = kCyl.radius();
  auto s = local_scale_factors(kCas, 0.0, 1.0);
  EXPECT_DOUBLE_EQ(s.du_per_dx, R);
  EXPECT_DOUBLE_EQ(s.dv_per_dy, R);
  const auto c0 = local_scale_factors(kCyl, 0.0, 1.0);
  EXPECT_DOUBLE_EQ(c0.du_per_dx, s.du_per_dx);
  s = local_scale_factors(kCas, kPi / 3, 1.0);
  EXPECT_NEAR(s.du_per_dx, 2 * R, 1e-9);
  EXPECT_DOUBLE_EQ(s.dv_per_dy, R);
  for (double theta : {-1.0, 0.3, 2.5}) {
    s = local_scale_factors(kCyl, theta, 2.0);
    EXPECT_DOUBLE_EQ(s.du_per_dx, R / 2);
    EXPECT_DOUBLE_EQ(s.dv_per_dy, R / 2);
  }
  EXPECT_THROW(local_scale_factors(kCas, kPi / 2, 1.0), DomainError);
  EXPECT_THROW(local_scale_factors(kCyl, 0.0, 0.0), DomainError);
}

TEST(ScaleFactors, MatchFiniteDifferenceOfProjection) {
  // Cylinder: moving a point at distance rho by dx along the axis moves u by R dx / rho.
  const double rho = 2.0, dx = 1e-6;
  const auto a = project_to_pixel({0, 0, rho}, kCyl);
  const auto b = project_to_pixel({dx, 0, rho}, kCyl);
  EXPECT_NEAR(std::abs(b.u - a.u) / dx, local_scale_factors(kCyl, 0.0, rho).du_per_dx, 1e-3);
}

TEST(Poses, Examples) {
  const Vec3 p(1, 2, 3);
  expect_vec(transform_point(Pose::identity(), p), p);
  expect_vec(transform_point({Mat3::Identity(), Vec3(1, 0, 0)}, Vec3::Zero()), {1, 0, 0});
  Mat3 rz;  // hand-written 90 degree rotation about z
  rz << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const Pose r{rotation_z(kPi / 2), Vec3::Zero()};
  expect_vec(transform_point(r, {0, 0, 1}), {0, 0, 1});
  expect_vec(transform_point(r, {1, 0, 0}), rz * Vec3(1, 0, 0));
  expect_vec(transform_point(r, {1, 0, 0}), {0, 1, 0});
}

TEST(Poses, ComposeAndInvert) {
  const Pose a{rotation_x(0.3) * rotation_y(-1.1), Vec3(0.5, -2, 1)};
  const Pose b{rotation_z(2.0), Vec3(-1, 0.25, 3)};
  const Vec3 p(0.7, -0.2, 5);
  expect_vec(transform_point(compose_pose(a, b), p), transform_point(a, transform_point(b, p)), 1e-12);
  expect_vec(transform_point(invert_pose(a), transform_point(a, p)), p, 1e-12);
  EXPECT_THROW(check_pose({Mat3::Identity() * 2.0, Vec3::Zero()}), DomainError);
}

TEST(Invariants, RoundTripsRandom) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> d(-10.0, 10.0);
  for (int k = 0; k < 20000; ++k) {
    const Vec3 p(d(rng), d(rng), d(rng));
    expect_vec(spherical_to_cartesian(cartesian_to_spherical(p)), p, 1e-12 * p.norm());
    expect_vec(cylindrical_to_cartesian(cartesian_to_cylindrical(p)), p, 1e-12 * p.norm());
  }
}

TEST(Invariants, RotationAboutXShiftsCylindricalRows) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-3.0, 3.0);
  const double dtheta = 0.4;
  for (int k = 0; k < 1000; ++k) {
    const Vec3 p(d(rng), d(rng), d(rng));
    const auto a = project_to_pixel(p, kCyl);
    const auto b = project_to_pixel(rotation_x(dtheta) * p, kCyl);
    EXPECT_NEAR(a.u, b.u, 1e-9);
    // Rotating the point by +dtheta about x lowers its angle by dtheta.
    const double h = kCyl.height;
    const double off = std::remainder(b.v - a.v + dtheta * h / kTwoPi, h);
    EXPECT_NEAR(off, 0.0, 1e-8);
  }
}
