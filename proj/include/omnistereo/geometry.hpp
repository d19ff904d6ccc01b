#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "omnistereo/error.hpp"

namespace omnistereo {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Point in a camera frame, meters. z is forward and x runs along the
/// cylinder axis (the stereo baseline once rectified).
using CartesianPoint = Vec3;

struct SphericalCoord {
  double rho = 0.0;    // distance from the origin
  double phi = 0.0;    // angle between the ray and the yOz plane, [-pi/2, pi/2]
  double theta = 0.0;  // angle of the yOz projection from +z, [-pi, pi)
};

struct CylindricalCoord {
  double rho = 0.0;    // distance from the x axis
  double theta = 0.0;  // [-pi, pi)
  double x = 0.0;      // axial coordinate
};

/// Continuous pixel position. Integer values are sample centers, so an image
/// of width W spans [-0.5, W - 0.5).
struct PixelCoord {
  double u = 0.0;
  double v = 0.0;
};

enum class Projection { Cassini, ERP, Cylindrical, Perspective };

inline std::string_view to_string(Projection p) {
  switch (p) {
    case Projection::Cassini: return "cassini";
    case Projection::ERP: return "erp";
    case Projection::Cylindrical: return "cylindrical";
    case Projection::Perspective: return "perspective";
  }
  return "unknown";
}

inline std::optional<Projection> projection_from_string(std::string_view s) {
  if (s == "cassini") return Projection::Cassini;
  if (s == "erp") return Projection::ERP;
  if (s == "cylindrical") return Projection::Cylindrical;
  if (s == "perspective") return Projection::Perspective;
  return std::nullopt;
}

struct PanoramaGeometry {
  Projection projection = Projection::Cylindrical;
  int width = 0;
  int height = 0;

  /// Cylinder radius in pixels, which is also the focal length: H / (2 pi).
  double radius() const { return static_cast<double>(height) / kTwoPi; }

  bool operator==(const PanoramaGeometry&) const = default;
};

inline void check_geometry(const PanoramaGeometry& g) {
  if (g.width <= 0 || g.height <= 0)
    throw DomainError("panorama dimensions must be positive, got " + std::to_string(g.width) + "x" +
                      std::to_string(g.height));
}

/// Wraps an angle into [-pi, pi).
inline double wrap_angle(double a) {
  double w = a - kTwoPi * std::floor((a + kPi) / kTwoPi);
  if (w >= kPi) w -= kTwoPi;
  if (w < -kPi) w = -kPi;
  return w;
}

// ---------------------------------------------------------------------------
// Coordinate conversions

inline CartesianPoint spherical_to_cartesian(const SphericalCoord& c) {
  const double cp = std::cos(c.phi);
  return {c.rho * std::sin(c.phi), c.rho * cp * std::sin(c.theta), c.rho * cp * std::cos(c.theta)};
}

/// Throws DomainError at the origin. On the x axis theta is undefined and set to 0.
inline SphericalCoord cartesian_to_spherical(const CartesianPoint& p) {
  const double rho = p.norm();
  if (!(rho > 0.0)) throw DomainError("cartesian_to_spherical: point at origin");
  const double ring = std::hypot(p.y(), p.z());
  SphericalCoord s;
  s.rho = rho;
  // atan2 form of asin(x / rho); stays well conditioned near the poles.
  s.phi = std::atan2(p.x(), ring);
  s.theta = ring > 0.0 ? wrap_angle(std::atan2(p.y(), p.z())) : 0.0;
  return s;
}

inline CartesianPoint cylindrical_to_cartesian(const CylindricalCoord& c) {
  return {c.x, c.rho * std::sin(c.theta), c.rho * std::cos(c.theta)};
}

/// Throws DomainError for points on the x axis.
inline CylindricalCoord cartesian_to_cylindrical(const CartesianPoint& p) {
  const double ring = std::hypot(p.y(), p.z());
  if (!(ring > 0.0)) throw DomainError("cartesian_to_cylindrical: point on the cylinder axis");
  return {ring, wrap_angle(std::atan2(p.y(), p.z())), p.x()};
}

// ---------------------------------------------------------------------------
// Pixel mappings

namespace detail {

inline CartesianPoint swap_xy(const CartesianPoint& p) { return {p.y(), p.x(), p.z()}; }

inline std::optional<PixelCoord> cassini_project(const CartesianPoint& p, double w, double h) {
  const double ring = std::hypot(p.y(), p.z());
  if (!(ring > 0.0) && p.x() == 0.0) return std::nullopt;
  const double phi = std::atan2(p.x(), ring);
  const double theta = ring > 0.0 ? wrap_angle(std::atan2(p.y(), p.z())) : 0.0;
  return PixelCoord{(phi + kPi / 2) * w / kPi, (theta + kPi) * h / kTwoPi};
}

inline CartesianPoint cassini_unproject(const PixelCoord& px, double w, double h) {
  return spherical_to_cartesian({1.0, px.u * kPi / w - kPi / 2, px.v * kTwoPi / h - kPi});
}

}  // namespace detail

/// Non-throwing projection for resampling loops; nullopt where the mapping is
/// undefined (origin, cylinder axis, behind a pinhole camera).
inline std::optional<PixelCoord> try_project(const CartesianPoint& p, const PanoramaGeometry& g) {
  const double w = g.width;
  const double h = g.height;
  switch (g.projection) {
    case Projection::Cassini:
      return detail::cassini_project(p, w, h);
    case Projection::ERP: {
      // Transverse aspect of Cassini: swap the pole axis and transpose the image.
      auto t = detail::cassini_project(detail::swap_xy(p), h, w);
      if (!t) return std::nullopt;
      return PixelCoord{t->v, t->u};
    }
    case Projection::Cylindrical: {
      const double ring = std::hypot(p.y(), p.z());
      if (!(ring > 0.0)) return std::nullopt;
      const double theta = wrap_angle(std::atan2(p.y(), p.z()));
      return PixelCoord{-(p.x() / ring) * g.radius() + w / 2, (theta + kPi) * h / kTwoPi};
    }
    case Projection::Perspective: {
      if (!(p.z() > 0.0)) return std::nullopt;
      const double f = g.radius();
      return PixelCoord{-(p.x() / p.z()) * f + w / 2, (p.y() / p.z()) * f + h / 2};
    }
  }
  return std::nullopt;
}

inline PixelCoord project_to_pixel(const CartesianPoint& p, const PanoramaGeometry& g) {
  auto px = try_project(p, g);
  if (!px)
    throw DomainError(std::string("project_to_pixel: point has no ") + std::string(to_string(g.projection)) +
                      " projection");
  return *px;
}

/// Unit ray through a pixel.
inline CartesianPoint unproject_pixel(const PixelCoord& px, const PanoramaGeometry& g) {
  const double w = g.width;
  const double h = g.height;
  switch (g.projection) {
    case Projection::Cassini:
      return detail::cassini_unproject(px, w, h);
    case Projection::ERP:
      return detail::swap_xy(detail::cassini_unproject({px.v, px.u}, h, w));
    case Projection::Cylindrical: {
      const double theta = px.v * kTwoPi / h - kPi;
      const double axial = (w / 2 - px.u) / g.radius();
      return CartesianPoint{axial, std::sin(theta), std::cos(theta)}.normalized();
    }
    case Projection::Perspective: {
      const double f = g.radius();
      return CartesianPoint{-(px.u - w / 2) / f, (px.v - h / 2) / f, 1.0}.normalized();
    }
  }
  return {0.0, 0.0, 1.0};
}

/// Horizontal field of view of a cylindrical panorama, 2 atan((W/2) / R).
inline double horizontal_fov(const PanoramaGeometry& g) {
  if (g.projection != Projection::Cylindrical)
    throw DomainError("horizontal_fov is defined for cylindrical panoramas only");
  return 2.0 * std::atan((g.width / 2.0) / g.radius());
}

/// Pixels per meter of object extent, horizontally and vertically.
struct ScaleFactors {
  double du_per_dx = 0.0;
  double dv_per_dy = 0.0;
};

/// Small-object approximation of pixel extent per metric extent at polar angle
/// `theta` and distance `rho`. Spherical kinds (Cassini, ERP) stretch the
/// horizontal axis by 1/cos(theta); the cylinder does not.
inline ScaleFactors local_scale_factors(const PanoramaGeometry& g, double theta, double rho) {
  if (!(rho > 0.0)) throw DomainError("local_scale_factors: rho must be positive");
  const double f = g.radius();
  if (g.projection == Projection::Cylindrical) return {f / rho, f / rho};
  if (!(std::abs(theta) < kPi / 2))
    throw DomainError("local_scale_factors: horizontal scale is infinite at |theta| >= pi/2");
  return {f / (rho * std::cos(theta)), f / rho};
}

// ---------------------------------------------------------------------------
// Rigid transforms

inline Mat3 rotation_x(double a) { return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix(); }
inline Mat3 rotation_y(double a) { return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix(); }
inline Mat3 rotation_z(double a) { return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix(); }

inline bool is_rotation(const Mat3& r, double tol = 1e-9) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(r.determinant() - 1.0) <= tol;
}

/// Camera-to-world rigid transform.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }
};

inline void check_pose(const Pose& p) {
  if (!is_rotation(p.rotation)) throw DomainError("pose rotation is not orthonormal with det +1");
  if (!p.translation.allFinite()) throw DomainError("pose translation is not finite");
}

inline CartesianPoint transform_point(const Pose& pose, const CartesianPoint& p) {
  return pose.rotation * p + pose.translation;
}

/// a * b: applies b first, then a.
inline Pose compose_pose(const Pose& a, const Pose& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

inline Pose invert_pose(const Pose& p) {
  const Mat3 rt = p.rotation.transpose();
  return {rt, -(rt * p.translation)};
}

}  // namespace omnistereo
