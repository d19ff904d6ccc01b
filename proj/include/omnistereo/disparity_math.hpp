#pragma once

#include <cmath>
#include <optional>

#include "omnistereo/geometry.hpp"

namespace omnistereo {

// Scalar disparity/depth relations for spherical and cylindrical stereo.
//
// Rectified frame convention: x runs along the baseline, the left camera sits
// at the origin and the right camera at -B along x. Under the cylindrical
// pixel mapping u = -x R / rho + W / 2 this makes u_left - u_right >= 0.

/// Depth of the left ray from angular disparity `d` (radians) and baseline `B`:
///   rho = B [ sin(phi + pi/2) / tan(d) - cos(phi + pi/2) ].
/// `phi_toward_partner` is the ray's angle from the yOz plane, positive on the
/// side where the partner camera sits. Returns nullopt for d <= 0 or a
/// non-positive result.
inline std::optional<double> depth_from_disparity_spherical(double phi_toward_partner, double d, double baseline) {
  if (!(d > 0.0) || !(baseline > 0.0)) return std::nullopt;
  const double s = std::sin(d);
  if (s == 0.0) return std::nullopt;
  const double rho =
      baseline * (std::sin(phi_toward_partner + kPi / 2) / std::tan(d) - std::cos(phi_toward_partner + kPi / 2));
  if (!(rho > 0.0) || !std::isfinite(rho)) return std::nullopt;
  return rho;
}

/// Same relation in the rectified frame, where the right camera lies on the
/// negative x side so the angle toward it is -phi_l.
inline std::optional<double> rectified_spherical_depth(double phi_l, double d, double baseline) {
  return depth_from_disparity_spherical(-phi_l, d, baseline);
}

/// Distance from the cylinder axis for a cylindrical pixel disparity: B R / d.
inline std::optional<double> depth_from_disparity_cylindrical(double d, double baseline, const PanoramaGeometry& g) {
  if (!(d > 0.0) || !(baseline > 0.0)) return std::nullopt;
  const double rho = baseline * g.radius() / d;
  if (!std::isfinite(rho)) return std::nullopt;
  return rho;
}

/// Exact reciprocal of depth_from_disparity_cylindrical.
inline std::optional<double> disparity_from_depth_cylindrical(double rho_cyl, double baseline,
                                                              const PanoramaGeometry& g) {
  if (!(rho_cyl > 0.0) || !(baseline > 0.0)) return std::nullopt;
  return baseline * g.radius() / rho_cyl;
}

/// Cylindrical pixel disparity of the point seen by a left ray at angle
/// `phi_l` with angular disparity `d_ang`: rho_cyl = rho_s cos(phi_l).
inline std::optional<double> cylindrical_disparity_from_angular(double phi_l, double d_ang, double baseline,
                                                                const PanoramaGeometry& cyl) {
  const auto rho_s = rectified_spherical_depth(phi_l, d_ang, baseline);
  if (!rho_s) return std::nullopt;
  return disparity_from_depth_cylindrical(*rho_s * std::cos(phi_l), baseline, cyl);
}

/// Euclidean distance along a unit ray whose distance from the cylinder axis is `rho_cyl`.
inline double euclidean_from_cylindrical(double rho_cyl, const CartesianPoint& unit_ray) {
  return rho_cyl / std::hypot(unit_ray.y(), unit_ray.z());
}

}  // namespace omnistereo
