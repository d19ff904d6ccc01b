#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <limits>
#include <random>
#include <utility>
#include <vector>

#include "omnistereo/error.hpp"
#include "omnistereo/geometry.hpp"
#include "omnistereo/parallel.hpp"
#include "omnistereo/raster.hpp"

namespace omnistereo {

/// Ray-traceable test scene: a horizontal floor, a ball, and a dome enclosing
/// everything, each carrying a smooth 3D texture. World y is up.
struct AnalyticScene {
  struct Sphere {
    Vec3 center;
    double radius = 1.0;
  };
  struct Wave {
    Vec3 frequency;  // radians per meter
    double phase = 0.0;
    double amplitude = 0.0;
  };

  double floor_height = -1.2;
  Sphere ball{Vec3(0.4, -0.3, 2.0), 0.5};
  Sphere dome{Vec3(0.0, 0.0, 0.0), 4.0};
  // Per-surface textures; wavelengths scale with the typical viewing distance.
  std::vector<Wave> floor_texture;
  std::vector<Wave> ball_texture;
  std::vector<Wave> dome_texture;

  enum class Surface { None, Floor, Ball, Dome };
  struct Hit {
    double distance = 0.0;
    Surface surface = Surface::None;
  };

  /// Sum of `count` plane waves with random directions and phases and
  /// log-uniform wavelengths in [min_wavelength, max_wavelength].
  static std::vector<Wave> random_texture(std::mt19937_64& rng, int count, double min_wavelength,
                                          double max_wavelength) {
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> wavelength(std::log(min_wavelength), std::log(max_wavelength));
    std::uniform_real_distribution<double> phase(0.0, kTwoPi);
    std::vector<Wave> waves;
    for (int k = 0; k < count; ++k) {
      Vec3 dir;
      do dir = Vec3(unit(rng), unit(rng), unit(rng));
      while (dir.norm() < 0.1 || dir.norm() > 1.0);
      const double lambda = std::exp(wavelength(rng));
      waves.push_back({dir.normalized() * (kTwoPi / lambda), phase(rng), 0.8 / count});
    }
    return waves;
  }

  static AnalyticScene standard(std::uint64_t seed = 7) {
    AnalyticScene s;
    std::mt19937_64 rng(seed);
    s.floor_texture = random_texture(rng, 16, 0.06, 0.8);
    s.ball_texture = random_texture(rng, 16, 0.06, 0.4);
    s.dome_texture = random_texture(rng, 16, 0.2, 1.0);
    return s;
  }

  const std::vector<Wave>* texture(Surface surface) const {
    switch (surface) {
      case Surface::Floor: return &floor_texture;
      case Surface::Ball: return &ball_texture;
      case Surface::Dome: return &dome_texture;
      case Surface::None: break;
    }
    return nullptr;
  }

  /// Intensity in [0, 1] at a point on `surface`, low-pass filtered with an
  /// isotropic Gaussian of standard deviation `footprint` meters.
  double intensity(const Vec3& p, Surface surface, double footprint = 0.0) const {
    const auto* tex = texture(surface);
    if (tex == nullptr) return 0.0;
    double v = 0.5;
    for (const auto& w : *tex) {
      const double attenuation = std::exp(-0.5 * footprint * footprint * w.frequency.squaredNorm());
      v += attenuation * w.amplitude * std::sin(w.frequency.dot(p) + w.phase);
    }
    return std::clamp(v, 0.0, 1.0);
  }

  /// Nearest surface along origin + t * dir (dir unit length, t > 0).
  Hit intersect(const Vec3& origin, const Vec3& dir) const {
    Hit best;
    best.distance = std::numeric_limits<double>::infinity();
    auto offer = [&](double t, Surface s) {
      if (t > 1e-9 && t < best.distance) best = {t, s};
    };
    if (std::abs(dir.y()) > 1e-15) offer((floor_height - origin.y()) / dir.y(), Surface::Floor);
    for (const auto& [sphere, surf] : {std::pair{&ball, Surface::Ball}, std::pair{&dome, Surface::Dome}}) {
      const Vec3 oc = origin - sphere->center;
      const double b = oc.dot(dir);
      const double c = oc.squaredNorm() - sphere->radius * sphere->radius;
      const double disc = b * b - c;
      if (disc < 0.0) continue;
      const double root = std::sqrt(disc);
      offer(-b - root, surf);
      offer(-b + root, surf);
    }
    if (best.surface == Surface::None) best.distance = 0.0;
    return best;
  }

  /// True when nothing blocks the segment from `eye` to `point`.
  bool visible(const Vec3& eye, const Vec3& point, double tol = 1e-6) const {
    const Vec3 d = point - eye;
    const double dist = d.norm();
    if (!(dist > 0.0)) return true;
    const Hit hit = intersect(eye, d / dist);
    return hit.surface == Surface::None || hit.distance >= dist * (1.0 - tol) - tol;
  }
};

/// Renders a grayscale panorama seen from `pose` with n x n supersampling per pixel.
inline Panorama render_panorama(const AnalyticScene& scene, const Pose& pose, const PanoramaGeometry& g,
                                int supersample = 3, int workers = 1) {
  check_geometry(g);
  check_pose(pose);
  if (supersample < 1) throw DomainError("render_panorama: supersample must be positive");
  Panorama out = Panorama::zeros(g, 1);
  const int n = supersample;
  // Angular size of a subsample, used as the texture prefilter width.
  const double subsample_angle = kTwoPi / std::max(g.width, g.height) / n;
  parallel_for_rows(g.height, workers, [&](int r0, int r1) {
    for (int row = r0; row < r1; ++row)
      for (int col = 0; col < g.width; ++col) {
        double acc = 0.0;
        for (int sy = 0; sy < n; ++sy)
          for (int sx = 0; sx < n; ++sx) {
            const PixelCoord px{col + (sx + 0.5) / n - 0.5, row + (sy + 0.5) / n - 0.5};
            const Vec3 dir = pose.rotation * unproject_pixel(px, g);
            const auto hit = scene.intersect(pose.translation, dir);
            acc += scene.intensity(pose.translation + hit.distance * dir, hit.surface, hit.distance * subsample_angle);
          }
        out.at(row, col, 0) = static_cast<float>(acc / (n * n));
      }
  });
  return out;
}

/// Exact Euclidean depth along each pixel-center ray.
inline DepthMap render_depth(const AnalyticScene& scene, const Pose& pose, const PanoramaGeometry& g, int workers = 1) {
  check_geometry(g);
  check_pose(pose);
  DepthMap out = DepthMap::invalid(g);
  parallel_for_rows(g.height, workers, [&](int r0, int r1) {
    for (int row = r0; row < r1; ++row)
      for (int col = 0; col < g.width; ++col) {
        const Vec3 dir = pose.rotation * unproject_pixel({double(col), double(row)}, g);
        const auto hit = scene.intersect(pose.translation, dir);
        if (hit.surface != AnalyticScene::Surface::None) out.set(row, col, static_cast<float>(hit.distance));
      }
  });
  return out;
}

}  // namespace omnistereo
