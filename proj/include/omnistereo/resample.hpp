#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "omnistereo/disparity_math.hpp"
#include "omnistereo/error.hpp"
#include "omnistereo/geometry.hpp"
#include "omnistereo/parallel.hpp"
#include "omnistereo/raster.hpp"

namespace omnistereo {

/// Resamples `src` onto `dst_geom`. `rotation` maps a ray expressed in the
/// destination frame into the source frame. Destination pixels whose ray has
/// no valid source sample are masked invalid; the output always carries a mask.
/// Same geometry with an exact identity rotation returns a copy.
inline Panorama reproject_panorama(const Panorama& src, const PanoramaGeometry& dst_geom, const Mat3& rotation,
                                   Interpolation interp, int workers = 1) {
  src.check();
  if (!is_rotation(rotation)) throw DomainError("reproject_panorama: rotation is not orthonormal");
  if (dst_geom == src.geometry && rotation == Mat3::Identity()) {
    // Identity: a copy, exact even at the poles where rays round-trip inexactly.
    Panorama dst = src;
    if (dst.valid.empty()) dst.valid.assign(dst.pixel_count(), 1);
    return dst;
  }
  Panorama dst = Panorama::zeros(dst_geom, src.channels);
  dst.valid.assign(dst.pixel_count(), 0);
  const int nc = src.channels;

  parallel_for_rows(dst_geom.height, workers, [&](int r0, int r1) {
    std::vector<float> buf(static_cast<std::size_t>(nc));
    for (int row = r0; row < r1; ++row) {
      for (int col = 0; col < dst_geom.width; ++col) {
        const CartesianPoint ray = rotation * unproject_pixel({double(col), double(row)}, dst_geom);
        const auto px = try_project(ray, src.geometry);
        if (!px || !sample(src, *px, interp, buf)) continue;
        for (int c = 0; c < nc; ++c) dst.at(row, col, c) = buf[static_cast<std::size_t>(c)];
        dst.valid[dst.index(row, col)] = 1;
      }
    }
  });
  return dst;
}

/// Two panoramas resampled into a shared frame whose x axis is the baseline.
struct RectifiedPair {
  Panorama left;
  Panorama right;
  double baseline = 0.0;
  Pose pose_left;   // rectified frame, centered on the left camera
  Pose pose_right;  // same rotation, centered on the right camera
};

/// Rotation (columns x, y, z) of the rectified frame in world coordinates.
/// x points from the right camera center to the left one, z is the left
/// camera's forward axis made orthogonal to x (world y when degenerate).
inline Mat3 rectified_rotation(const Pose& left, const Pose& right) {
  const Vec3 delta = left.translation - right.translation;
  const double b = delta.norm();
  if (!(b > 0.0)) throw DomainError("rectify_pair: camera centers coincide");
  const Vec3 x_axis = delta / b;

  auto orthogonal_part = [&](const Vec3& v) { return Vec3(v - v.dot(x_axis) * x_axis); };
  Vec3 z_axis = orthogonal_part(left.rotation * Vec3::UnitZ());
  if (z_axis.norm() < 1e-6) z_axis = orthogonal_part(Vec3::UnitY());
  if (z_axis.norm() < 1e-6) z_axis = orthogonal_part(Vec3::UnitZ());
  z_axis.normalize();
  const Vec3 y_axis = z_axis.cross(x_axis);

  Mat3 r;
  r.col(0) = x_axis;
  r.col(1) = y_axis;
  r.col(2) = z_axis;
  return r;
}

inline RectifiedPair rectify_pair(const Pose& cam_left, const Pose& cam_right, const Panorama& pano_left,
                                  const Panorama& pano_right, const PanoramaGeometry& out_geom,
                                  Interpolation interp = Interpolation::Bilinear, int workers = 1) {
  check_pose(cam_left);
  check_pose(cam_right);
  const Mat3 rect = rectified_rotation(cam_left, cam_right);
  RectifiedPair pair;
  pair.baseline = (cam_left.translation - cam_right.translation).norm();
  pair.pose_left = {rect, cam_left.translation};
  pair.pose_right = {rect, cam_right.translation};
  pair.left = reproject_panorama(pano_left, out_geom, cam_left.rotation.transpose() * rect, interp, workers);
  pair.right = reproject_panorama(pano_right, out_geom, cam_right.rotation.transpose() * rect, interp, workers);
  return pair;
}

/// Converts Cassini angular-disparity ground truth (rectified left frame) into
/// cylindrical pixel disparity. Source samples are picked by nearest neighbor;
/// each value is converted at its own source ray angle.
inline DisparityMap convert_gt_disparity(const DisparityMap& gt_angular, double baseline,
                                         const PanoramaGeometry& out_geom, int workers = 1) {
  gt_angular.check();
  if (gt_angular.geometry.projection != Projection::Cassini)
    throw DomainError("convert_gt_disparity: ground truth must be Cassini");
  if (out_geom.projection != Projection::Cylindrical)
    throw DomainError("convert_gt_disparity: output must be cylindrical");
  if (!(baseline > 0.0)) throw DomainError("convert_gt_disparity: baseline must be positive");

  DisparityMap out = DisparityMap::invalid(out_geom);
  const PanoramaGeometry& src_geom = gt_angular.geometry;
  const int sw = src_geom.width;
  const int sh = src_geom.height;

  parallel_for_rows(out_geom.height, workers, [&](int r0, int r1) {
    for (int row = r0; row < r1; ++row) {
      for (int col = 0; col < out_geom.width; ++col) {
        const auto px = try_project(unproject_pixel({double(col), double(row)}, out_geom), src_geom);
        if (!px) continue;
        int scol = 0, srow = 0;
        if (!detail::axis_nearest(px->u, sw, false, scol) || !detail::axis_nearest(px->v, sh, true, srow)) continue;
        if (!gt_angular.is_valid(srow, scol)) continue;
        const double d_ang = gt_angular.at(srow, scol);
        if (!(d_ang > 0.0)) continue;
        const double phi = scol * kPi / sw - kPi / 2;
        const auto d_cyl = cylindrical_disparity_from_angular(phi, d_ang, baseline, out_geom);
        if (!d_cyl || !(*d_cyl >= 0.0)) continue;
        out.set(row, col, static_cast<float>(*d_cyl));
      }
    }
  });
  return out;
}

}  // namespace omnistereo
