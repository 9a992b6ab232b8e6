#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "fusegeom/boxes.hpp"
#include "fusegeom/calib.hpp"
#include "fusegeom/common.hpp"
#include "fusegeom/kdtree.hpp"

namespace fusegeom {

// ---------------------------------------------------------------------------
// Pseudo-LiDAR pipeline: disparity -> points, box cropping, statistical
// outlier removal, depth rectification against real LiDAR points.
// ---------------------------------------------------------------------------

/// Dense per-pixel disparity image. Disparity is in pixels; 0 marks an
/// invalid pixel. Held at double precision in memory; the on-disk
/// formats quantize (float32 grid, 16-bit PNG).
struct DisparityMap {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // row-major, width * height

  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }

  static DisparityMap zeros(int width, int height) {
    DisparityMap d;
    d.width = width;
    d.height = height;
    d.data.assign(static_cast<std::size_t>(width) * height, 0.0);
    return d;
  }
};

/// Inverse-projects every valid pixel: depth z = f_u * baseline / d, then
/// image -> rect -> velodyne. Pixels are visited row-major with the given
/// stride. Requires a known stereo baseline.
inline PointCloud disparity_to_points(const Calibration& calib,
                                      const DisparityMap& disp,
                                      int stride = 1) {
  if (!calib.stereo_baseline)
    throw MissingBaseline("disparity_to_points: calibration has no stereo baseline");
  if (stride < 1) throw Error("disparity_to_points: stride must be >= 1");
  const double fb = calib.f_u * *calib.stereo_baseline;
  PointCloud rect;
  rect.frame = Frame::rect_camera;
  for (int v = 0; v < disp.height; v += stride) {
    for (int u = 0; u < disp.width; u += stride) {
      const double d = disp.at(u, v);
      if (!(d > 0.0)) continue;
      const double z = fb / d;
      rect.points.push_back(image_to_rect(calib, u, v, z));
    }
  }
  return rect_to_velo(calib, rect);
}

/// Keeps points whose forward projection lands inside the 2D box
/// (inclusive edges) with positive depth.
inline PointCloud crop_points_by_box2d(const Calibration& calib,
                                       const PointCloud& cloud,
                                       const Box2D& box) {
  require_frame(cloud, Frame::velodyne, "crop_points_by_box2d");
  PointCloud out;
  out.frame = cloud.frame;
  const bool has_refl = cloud.reflectance.size() == cloud.size();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const ImagePoint ip =
        project_rect_point(calib, velo_to_rect_point(calib, cloud.points[i]));
    if (ip.behind_camera) continue;
    if (ip.u < box.x_min() || ip.u > box.x_max()) continue;
    if (ip.v < box.y_min() || ip.v > box.y_max()) continue;
    if (has_refl)
      out.push_back(cloud.points[i], cloud.reflectance[i]);
    else
      out.push_back(cloud.points[i]);
  }
  return out;
}

/// True when p lies inside the oriented box (inclusive, with a small
/// tolerance so points sampled exactly on a face stay inside).
inline bool point_in_box3d(const Eigen::Vector3d& p, const Box3D& box,
                           double tol = 1e-9) {
  const Eigen::Vector3d q = rot_z(-box.theta) * (p - box.center());
  return std::abs(q.x()) <= box.l / 2.0 + tol &&
         std::abs(q.y()) <= box.w / 2.0 + tol &&
         std::abs(q.z()) <= box.h / 2.0 + tol;
}

/// Keeps points inside the oriented 3D box.
inline PointCloud crop_points_by_box3d(const PointCloud& cloud,
                                       const Box3D& box) {
  require_frame(cloud, Frame::velodyne, "crop_points_by_box3d");
  PointCloud out;
  out.frame = cloud.frame;
  const bool has_refl = cloud.reflectance.size() == cloud.size();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!point_in_box3d(cloud.points[i], box)) continue;
    if (has_refl)
      out.push_back(cloud.points[i], cloud.reflectance[i]);
    else
      out.push_back(cloud.points[i]);
  }
  return out;
}

struct RangeSpec {
  double x_min = 0.0, x_max = 70.0;
  double y_min = -40.0, y_max = 40.0;
  double z_min = -3.0, z_max = 1.0;
};

/// Axis-aligned inclusive range crop in the velodyne frame.
inline PointCloud range_crop(const PointCloud& cloud,
                             const RangeSpec& range = {}) {
  require_frame(cloud, Frame::velodyne, "range_crop");
  PointCloud out;
  out.frame = cloud.frame;
  const bool has_refl = cloud.reflectance.size() == cloud.size();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    if (p.x() < range.x_min || p.x() > range.x_max) continue;
    if (p.y() < range.y_min || p.y() > range.y_max) continue;
    if (p.z() < range.z_min || p.z() > range.z_max) continue;
    if (has_refl)
      out.push_back(p, cloud.reflectance[i]);
    else
      out.push_back(p);
  }
  return out;
}

struct FilterResult {
  PointCloud kept;
  std::vector<std::size_t> removed;  // indices into the input cloud
};

/// Statistical outlier removal: per point, the mean distance to its k
/// nearest neighbors; points whose mean exceeds mu + sigma_mult * sigma
/// of those means are removed. Deterministic.
inline FilterResult statistical_filter(const PointCloud& cloud,
                                       std::size_t k = 20,
                                       double sigma_mult = 1.0) {
  if (cloud.size() <= k)
    throw TooFewPoints("statistical_filter: need more than k=" +
                       std::to_string(k) + " points, got " +
                       std::to_string(cloud.size()));
  KdTree3 tree(cloud.points);
  std::vector<double> means(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    // Query k+1 and drop the point itself.
    const auto nbrs = tree.knn(cloud.points[i], k + 1);
    double acc = 0.0;
    std::size_t count = 0;
    for (const auto& n : nbrs) {
      if (n.index == i) continue;
      acc += n.distance;
      if (++count == k) break;
    }
    means[i] = acc / static_cast<double>(count);
  }
  const double mu =
      std::accumulate(means.begin(), means.end(), 0.0) / means.size();
  double var = 0.0;
  for (double m : means) var += (m - mu) * (m - mu);
  const double sigma = std::sqrt(var / means.size());
  const double gate = mu + sigma_mult * sigma;

  FilterResult result;
  result.kept.frame = cloud.frame;
  const bool has_refl = cloud.reflectance.size() == cloud.size();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (means[i] > gate) {
      result.removed.push_back(i);
    } else if (has_refl) {
      result.kept.push_back(cloud.points[i], cloud.reflectance[i]);
    } else {
      result.kept.push_back(cloud.points[i]);
    }
  }
  return result;
}

struct RectificationResult {
  double offset = 0.0;    // signed translation along the depth axis, meters
  double residual = 0.0;  // final mean of the per-point D_i, meters
  std::size_t k_used = 0;
};

/// Translates the pseudo cloud along the camera depth axis to minimize
/// the summed mean distance from each pseudo point to its K nearest GT
/// points. The objective is nonsmooth in the shift (neighbor sets
/// change), so it is minimized by a uniform grid (step 0.05 m) followed
/// by golden-section refinement on the best bracket.
inline std::pair<PointCloud, RectificationResult> rectify_depth(
    const Calibration& calib, const PointCloud& pseudo, const PointCloud& gt,
    std::size_t k = 5, double search_range = 3.0) {
  if (pseudo.empty() || gt.empty())
    throw EmptyCloud("rectify_depth: pseudo and gt clouds must be nonempty");
  require_frame(pseudo, Frame::velodyne, "rectify_depth");
  require_frame(gt, Frame::velodyne, "rectify_depth");

  const std::size_t k_used = std::min(k, gt.size());
  // Camera viewing (depth) axis expressed in the velodyne frame.
  const Eigen::Vector3d depth_axis =
      calib.velo_to_cam_rotation.transpose() *
      (calib.rect_rotation.transpose() * Eigen::Vector3d::UnitZ());

  KdTree3 tree(gt.points);
  auto objective = [&](double delta) {
    const Eigen::Vector3d shift = delta * depth_axis;
    double acc = 0.0;
    for (const auto& p : pseudo.points)
      acc += tree.mean_knn_distance(p + shift, k_used);
    return acc;
  };

  constexpr double grid_step = 0.05;
  double best_delta = 0.0;
  double best_value = objective(0.0);
  const int steps = static_cast<int>(std::floor(search_range / grid_step));
  for (int i = -steps; i <= steps; ++i) {
    const double delta = i * grid_step;
    if (delta == 0.0) continue;
    const double value = objective(delta);
    if (value < best_value) {
      best_value = value;
      best_delta = delta;
    }
  }

  // Golden-section refinement on [best - step, best + step].
  {
    constexpr double inv_phi = 0.6180339887498949;
    double a = best_delta - grid_step, b = best_delta + grid_step;
    double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
    double fc = objective(c), fd = objective(d);
    for (int iter = 0; iter < 40 && (b - a) > 1e-6; ++iter) {
      if (fc < fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - inv_phi * (b - a);
        fc = objective(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + inv_phi * (b - a);
        fd = objective(d);
      }
    }
    const double mid = (a + b) / 2.0;
    const double fmid = objective(mid);
    if (fmid < best_value) {
      best_value = fmid;
      best_delta = mid;
    }
  }

  PointCloud translated;
  translated.frame = pseudo.frame;
  translated.reflectance = pseudo.reflectance;
  translated.points.reserve(pseudo.size());
  const Eigen::Vector3d shift = best_delta * depth_axis;
  for (const auto& p : pseudo.points) translated.points.push_back(p + shift);

  RectificationResult result;
  result.offset = best_delta;
  result.residual = best_value / static_cast<double>(pseudo.size());
  result.k_used = k_used;
  return {std::move(translated), result};
}

}  // namespace fusegeom
