#pragma once

#include <algorithm>
#include <array>
#include <numeric>
#include <optional>
#include <vector>

#include "fusegeom/calib.hpp"
#include "fusegeom/common.hpp"

namespace fusegeom {

// ---------------------------------------------------------------------------
// Box value types.
// ---------------------------------------------------------------------------

/// 7-parameter 3D box in the velodyne frame: center, size, BEV yaw.
/// Height extends along velodyne z; theta rotates in the x-y ground plane.
struct Box3D {
  double x = 0.0, y = 0.0, z = 0.0;  // center, meters
  double l = 1.0, w = 1.0, h = 1.0;  // size, meters
  double theta = 0.0;                // yaw, radians, in [-pi, pi)

  Eigen::Vector3d center() const { return {x, y, z}; }
  double volume() const { return l * w * h; }

  void validate() const {
    if (!(l > 0.0 && w > 0.0 && h > 0.0))
      throw Error("Box3D: sizes must be positive");
  }
};

/// Axis-aligned 2D box in the image plane, center-size form.
struct Box2D {
  double x = 0.0, y = 0.0;  // center, pixels
  double l = 1.0;           // width, pixels
  double h = 1.0;           // height, pixels

  double x_min() const { return x - l / 2.0; }
  double x_max() const { return x + l / 2.0; }
  double y_min() const { return y - h / 2.0; }
  double y_max() const { return y + h / 2.0; }
  double area() const { return l * h; }

  static Box2D from_corners(double x0, double y0, double x1, double y1) {
    Box2D b;
    b.x = (x0 + x1) / 2.0;
    b.y = (y0 + y1) / 2.0;
    b.l = x1 - x0;
    b.h = y1 - y0;
    return b;
  }
};

// ---------------------------------------------------------------------------
// Corner extraction.
// ---------------------------------------------------------------------------

/// The 8 corners of a Box3D in fixed order: bottom face CCW seen from
/// above, then the top face in the same x-y order.
///   0:(+l,+w,-h)/2  1:(-l,+w,-h)/2  2:(-l,-w,-h)/2  3:(+l,-w,-h)/2
///   4..7: the same with +h/2.
/// Offsets are rotated by R_z(theta) and shifted to the box center.
inline std::array<Eigen::Vector3d, 8> box3d_corners(const Box3D& box) {
  static constexpr double sx[4] = {1.0, -1.0, -1.0, 1.0};
  static constexpr double sy[4] = {1.0, 1.0, -1.0, -1.0};
  const Eigen::Matrix3d rot = rot_z(box.theta);
  const Eigen::Vector3d c = box.center();
  std::array<Eigen::Vector3d, 8> out;
  for (int face = 0; face < 2; ++face) {
    const double zoff = (face == 0 ? -box.h : box.h) / 2.0;
    for (int i = 0; i < 4; ++i)
      out[face * 4 + i] =
          c + rot * Eigen::Vector3d(sx[i] * box.l / 2.0, sy[i] * box.w / 2.0,
                                    zoff);
  }
  return out;
}

/// BEV footprint corners, CCW in the x-y plane.
inline std::array<Eigen::Vector2d, 4> box3d_bev_corners(const Box3D& box) {
  static constexpr double sx[4] = {1.0, -1.0, -1.0, 1.0};
  static constexpr double sy[4] = {1.0, 1.0, -1.0, -1.0};
  const double c = std::cos(box.theta), s = std::sin(box.theta);
  std::array<Eigen::Vector2d, 4> out;
  for (int i = 0; i < 4; ++i) {
    const double px = sx[i] * box.l / 2.0, py = sy[i] * box.w / 2.0;
    out[i] = {box.x + c * px - s * py, box.y + s * px + c * py};
  }
  return out;
}

// ---------------------------------------------------------------------------
// 3D -> 2D box projection.
// ---------------------------------------------------------------------------

/// Projects a 3D box to its axis-aligned image envelope (min/max of u, v
/// over the corners with positive depth). When image_size (width, height)
/// is given the envelope is clipped to [0, w] x [0, h].
/// Throws FullyBehindCamera when all 8 corners have non-positive depth.
inline Box2D project_box3d_to_box2d(
    const Calibration& calib, const Box3D& box,
    std::optional<std::pair<double, double>> image_size = std::nullopt) {
  const auto corners = box3d_corners(box);
  double u0 = 0, v0 = 0, u1 = 0, v1 = 0;
  bool any_visible = false;
  for (const auto& corner : corners) {
    const ImagePoint ip =
        project_rect_point(calib, velo_to_rect_point(calib, corner));
    if (ip.behind_camera) continue;
    if (!any_visible) {
      u0 = u1 = ip.u;
      v0 = v1 = ip.v;
      any_visible = true;
    } else {
      u0 = std::min(u0, ip.u);
      u1 = std::max(u1, ip.u);
      v0 = std::min(v0, ip.v);
      v1 = std::max(v1, ip.v);
    }
  }
  if (!any_visible)
    throw FullyBehindCamera("project_box3d_to_box2d: all corners behind camera");
  if (image_size) {
    u0 = std::clamp(u0, 0.0, image_size->first);
    u1 = std::clamp(u1, 0.0, image_size->first);
    v0 = std::clamp(v0, 0.0, image_size->second);
    v1 = std::clamp(v1, 0.0, image_size->second);
  }
  return Box2D::from_corners(u0, v0, u1, v1);
}

// ---------------------------------------------------------------------------
// IoU kernels.
// ---------------------------------------------------------------------------

/// Axis-aligned IoU in the image plane.
inline double iou_2d(const Box2D& a, const Box2D& b) {
  const double iw = std::min(a.x_max(), b.x_max()) - std::max(a.x_min(), b.x_min());
  const double ih = std::min(a.y_max(), b.y_max()) - std::max(a.y_min(), b.y_min());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

namespace detail {

inline double polygon_area(const std::vector<Eigen::Vector2d>& poly) {
  double acc = 0.0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % n];
    acc += p.x() * q.y() - q.x() * p.y();
  }
  return acc / 2.0;
}

// Sutherland-Hodgman clip of a convex subject polygon by one half-plane
// (left of a->b for a CCW clip polygon).
inline std::vector<Eigen::Vector2d> clip_half_plane(
    const std::vector<Eigen::Vector2d>& subject, const Eigen::Vector2d& a,
    const Eigen::Vector2d& b) {
  auto side = [&](const Eigen::Vector2d& p) {
    return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
  };
  std::vector<Eigen::Vector2d> out;
  const std::size_t n = subject.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& cur = subject[i];
    const auto& nxt = subject[(i + 1) % n];
    const double sc = side(cur), sn = side(nxt);
    if (sc >= 0.0) out.push_back(cur);
    if ((sc > 0.0 && sn < 0.0) || (sc < 0.0 && sn > 0.0)) {
      const double t = sc / (sc - sn);
      out.push_back(cur + t * (nxt - cur));
    }
  }
  return out;
}

/// Intersection area of two convex CCW polygons.
inline double convex_intersection_area(std::vector<Eigen::Vector2d> subject,
                                       const std::vector<Eigen::Vector2d>& clip) {
  const std::size_t n = clip.size();
  for (std::size_t i = 0; i < n && !subject.empty(); ++i)
    subject = clip_half_plane(subject, clip[i], clip[(i + 1) % n]);
  if (subject.size() < 3) return 0.0;
  return polygon_area(subject);
}

}  // namespace detail

/// BEV intersection area of two boxes' rotated footprints.
/// Values below 1e-12 m^2 snap to zero to suppress clipping noise.
inline double bev_intersection_area(const Box3D& a, const Box3D& b) {
  const auto ca = box3d_bev_corners(a);
  const auto cb = box3d_bev_corners(b);
  const double area = detail::convex_intersection_area(
      {ca.begin(), ca.end()}, {cb.begin(), cb.end()});
  return area < 1e-12 ? 0.0 : area;
}

/// Rotated IoU in the ground plane.
inline double iou_bev(const Box3D& a, const Box3D& b) {
  const double inter = bev_intersection_area(a, b);
  if (inter == 0.0) return 0.0;
  const double ua = a.l * a.w + b.l * b.w - inter;
  return inter / ua;
}

/// Full 3D IoU: BEV intersection area times vertical overlap, over the
/// union of volumes.
inline double iou_3d(const Box3D& a, const Box3D& b) {
  const double zlo = std::max(a.z - a.h / 2.0, b.z - b.h / 2.0);
  const double zhi = std::min(a.z + a.h / 2.0, b.z + b.h / 2.0);
  const double dz = zhi - zlo;
  if (dz <= 0.0) return 0.0;
  const double inter = bev_intersection_area(a, b) * dz;
  if (inter == 0.0) return 0.0;
  return inter / (a.volume() + b.volume() - inter);
}

// ---------------------------------------------------------------------------
// Rotated NMS.
// ---------------------------------------------------------------------------

/// Greedy descending-score suppression by BEV IoU. A box is suppressed
/// when its IoU with any kept box exceeds iou_threshold. Ties in score
/// break toward the lower original index.
inline std::vector<std::size_t> nms_rotated(const std::vector<Box3D>& boxes,
                                            const std::vector<double>& scores,
                                            double iou_threshold) {
  if (boxes.size() != scores.size())
    throw LengthMismatch("nms_rotated: boxes and scores differ in length");
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return scores[a] > scores[b];
                   });
  std::vector<std::size_t> kept;
  for (std::size_t idx : order) {
    bool suppressed = false;
    for (std::size_t k : kept) {
      if (iou_bev(boxes[idx], boxes[k]) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

// ---------------------------------------------------------------------------
// Canonical proposal transform.
// ---------------------------------------------------------------------------

struct CanonicalPoints {
  std::vector<Eigen::Vector3d> points;   // R_z(-theta) * (p - center)
  std::vector<double> sensor_distance;   // ||p|| in the original frame
};

/// Maps points into a proposal-centered, yaw-aligned frame and attaches
/// each point's original Euclidean distance to the sensor origin.
inline CanonicalPoints canonical_transform(const Box3D& proposal,
                                           const PointCloud& cloud) {
  require_frame(cloud, Frame::velodyne, "canonical_transform");
  const Eigen::Matrix3d rot = rot_z(-proposal.theta);
  const Eigen::Vector3d c = proposal.center();
  CanonicalPoints out;
  out.points.reserve(cloud.size());
  out.sensor_distance.reserve(cloud.size());
  for (const auto& p : cloud.points) {
    out.points.push_back(rot * (p - c));
    out.sensor_distance.push_back(p.norm());
  }
  return out;
}

}  // namespace fusegeom
