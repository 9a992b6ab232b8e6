#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "fusegeom/boxes.hpp"
#include "fusegeom/calib.hpp"
#include "fusegeom/common.hpp"
#include "fusegeom/dataio.hpp"
#include "fusegeom/pseudolidar.hpp"

namespace fusegeom {

// ---------------------------------------------------------------------------
// Deterministic synthetic scenes: car-sized boxes with sampled surface
// points, ground clutter, an ideal disparity render and perfect per-point
// foreground scores. Desk-scale stand-in for real captured frames.
// ---------------------------------------------------------------------------

struct SceneSpec {
  std::uint64_t rng_seed = 0;
  int num_boxes = 3;
  double depth_min = 8.0;   // box center x range, meters
  double depth_max = 55.0;
  double surface_density = 60.0;  // points per square meter of box surface
  double disparity_noise = 0.0;   // stddev of additive disparity noise, px
  int ground_points = 2000;

  void validate() const {
    if (num_boxes < 0) throw Error("SceneSpec: num_boxes must be >= 0");
    if (!(surface_density > 0.0))
      throw Error("SceneSpec: surface_density must be positive");
    if (!(depth_min > 0.0 && depth_max > depth_min))
      throw Error("SceneSpec: need 0 < depth_min < depth_max");
  }
};

inline constexpr double kSynthImageWidth = 1242.0;
inline constexpr double kSynthImageHeight = 375.0;
inline constexpr double kSynthGroundZ = -1.7;

/// KITTI-like calibration used by every synthetic scene: axis permutation
/// from velodyne (x fwd, y left, z up) to camera (x right, y down, z fwd).
inline Calibration synthetic_calibration() {
  Calibration calib;
  calib.f_u = 721.5;
  calib.f_v = 721.5;
  calib.c_u = 609.6;
  calib.c_v = 172.9;
  calib.b_x = -0.06;
  calib.stereo_baseline = 0.54;
  calib.velo_to_cam_rotation << 0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0;
  calib.velo_to_cam_translation << 0.0, -0.08, -0.27;
  calib.camera_index = 2;
  return calib;
}

/// Serializes a Calibration back into KITTI text form (P2/P3 pair plus
/// rectification and velodyne records), so synthetic frames round-trip
/// through the regular readers.
inline std::string calibration_to_kitti_text(const Calibration& calib) {
  std::ostringstream oss;
  oss << std::setprecision(17);
  auto emit_p = [&](int idx, double b_x) {
    oss << "P" << idx << ":";
    const double m[12] = {calib.f_u, 0.0,       calib.c_u, -calib.f_u * b_x,
                          0.0,       calib.f_v, calib.c_v, 0.0,
                          0.0,       0.0,       1.0,       0.0};
    for (double v : m) oss << ' ' << v;
    oss << '\n';
  };
  emit_p(0, 0.0);
  emit_p(1, calib.stereo_baseline.value_or(0.54));
  emit_p(2, calib.b_x);
  emit_p(3, calib.b_x + calib.stereo_baseline.value_or(0.54));
  oss << "R0_rect:";
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) oss << ' ' << calib.rect_rotation(r, c);
  oss << '\n';
  oss << "Tr_velo_to_cam:";
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) oss << ' ' << calib.velo_to_cam_rotation(r, c);
    oss << ' ' << calib.velo_to_cam_translation(r);
  }
  oss << '\n';
  return oss.str();
}

namespace detail {

/// Nearest positive hit parameter of the ray origin + t * dir against an
/// oriented box, or nothing on a miss.
inline std::optional<double> ray_box_hit(const Eigen::Vector3d& origin,
                                         const Eigen::Vector3d& dir,
                                         const Box3D& box) {
  const Eigen::Matrix3d rot = rot_z(-box.theta);
  const Eigen::Vector3d o = rot * (origin - box.center());
  const Eigen::Vector3d d = rot * dir;
  const double half[3] = {box.l / 2.0, box.w / 2.0, box.h / 2.0};
  double t_near = -1e300, t_far = 1e300;
  for (int axis = 0; axis < 3; ++axis) {
    if (std::abs(d[axis]) < 1e-15) {
      if (std::abs(o[axis]) > half[axis]) return std::nullopt;
      continue;
    }
    double t0 = (-half[axis] - o[axis]) / d[axis];
    double t1 = (half[axis] - o[axis]) / d[axis];
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
    if (t_near > t_far) return std::nullopt;
  }
  if (t_far <= 0.0) return std::nullopt;
  return t_near > 0.0 ? t_near : t_far;
}

/// Uniform point on one of the five non-bottom faces, area weighted.
inline Eigen::Vector3d sample_box_surface(const Box3D& box,
                                          std::mt19937_64& rng) {
  // Face areas: top, front, back, left, right.
  const double areas[5] = {box.l * box.w, box.w * box.h, box.w * box.h,
                           box.l * box.h, box.l * box.h};
  std::discrete_distribution<int> face_dist(std::begin(areas),
                                            std::end(areas));
  std::uniform_real_distribution<double> unit(-0.5, 0.5);
  const int face = face_dist(rng);
  const double a = unit(rng), b = unit(rng);
  Eigen::Vector3d local;
  switch (face) {
    case 0: local = {a * box.l, b * box.w, box.h / 2.0}; break;
    case 1: local = {box.l / 2.0, a * box.w, b * box.h}; break;
    case 2: local = {-box.l / 2.0, a * box.w, b * box.h}; break;
    case 3: local = {a * box.l, box.w / 2.0, b * box.h}; break;
    default: local = {a * box.l, -box.w / 2.0, b * box.h}; break;
  }
  return box.center() + rot_z(box.theta) * local;
}

}  // namespace detail

/// Generates a full frame: non-overlapping car-sized boxes in the
/// operating range, surface point samples plus ground clutter, an ideal
/// disparity map rendered by ray casting against the box faces, and
/// point_scores = 1 inside boxes / 0 outside. Deterministic per seed.
inline FrameBundle synth_scene(const SceneSpec& spec, int frame_id = 0) {
  spec.validate();
  std::mt19937_64 rng(spec.rng_seed * 0x9e3779b97f4a7c15ULL + 0x6a09e667ULL +
                      static_cast<std::uint64_t>(frame_id));
  FrameBundle bundle;
  bundle.frame_id = frame_id;
  bundle.calib = synthetic_calibration();
  const Calibration& calib = bundle.calib;

  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Place boxes: reject overlap in BEV and centers projecting off-image.
  std::vector<Box3D> boxes;
  const int max_attempts = 200 * std::max(spec.num_boxes, 1);
  int attempts = 0;
  while (static_cast<int>(boxes.size()) < spec.num_boxes) {
    if (++attempts > max_attempts)
      throw InfeasiblePlacement("synth_scene: cannot place " +
                                std::to_string(spec.num_boxes) +
                                " non-overlapping boxes");
    Box3D box;
    box.l = 3.9 * (0.9 + 0.2 * unit(rng));
    box.w = 1.6 * (0.9 + 0.2 * unit(rng));
    box.h = 1.5 * (0.9 + 0.2 * unit(rng));
    box.x = spec.depth_min + (spec.depth_max - spec.depth_min) * unit(rng);
    box.y = -0.6 * box.x * (kSynthImageWidth / 2.0) / calib.f_u +
            1.2 * box.x * (kSynthImageWidth / 2.0) / calib.f_u * unit(rng);
    box.z = kSynthGroundZ + box.h / 2.0;
    box.theta = wrap_to_pi(-M_PI + 2.0 * M_PI * unit(rng));

    const ImagePoint center_proj =
        project_rect_point(calib, velo_to_rect_point(calib, box.center()));
    if (center_proj.behind_camera || center_proj.u < 80.0 ||
        center_proj.u > kSynthImageWidth - 80.0 || center_proj.v < 20.0 ||
        center_proj.v > kSynthImageHeight - 20.0)
      continue;
    bool overlaps = false;
    for (const auto& other : boxes)
      if (bev_intersection_area(box, other) > 0.0) {
        overlaps = true;
        break;
      }
    if (!overlaps) boxes.push_back(box);
  }

  // Surface points per box, then ground clutter.
  bundle.cloud.frame = Frame::velodyne;
  std::vector<float> scores;
  for (const auto& box : boxes) {
    const double area =
        box.l * box.w + 2.0 * box.w * box.h + 2.0 * box.l * box.h;
    const int n = std::max(8, static_cast<int>(area * spec.surface_density));
    for (int i = 0; i < n; ++i) {
      bundle.cloud.push_back(detail::sample_box_surface(box, rng),
                             static_cast<float>(unit(rng)));
      scores.push_back(1.0f);
    }
  }
  for (int i = 0; i < spec.ground_points; ++i) {
    Eigen::Vector3d p(70.0 * unit(rng), -40.0 + 80.0 * unit(rng),
                      kSynthGroundZ + 0.1 * (unit(rng) - 0.5));
    bool inside = false;
    for (const auto& box : boxes)
      if (point_in_box3d(p, box)) {
        inside = true;
        break;
      }
    bundle.cloud.push_back(p, static_cast<float>(unit(rng)));
    scores.push_back(inside ? 1.0f : 0.0f);
  }
  bundle.point_scores = std::move(scores);

  // Labels with the projected 2D envelope clipped to the image.
  for (const auto& box : boxes) {
    GroundTruth gt;
    gt.box3d = box;
    gt.box2d = project_box3d_to_box2d(
        calib, box, std::make_pair(kSynthImageWidth, kSynthImageHeight));
    gt.difficulty = classify_difficulty(gt.box2d.h, 0, 0.0);
    gt.frame_id = frame_id;
    bundle.labels.push_back(gt);
  }

  // Ideal disparity: ray-cast each pixel inside a box envelope against
  // all box faces; disparity f_u * baseline / depth at the nearest hit.
  DisparityMap disp = DisparityMap::zeros(static_cast<int>(kSynthImageWidth),
                                          static_cast<int>(kSynthImageHeight));
  const double fb = calib.f_u * *calib.stereo_baseline;
  const Eigen::Matrix3d rect_to_velo_rot =
      calib.velo_to_cam_rotation.transpose() * calib.rect_rotation.transpose();
  const Eigen::Vector3d ray_base = rect_to_velo_point(
      calib, Eigen::Vector3d(calib.b_x, 0.0, 0.0));
  std::normal_distribution<double> noise(0.0, 1.0);
  for (const auto& gt : bundle.labels) {
    const int u0 = std::max(0, static_cast<int>(std::floor(gt.box2d.x_min())));
    const int u1 = std::min(disp.width - 1,
                            static_cast<int>(std::ceil(gt.box2d.x_max())));
    const int v0 = std::max(0, static_cast<int>(std::floor(gt.box2d.y_min())));
    const int v1 = std::min(disp.height - 1,
                            static_cast<int>(std::ceil(gt.box2d.y_max())));
    for (int v = v0; v <= v1; ++v) {
      for (int u = u0; u <= u1; ++u) {
        const Eigen::Vector3d ray_dir =
            rect_to_velo_rot * Eigen::Vector3d((u - calib.c_u) / calib.f_u,
                                               (v - calib.c_v) / calib.f_v,
                                               1.0);
        const auto hit = detail::ray_box_hit(ray_base, ray_dir, gt.box3d);
        if (!hit) continue;
        double d = fb / *hit;
        if (spec.disparity_noise > 0.0)
          d = std::max(1e-3, d + spec.disparity_noise * noise(rng));
        // Nearer surfaces have larger disparity; keep the nearest.
        if (d > disp.at(u, v)) disp.at(u, v) = d;
      }
    }
  }
  bundle.disparity = std::move(disp);
  return bundle;
}

/// Writes a frame bundle into the KITTI-style directory layout that
/// load_frame reads back.
inline void write_frame_bundle(const FrameBundle& bundle,
                               const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  const std::string name = frame_name_id(bundle.frame_id);
  for (const char* sub : {"velodyne", "calib", "label_2", "disparity", "scores"})
    fs::create_directories(root / sub);
  write_velodyne(bundle.cloud, root / "velodyne" / (name + ".bin"));
  {
    std::ofstream out(root / "calib" / (name + ".txt"));
    out << calibration_to_kitti_text(bundle.calib);
  }
  std::vector<KittiLabel> labels;
  for (const auto& gt : bundle.labels) {
    KittiLabel lb;
    lb.type = "Car";
    lb.x1 = gt.box2d.x_min();
    lb.y1 = gt.box2d.y_min();
    lb.x2 = gt.box2d.x_max();
    lb.y2 = gt.box2d.y_max();
    box3d_to_label(gt.box3d, bundle.calib, lb);
    lb.alpha = lb.rotation_y;  // viewing angle not modeled
    labels.push_back(lb);
  }
  write_label_file(labels, root / "label_2" / (name + ".txt"));
  if (bundle.disparity)
    write_disparity_f32(*bundle.disparity,
                        root / "disparity" / (name + ".f32"));
  if (bundle.point_scores)
    write_scores(*bundle.point_scores, root / "scores" / (name + ".f32"));
}

}  // namespace fusegeom
