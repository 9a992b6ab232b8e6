#pragma once

#include <cctype>
#include <charconv>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fusegeom/common.hpp"

namespace fusegeom {

// ---------------------------------------------------------------------------
// Calibration: the projection chain from velodyne coordinates to image
// coordinates and back. All transforms are rigid, so every operation here
// has an exact inverse.
// ---------------------------------------------------------------------------

struct Calibration {
  // Intrinsics of the bound camera.
  double f_u = 1.0;  // focal length, pixels
  double f_v = 1.0;
  double c_u = 0.0;  // principal point, pixels
  double c_v = 0.0;
  double b_x = 0.0;  // horizontal offset relative to the reference camera, m

  // Extrinsics.
  Eigen::Matrix3d rect_rotation = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d velo_to_cam_rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d velo_to_cam_translation = Eigen::Vector3d::Zero();

  // Left-right camera separation, when a stereo pair was available.
  std::optional<double> stereo_baseline;

  int camera_index = 2;

  /// Checks the type invariants: positive focals, orthonormal rotations.
  void validate() const {
    if (!(f_u > 0.0) || !(f_v > 0.0))
      throw Error("Calibration: focal lengths must be positive");
    auto check_orthonormal = [](const Eigen::Matrix3d& r, const char* name) {
      const double err =
          (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
      if (err > 1e-6)
        throw Error(std::string("Calibration: ") + name +
                    " is not orthonormal (max deviation " +
                    std::to_string(err) + ")");
    };
    check_orthonormal(rect_rotation, "rect_rotation");
    check_orthonormal(velo_to_cam_rotation, "velo_to_cam_rotation");
  }
};

/// Image-plane point with the rectified-camera forward distance attached.
/// behind_camera marks points with non-positive depth; their (u, v) values
/// are still the algebraic projection result and must not be trusted.
struct ImagePoint {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
  bool behind_camera = false;
};

namespace detail {

inline std::vector<double> parse_number_list(const std::string& key,
                                             const std::string& body) {
  std::vector<double> out;
  std::istringstream iss(body);
  std::string tok;
  while (iss >> tok) {
    double value = 0.0;
    const char* begin = tok.data();
    const char* end = begin + tok.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end)
      throw MalformedNumber("calibration record " + key +
                            ": non-numeric token '" + tok + "'");
    out.push_back(value);
  }
  return out;
}

}  // namespace detail

/// Parses KITTI calibration text (`KEY: v1 v2 ...` lines) and binds the
/// result to one camera. P matrices are row-major 3x4, R0_rect row-major
/// 3x3, Tr_velo_to_cam row-major 3x4.
inline Calibration parse_kitti_calib(const std::string& text,
                                     int camera_index = 2) {
  std::map<std::string, std::vector<double>> records;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    std::string key = line.substr(0, colon);
    while (!key.empty() && std::isspace(static_cast<unsigned char>(key.back())))
      key.pop_back();
    if (key.empty()) continue;
    records[key] = detail::parse_number_list(key, line.substr(colon + 1));
  }

  auto fetch = [&](const std::string& key,
                   std::size_t expect) -> const std::vector<double>& {
    auto it = records.find(key);
    if (it == records.end())
      throw MissingRecord("calibration record " + key + " is missing");
    if (it->second.size() != expect)
      throw MalformedNumber("calibration record " + key + " has " +
                            std::to_string(it->second.size()) +
                            " values, expected " + std::to_string(expect));
    return it->second;
  };

  Calibration calib;
  calib.camera_index = camera_index;

  const auto& p = fetch("P" + std::to_string(camera_index), 12);
  calib.f_u = p[0];
  calib.c_u = p[2];
  calib.f_v = p[5];
  calib.c_v = p[6];
  if (!(calib.f_u > 0.0))
    throw MalformedNumber("P" + std::to_string(camera_index) +
                          ": non-positive focal length");
  calib.b_x = -p[3] / calib.f_u;

  const std::string rect_key = records.count("R0_rect") ? "R0_rect" : "R_rect";
  const auto& r = fetch(rect_key, 9);
  calib.rect_rotation << r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8];

  const auto& tr = fetch("Tr_velo_to_cam", 12);
  calib.velo_to_cam_rotation << tr[0], tr[1], tr[2], tr[4], tr[5], tr[6],
      tr[8], tr[9], tr[10];
  calib.velo_to_cam_translation << tr[3], tr[7], tr[11];

  // Stereo baseline from the b_x entries of a camera pair: prefer the
  // color pair (2, 3), fall back to the gray pair (0, 1).
  auto bx_of = [&](int idx) -> std::optional<double> {
    auto it = records.find("P" + std::to_string(idx));
    if (it == records.end() || it->second.size() != 12) return std::nullopt;
    if (!(it->second[0] > 0.0)) return std::nullopt;
    return -it->second[3] / it->second[0];
  };
  for (int left : {2, 0}) {
    auto bl = bx_of(left), br = bx_of(left + 1);
    if (bl && br && *br - *bl > 0.0) {
      calib.stereo_baseline = *br - *bl;
      break;
    }
  }

  calib.validate();
  return calib;
}

/// Velodyne -> rectified camera: p' = R_rect * (R_vc * p + t).
inline PointCloud velo_to_rect(const Calibration& calib,
                               const PointCloud& cloud) {
  require_frame(cloud, Frame::velodyne, "velo_to_rect");
  PointCloud out;
  out.frame = Frame::rect_camera;
  out.reflectance = cloud.reflectance;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points)
    out.points.push_back(calib.rect_rotation *
                         (calib.velo_to_cam_rotation * p +
                          calib.velo_to_cam_translation));
  return out;
}

/// Exact inverse of velo_to_rect.
inline PointCloud rect_to_velo(const Calibration& calib,
                               const PointCloud& cloud) {
  require_frame(cloud, Frame::rect_camera, "rect_to_velo");
  const Eigen::Matrix3d rect_inv = calib.rect_rotation.transpose();
  const Eigen::Matrix3d vc_inv = calib.velo_to_cam_rotation.transpose();
  PointCloud out;
  out.frame = Frame::velodyne;
  out.reflectance = cloud.reflectance;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points)
    out.points.push_back(vc_inv *
                         (rect_inv * p - calib.velo_to_cam_translation));
  return out;
}

inline Eigen::Vector3d velo_to_rect_point(const Calibration& calib,
                                          const Eigen::Vector3d& p) {
  return calib.rect_rotation *
         (calib.velo_to_cam_rotation * p + calib.velo_to_cam_translation);
}

inline Eigen::Vector3d rect_to_velo_point(const Calibration& calib,
                                          const Eigen::Vector3d& p) {
  return calib.velo_to_cam_rotation.transpose() *
         (calib.rect_rotation.transpose() * p - calib.velo_to_cam_translation);
}

/// Projects one rectified-camera point to the image plane.
inline ImagePoint project_rect_point(const Calibration& calib,
                                     const Eigen::Vector3d& r) {
  ImagePoint ip;
  ip.depth = r.z();
  ip.behind_camera = !(r.z() > 0.0);
  ip.u = (calib.f_u * r.x() - calib.f_u * calib.b_x) / r.z() + calib.c_u;
  ip.v = calib.f_v * r.y() / r.z() + calib.c_v;
  return ip;
}

/// Full projection chain velodyne -> image. Points with non-positive
/// rectified depth are flagged behind_camera, never dropped.
inline std::vector<ImagePoint> project_velo_to_image(const Calibration& calib,
                                                     const PointCloud& cloud) {
  require_frame(cloud, Frame::velodyne, "project_velo_to_image");
  std::vector<ImagePoint> out;
  out.reserve(cloud.size());
  for (const auto& p : cloud.points)
    out.push_back(project_rect_point(calib, velo_to_rect_point(calib, p)));
  return out;
}

/// Inverse projection: pixel plus depth back to a rectified-camera point.
inline Eigen::Vector3d image_to_rect(const Calibration& calib, double u,
                                     double v, double depth) {
  if (!(depth > 0.0))
    throw NonPositiveDepth("image_to_rect: depth must be positive, got " +
                           std::to_string(depth));
  return {(u - calib.c_u) * depth / calib.f_u + calib.b_x,
          (v - calib.c_v) * depth / calib.f_v, depth};
}

}  // namespace fusegeom
