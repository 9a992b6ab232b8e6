#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fusegeom {

// ---------------------------------------------------------------------------
// Errors. All library failures are typed exceptions derived from Error so
// callers can catch the whole family or individual conditions.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FrameMismatch : Error {
  using Error::Error;
};
struct LengthMismatch : Error {
  using Error::Error;
};
struct MissingRecord : Error {
  using Error::Error;
};
struct MalformedNumber : Error {
  using Error::Error;
};
struct NonPositiveDepth : Error {
  using Error::Error;
};
struct FullyBehindCamera : Error {
  using Error::Error;
};
struct MissingBaseline : Error {
  using Error::Error;
};
struct TooFewPoints : Error {
  using Error::Error;
};
struct EmptyCloud : Error {
  using Error::Error;
};
struct EmptyInput : Error {
  using Error::Error;
};
struct BothEmpty : Error {
  using Error::Error;
};
struct KindMismatch : Error {
  using Error::Error;
};
struct TruncatedFile : Error {
  using Error::Error;
};
struct MalformedLine : Error {
  using Error::Error;
};
struct InfeasiblePlacement : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Coordinate frames and point clouds.
// ---------------------------------------------------------------------------

/// Coordinate frame a cloud lives in. Velodyne: x forward, y left, z up.
/// Rectified camera: x right, y down, z forward (optical axis).
enum class Frame { velodyne, rect_camera };

inline const char* frame_name(Frame f) {
  return f == Frame::velodyne ? "velodyne" : "rect_camera";
}

/// Ordered set of 3D points, optionally with per-point reflectance
/// (same length as points when present), tagged with its frame.
struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<float> reflectance;  // empty or points.size()
  Frame frame = Frame::velodyne;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  void push_back(const Eigen::Vector3d& p) { points.push_back(p); }
  void push_back(const Eigen::Vector3d& p, float r) {
    points.push_back(p);
    reflectance.push_back(r);
  }
};

inline void require_frame(const PointCloud& cloud, Frame expected,
                          const char* op) {
  if (cloud.frame != expected) {
    throw FrameMismatch(std::string(op) + ": cloud is in frame " +
                        frame_name(cloud.frame) + ", expected " +
                        frame_name(expected));
  }
}

// ---------------------------------------------------------------------------
// Angle helpers.
// ---------------------------------------------------------------------------

/// Wrap an angle to [-pi, pi).
inline double wrap_to_pi(double a) {
  constexpr double two_pi = 2.0 * M_PI;
  a = std::fmod(a + M_PI, two_pi);
  if (a < 0.0) a += two_pi;
  return a - M_PI;
}

/// 2D rotation about the vertical axis (BEV yaw).
inline Eigen::Matrix3d rot_z(double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  Eigen::Matrix3d r;
  r << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return r;
}

}  // namespace fusegeom
