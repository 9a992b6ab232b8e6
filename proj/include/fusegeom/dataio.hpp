#pragma once

#include <png.h>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fusegeom/boxes.hpp"
#include "fusegeom/calib.hpp"
#include "fusegeom/common.hpp"
#include "fusegeom/eval.hpp"
#include "fusegeom/pseudolidar.hpp"

namespace fusegeom {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian");

// ---------------------------------------------------------------------------
// Velodyne binary clouds: little-endian float32 quadruples (x, y, z, r).
// ---------------------------------------------------------------------------

inline PointCloud read_velodyne(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("read_velodyne: cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  if (bytes % 16 != 0)
    throw TruncatedFile("read_velodyne: " + path.string() + " has " +
                        std::to_string(bytes) +
                        " bytes, not a multiple of 16");
  const std::size_t n = bytes / 16;
  std::vector<float> raw(n * 4);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
  PointCloud cloud;
  cloud.frame = Frame::velodyne;
  cloud.points.reserve(n);
  cloud.reflectance.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    cloud.push_back({raw[4 * i], raw[4 * i + 1], raw[4 * i + 2]},
                    raw[4 * i + 3]);
  return cloud;
}

inline void write_velodyne(const PointCloud& cloud,
                           const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("write_velodyne: cannot open " + path.string());
  const bool has_refl = cloud.reflectance.size() == cloud.size();
  std::vector<float> raw;
  raw.reserve(cloud.size() * 4);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    raw.push_back(static_cast<float>(p.x()));
    raw.push_back(static_cast<float>(p.y()));
    raw.push_back(static_cast<float>(p.z()));
    raw.push_back(has_refl ? cloud.reflectance[i] : 0.0f);
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size() * sizeof(float)));
}

// ---------------------------------------------------------------------------
// KITTI label files: 15 whitespace-separated fields per line, with an
// optional 16th score field for detections.
// ---------------------------------------------------------------------------

struct KittiLabel {
  std::string type;
  double truncation = 0.0;
  int occlusion = 0;
  double alpha = 0.0;
  double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;  // 2D box, pixels
  double h = 0.0, w = 0.0, l = 0.0;               // 3D size, meters
  double x = 0.0, y = 0.0, z = 0.0;  // bottom-face center, rect camera frame
  double rotation_y = 0.0;
  std::optional<double> score;
};

inline KittiLabel parse_label_line(const std::string& line) {
  std::istringstream iss(line);
  KittiLabel lb;
  std::vector<double> vals;
  if (!(iss >> lb.type))
    throw MalformedLine("label line is empty");
  double v;
  while (iss >> v) vals.push_back(v);
  if (vals.size() != 14 && vals.size() != 15)
    throw MalformedLine("label line for '" + lb.type + "' has " +
                        std::to_string(vals.size() + 1) +
                        " fields, expected 15 or 16");
  lb.truncation = vals[0];
  lb.occlusion = static_cast<int>(vals[1]);
  lb.alpha = vals[2];
  lb.x1 = vals[3];
  lb.y1 = vals[4];
  lb.x2 = vals[5];
  lb.y2 = vals[6];
  lb.h = vals[7];
  lb.w = vals[8];
  lb.l = vals[9];
  lb.x = vals[10];
  lb.y = vals[11];
  lb.z = vals[12];
  lb.rotation_y = vals[13];
  if (vals.size() == 15) lb.score = vals[14];
  return lb;
}

inline std::string format_label_line(const KittiLabel& lb) {
  std::ostringstream oss;
  oss << std::setprecision(17);
  oss << lb.type << ' ' << lb.truncation << ' ' << lb.occlusion << ' '
      << lb.alpha << ' ' << lb.x1 << ' ' << lb.y1 << ' ' << lb.x2 << ' '
      << lb.y2 << ' ' << lb.h << ' ' << lb.w << ' ' << lb.l << ' ' << lb.x
      << ' ' << lb.y << ' ' << lb.z << ' ' << lb.rotation_y;
  if (lb.score) oss << ' ' << *lb.score;
  return oss.str();
}

/// Camera-frame label -> velodyne Box3D. KITTI labels give the bottom
/// face center in the rectified camera frame; the geometric center sits
/// h/2 above it (camera y points down). Velodyne yaw is -ry - pi/2.
inline Box3D label_to_box3d(const KittiLabel& lb, const Calibration& calib) {
  const Eigen::Vector3d center_rect(lb.x, lb.y - lb.h / 2.0, lb.z);
  const Eigen::Vector3d center_velo = rect_to_velo_point(calib, center_rect);
  Box3D box;
  box.x = center_velo.x();
  box.y = center_velo.y();
  box.z = center_velo.z();
  box.l = lb.l;
  box.w = lb.w;
  box.h = lb.h;
  box.theta = wrap_to_pi(-lb.rotation_y - M_PI / 2.0);
  return box;
}

inline void box3d_to_label(const Box3D& box, const Calibration& calib,
                           KittiLabel& lb) {
  const Eigen::Vector3d center_rect = velo_to_rect_point(calib, box.center());
  lb.h = box.h;
  lb.w = box.w;
  lb.l = box.l;
  lb.x = center_rect.x();
  lb.y = center_rect.y() + box.h / 2.0;
  lb.z = center_rect.z();
  lb.rotation_y = wrap_to_pi(-box.theta - M_PI / 2.0);
}

inline Difficulty label_difficulty(const KittiLabel& lb) {
  if (lb.type == "DontCare") return Difficulty::ignored;
  return classify_difficulty(lb.y2 - lb.y1, lb.occlusion, lb.truncation);
}

inline GroundTruth label_to_ground_truth(const KittiLabel& lb,
                                         const Calibration& calib,
                                         int frame_id) {
  GroundTruth gt;
  gt.box2d = Box2D::from_corners(lb.x1, lb.y1, lb.x2, lb.y2);
  if (lb.type != "DontCare") gt.box3d = label_to_box3d(lb, calib);
  gt.difficulty = label_difficulty(lb);
  gt.frame_id = frame_id;
  return gt;
}

inline std::vector<KittiLabel> read_label_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("read_label_file: cannot open " + path.string());
  std::vector<KittiLabel> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    labels.push_back(parse_label_line(line));
  }
  return labels;
}

inline std::vector<GroundTruth> read_labels(const std::filesystem::path& path,
                                            const Calibration& calib,
                                            int frame_id = 0) {
  std::vector<GroundTruth> out;
  for (const auto& lb : read_label_file(path))
    out.push_back(label_to_ground_truth(lb, calib, frame_id));
  return out;
}

inline std::vector<Detection> read_detections(
    const std::filesystem::path& path, const Calibration& calib,
    int frame_id = 0) {
  std::vector<Detection> out;
  for (const auto& lb : read_label_file(path)) {
    Detection det;
    det.box2d = Box2D::from_corners(lb.x1, lb.y1, lb.x2, lb.y2);
    det.box3d = label_to_box3d(lb, calib);
    det.score = lb.score.value_or(1.0);
    det.frame_id = frame_id;
    out.push_back(det);
  }
  return out;
}

inline void write_label_file(const std::vector<KittiLabel>& labels,
                             const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("write_label_file: cannot open " + path.string());
  for (const auto& lb : labels) out << format_label_line(lb) << '\n';
}

// ---------------------------------------------------------------------------
// Per-point float32 arrays (foreground scores), same order as the cloud.
// ---------------------------------------------------------------------------

inline std::vector<float> read_scores(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("read_scores: cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  if (bytes % 4 != 0)
    throw TruncatedFile("read_scores: " + path.string() +
                        " size is not a multiple of 4");
  std::vector<float> scores(bytes / 4);
  in.read(reinterpret_cast<char*>(scores.data()),
          static_cast<std::streamsize>(bytes));
  return scores;
}

inline void write_scores(const std::vector<float>& scores,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("write_scores: cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(scores.data()),
            static_cast<std::streamsize>(scores.size() * sizeof(float)));
}

// ---------------------------------------------------------------------------
// Disparity maps. Two formats:
//  - 16-bit grayscale PNG, disparity = value / 256.0, 0 invalid
//  - raw float32 grid: magic "DSPF", u32 width, u32 height, f32 data
// ---------------------------------------------------------------------------

inline DisparityMap read_disparity_f32(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("read_disparity_f32: cannot open " + path.string());
  char magic[4];
  std::uint32_t w = 0, h = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&w), 4);
  in.read(reinterpret_cast<char*>(&h), 4);
  if (!in || std::string(magic, 4) != "DSPF")
    throw TruncatedFile("read_disparity_f32: bad header in " + path.string());
  DisparityMap disp = DisparityMap::zeros(static_cast<int>(w),
                                          static_cast<int>(h));
  std::vector<float> raw(disp.data.size());
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size() * sizeof(float)));
  if (!in)
    throw TruncatedFile("read_disparity_f32: short read in " + path.string());
  std::copy(raw.begin(), raw.end(), disp.data.begin());
  return disp;
}

inline void write_disparity_f32(const DisparityMap& disp,
                                const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("write_disparity_f32: cannot open " + path.string());
  const std::uint32_t w = static_cast<std::uint32_t>(disp.width);
  const std::uint32_t h = static_cast<std::uint32_t>(disp.height);
  out.write("DSPF", 4);
  out.write(reinterpret_cast<const char*>(&w), 4);
  out.write(reinterpret_cast<const char*>(&h), 4);
  std::vector<float> raw(disp.data.begin(), disp.data.end());
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size() * sizeof(float)));
}

inline DisparityMap read_disparity_png(const std::filesystem::path& path) {
  std::FILE* fp = std::fopen(path.string().c_str(), "rb");
  if (!fp) throw Error("read_disparity_png: cannot open " + path.string());
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw MalformedLine("read_disparity_png: libpng failed on " +
                        path.string());
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth != 16 || color != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw MalformedLine("read_disparity_png: " + path.string() +
                        " is not 16-bit grayscale");
  }
  png_set_swap(png);  // PNG stores big-endian samples
  std::vector<std::uint16_t> row(static_cast<std::size_t>(width));
  DisparityMap disp = DisparityMap::zeros(width, height);
  for (int y = 0; y < height; ++y) {
    png_read_row(png, reinterpret_cast<png_bytep>(row.data()), nullptr);
    for (int x = 0; x < width; ++x)
      disp.at(x, y) = static_cast<double>(row[x]) / 256.0;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return disp;
}

inline void write_disparity_png(const DisparityMap& disp,
                                const std::filesystem::path& path) {
  std::FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw Error("write_disparity_png: cannot open " + path.string());
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw Error("write_disparity_png: libpng failed on " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(disp.width),
               static_cast<png_uint_32>(disp.height), 16, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_set_swap(png);
  std::vector<std::uint16_t> row(static_cast<std::size_t>(disp.width));
  for (int y = 0; y < disp.height; ++y) {
    for (int x = 0; x < disp.width; ++x) {
      const double scaled = std::round(disp.at(x, y) * 256.0);
      row[x] = static_cast<std::uint16_t>(std::clamp(scaled, 0.0, 65535.0));
    }
    png_write_row(png, reinterpret_cast<png_bytep>(row.data()));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

/// Reads a disparity file, dispatching on the extension (.png or .f32).
inline DisparityMap read_disparity(const std::filesystem::path& path) {
  return path.extension() == ".png" ? read_disparity_png(path)
                                    : read_disparity_f32(path);
}

// ---------------------------------------------------------------------------
// Frame bundles.
// ---------------------------------------------------------------------------

/// Everything loaded for one frame. Immutable value after load.
struct FrameBundle {
  PointCloud cloud;
  Calibration calib;
  std::vector<GroundTruth> labels;
  std::optional<DisparityMap> disparity;
  std::optional<std::vector<float>> point_scores;
  int frame_id = 0;
};

inline std::string frame_name_id(int frame_id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", frame_id);
  return buf;
}

inline Calibration read_calib(const std::filesystem::path& path,
                              int camera_index = 2) {
  std::ifstream in(path);
  if (!in) throw Error("read_calib: cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_kitti_calib(text.str(), camera_index);
}

/// Loads one frame from a KITTI-style directory layout:
/// root/{velodyne,calib,label_2,disparity,scores}/NNNNNN.*
inline FrameBundle load_frame(const std::filesystem::path& root, int frame_id,
                              int camera_index = 2) {
  namespace fs = std::filesystem;
  FrameBundle bundle;
  bundle.frame_id = frame_id;
  const std::string name = frame_name_id(frame_id);
  bundle.calib = read_calib(root / "calib" / (name + ".txt"), camera_index);
  bundle.cloud = read_velodyne(root / "velodyne" / (name + ".bin"));
  const fs::path label_path = root / "label_2" / (name + ".txt");
  if (fs::exists(label_path))
    bundle.labels = read_labels(label_path, bundle.calib, frame_id);
  for (const char* ext : {".f32", ".png"}) {
    const fs::path disp_path = root / "disparity" / (name + ext);
    if (fs::exists(disp_path)) {
      bundle.disparity = read_disparity(disp_path);
      break;
    }
  }
  const fs::path score_path = root / "scores" / (name + ".f32");
  if (fs::exists(score_path)) {
    bundle.point_scores = read_scores(score_path);
    if (bundle.point_scores->size() != bundle.cloud.size())
      throw LengthMismatch("load_frame: score count " +
                           std::to_string(bundle.point_scores->size()) +
                           " does not match cloud size " +
                           std::to_string(bundle.cloud.size()));
  }
  return bundle;
}

}  // namespace fusegeom
