// Batch front end over the fusegeom library: per-frame pipelines plus
// aggregate evaluation, all deterministic for a given (inputs, flags, seed).
//
// Exit codes: 0 success, 2 missing input, 3 malformed input,
// 4 partial degradation (a stage was skipped but the run finished).

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "fusegeom/fusegeom.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fusegeom;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitMissing = 2;
constexpr int kExitMalformed = 3;
constexpr int kExitDegraded = 4;

/// Input path that should exist but does not; mapped to exit code 2.
struct MissingInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const fs::path& require_exists(const fs::path& p) {
  if (!fs::exists(p)) throw MissingInput("missing input: " + p.string());
  return p;
}

std::string fmt(double v) {
  std::ostringstream oss;
  oss << std::setprecision(17) << v;
  return oss.str();
}

/// Writes via a temp file in the same directory, then renames into place.
void atomic_write(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << content;
  }
  fs::rename(tmp, path);
}

struct GlobalOpts {
  int jobs = 1;
  std::uint64_t seed = 0;
  int camera = 2;
};

json base_manifest(const std::string& command, const GlobalOpts& g) {
  json j;
  j["command"] = command;
  j["jobs"] = g.jobs;
  j["seed"] = g.seed;
  j["camera"] = g.camera;
  return j;
}

void write_manifest(const fs::path& dir, const json& j) {
  atomic_write(dir / "manifest.json", j.dump(2) + "\n");
}

/// Bounded worker pool over frame ids; no shared mutable state in `fn`
/// beyond what the caller synchronizes. First exception wins.
template <typename Fn>
void for_each_frame(const std::vector<int>& frames, int jobs, Fn&& fn) {
  const std::size_t workers = std::max<std::size_t>(
      1, std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)),
                               frames.size()));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= frames.size()) return;
      try {
        fn(frames[i]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i + 1 < workers; ++i) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::mutex print_mutex;

void print_line(const std::string& line) {
  std::lock_guard<std::mutex> lock(print_mutex);
  std::cout << line << '\n';
}

/// Frame ids found in a directory by file stem (NNNNNN.ext), sorted.
std::vector<int> list_frame_ids(const fs::path& dir, const std::string& ext) {
  std::vector<int> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ext) continue;
    try {
      ids.push_back(std::stoi(entry.path().stem().string()));
    } catch (const std::exception&) {
      // non-numeric stems are foreign files, not frames
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

struct FrameSelect {
  std::vector<int> explicit_ids;
  int count = 0;

  std::vector<int> resolve(const fs::path& detect_dir,
                           const std::string& detect_ext) const {
    if (!explicit_ids.empty()) return explicit_ids;
    if (count > 0) {
      std::vector<int> ids(static_cast<std::size_t>(count));
      std::iota(ids.begin(), ids.end(), 0);
      return ids;
    }
    require_exists(detect_dir);
    return list_frame_ids(detect_dir, detect_ext);
  }
};

void add_frame_select(CLI::App* cmd, FrameSelect& sel) {
  cmd->add_option("--frame", sel.explicit_ids, "explicit frame id(s)");
  cmd->add_option("--frames", sel.count,
                  "number of frames, ids 0..N-1 (default: scan the dataset)");
}

// ---------------------------------------------------------------------------
// SVG line plot from (x, y) samples. y axis fixed to [0, 1].
// ---------------------------------------------------------------------------

std::string svg_plot(const std::vector<double>& xs,
                     const std::vector<double>& ys, const std::string& title,
                     const std::string& xlabel, const std::string& ylabel) {
  const double width = 640.0, height = 480.0;
  const double ml = 70.0, mr = 20.0, mt = 40.0, mb = 60.0;
  double x_lo = 0.0, x_hi = 1.0;
  if (!xs.empty()) {
    x_lo = *std::min_element(xs.begin(), xs.end());
    x_hi = *std::max_element(xs.begin(), xs.end());
    if (x_hi - x_lo < 1e-12) {
      x_lo -= 0.5;
      x_hi += 0.5;
    }
  }
  const double y_lo = 0.0, y_hi = 1.0;
  auto px = [&](double x) {
    return ml + (x - x_lo) / (x_hi - x_lo) * (width - ml - mr);
  };
  auto py = [&](double y) {
    return height - mb - (y - y_lo) / (y_hi - y_lo) * (height - mt - mb);
  };
  std::ostringstream svg;
  svg << std::setprecision(10);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\">\n";
  svg << "<rect width=\"" << width << "\" height=\"" << height
      << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"16\">" << title
      << "</text>\n";
  // Axes.
  svg << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\""
      << width - mr << "\" y2=\"" << height - mb
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
      << "\" y2=\"" << height - mb << "\" stroke=\"black\"/>\n";
  // Tick labels at the axis extremes.
  auto tick = [&](double x, double y, const std::string& text,
                  const char* anchor) {
    svg << "<text x=\"" << x << "\" y=\"" << y << "\" text-anchor=\"" << anchor
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << text
        << "</text>\n";
  };
  std::ostringstream lo, hi;
  lo << std::setprecision(6) << x_lo;
  hi << std::setprecision(6) << x_hi;
  tick(ml, height - mb + 18, lo.str(), "middle");
  tick(width - mr, height - mb + 18, hi.str(), "middle");
  tick(ml - 8, height - mb + 4, "0", "end");
  tick(ml - 8, mt + 4, "1", "end");
  tick(width / 2, height - 16, xlabel, "middle");
  svg << "<text x=\"18\" y=\"" << height / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"12\" transform=\"rotate(-90 18 " << height / 2 << ")\">"
      << ylabel << "</text>\n";
  if (!xs.empty()) {
    svg << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" "
        << "points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (i) svg << ' ';
      svg << px(xs[i]) << ',' << py(ys[i]);
    }
    svg << "\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthOpts {
  std::string out;
  int frames = 1;
  int num_boxes = 3;
  double density = 60.0;
  double noise = 0.0;
  int ground_points = 2000;
};

int cmd_synth(const GlobalOpts& g, const SynthOpts& o) {
  SceneSpec spec;
  spec.rng_seed = g.seed;
  spec.num_boxes = o.num_boxes;
  spec.surface_density = o.density;
  spec.disparity_noise = o.noise;
  spec.ground_points = o.ground_points;
  spec.validate();
  const fs::path root = o.out;
  fs::create_directories(root);
  std::vector<int> frames(static_cast<std::size_t>(o.frames));
  std::iota(frames.begin(), frames.end(), 0);
  for_each_frame(frames, g.jobs, [&](int id) {
    write_frame_bundle(synth_scene(spec, id), root);
    print_line("frame " + frame_name_id(id) + ": written");
  });
  json manifest = base_manifest("synth", g);
  manifest["frames"] = o.frames;
  manifest["num_boxes"] = o.num_boxes;
  manifest["surface_density"] = o.density;
  manifest["disparity_noise"] = o.noise;
  manifest["ground_points"] = o.ground_points;
  write_manifest(root, manifest);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// project
// ---------------------------------------------------------------------------

struct ProjectOpts {
  std::string root;
  std::string out;
  FrameSelect frames;
};

int cmd_project(const GlobalOpts& g, const ProjectOpts& o) {
  const fs::path root = o.root;
  const fs::path out = o.out;
  const auto frames = o.frames.resolve(root / "velodyne", ".bin");
  for_each_frame(frames, g.jobs, [&](int id) {
    const std::string name = frame_name_id(id);
    const Calibration calib =
        read_calib(require_exists(root / "calib" / (name + ".txt")), g.camera);
    const PointCloud cloud =
        read_velodyne(require_exists(root / "velodyne" / (name + ".bin")));
    const auto projected = project_velo_to_image(calib, cloud);
    std::ostringstream csv;
    csv << "index,u,v,depth,visible\n";
    for (std::size_t i = 0; i < projected.size(); ++i) {
      const auto& ip = projected[i];
      csv << i << ',' << fmt(ip.u) << ',' << fmt(ip.v) << ',' << fmt(ip.depth)
          << ',' << (ip.behind_camera ? 0 : 1) << '\n';
    }
    atomic_write(out / (name + ".csv"), csv.str());
    print_line("frame " + name + ": " + std::to_string(projected.size()) +
               " points projected");
  });
  json manifest = base_manifest("project", g);
  manifest["frames"] = frames;
  write_manifest(out, manifest);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// pseudo
// ---------------------------------------------------------------------------

struct PseudoOpts {
  std::string root;
  std::string out;
  std::string boxes = "gt2d";  // gt2d | pred2d | gt3d | none
  std::string pred_dir;
  bool filter = true;
  bool rectify = true;
  int stride = 1;
  int filter_k = 20;
  double filter_sigma = 1.0;
  int rectify_k = 5;
  FrameSelect frames;
};

int cmd_pseudo(const GlobalOpts& g, const PseudoOpts& o) {
  const fs::path root = o.root;
  const fs::path out = o.out;
  const auto frames = o.frames.resolve(root / "velodyne", ".bin");
  std::atomic<bool> degraded{false};
  for_each_frame(frames, g.jobs, [&](int id) {
    const std::string name = frame_name_id(id);
    require_exists(root / "calib" / (name + ".txt"));
    require_exists(root / "velodyne" / (name + ".bin"));
    bool have_disp = false;
    for (const char* ext : {".f32", ".png"})
      have_disp = have_disp || fs::exists(root / "disparity" / (name + ext));
    if (!have_disp)
      throw MissingInput("missing input: " +
                         (root / "disparity" / name).string() + ".{f32,png}");
    const FrameBundle bundle = load_frame(root, id, g.camera);
    const PointCloud pseudo =
        disparity_to_points(bundle.calib, *bundle.disparity, o.stride);
    const std::size_t generated = pseudo.size();

    // Region clouds of pseudo points, with the matching real-LiDAR crop
    // used as the rectification reference.
    std::vector<std::pair<PointCloud, PointCloud>> regions;
    if (o.boxes == "none") {
      regions.emplace_back(pseudo, bundle.cloud);
    } else if (o.boxes == "gt3d") {
      for (const auto& gt : bundle.labels) {
        if (gt.difficulty == Difficulty::ignored) continue;
        regions.emplace_back(crop_points_by_box3d(pseudo, gt.box3d),
                             crop_points_by_box3d(bundle.cloud, gt.box3d));
      }
    } else {
      std::vector<Box2D> boxes2d;
      if (o.boxes == "gt2d") {
        for (const auto& gt : bundle.labels)
          if (gt.difficulty != Difficulty::ignored)
            boxes2d.push_back(gt.box2d);
      } else {  // pred2d
        const fs::path pred = require_exists(
            fs::path(o.pred_dir) / (name + ".txt"));
        for (const auto& det :
             read_detections(pred, bundle.calib, id))
          boxes2d.push_back(det.box2d);
      }
      for (const auto& box : boxes2d)
        regions.emplace_back(crop_points_by_box2d(bundle.calib, pseudo, box),
                             crop_points_by_box2d(bundle.calib, bundle.cloud,
                                                  box));
    }

    std::size_t cropped = 0, filtered_out = 0;
    std::vector<double> offsets;
    PointCloud augmented = bundle.cloud;
    for (auto& [region, reference] : regions) {
      cropped += region.size();
      PointCloud kept = region;
      if (o.filter && kept.size() > static_cast<std::size_t>(o.filter_k)) {
        auto result = statistical_filter(
            kept, static_cast<std::size_t>(o.filter_k), o.filter_sigma);
        filtered_out += result.removed.size();
        kept = std::move(result.kept);
      }
      if (o.rectify && !kept.empty()) {
        if (reference.empty()) {
          degraded = true;
          print_line("frame " + name +
                     ": rectification skipped, no reference points in region");
        } else {
          auto [shifted, info] = rectify_depth(
              bundle.calib, kept, reference,
              static_cast<std::size_t>(o.rectify_k));
          offsets.push_back(info.offset);
          kept = std::move(shifted);
        }
      }
      const bool has_refl = kept.reflectance.size() == kept.size();
      for (std::size_t i = 0; i < kept.size(); ++i)
        augmented.push_back(kept.points[i],
                            has_refl ? kept.reflectance[i] : 0.0f);
    }

    fs::create_directories(out);
    const fs::path target = out / (name + ".bin");
    const fs::path tmp = target.string() + ".tmp";
    write_velodyne(augmented, tmp);
    fs::rename(tmp, target);

    std::ostringstream msg;
    msg << "frame " << name << ": generated=" << generated
        << " cropped=" << cropped << " filtered=" << filtered_out
        << " final=" << augmented.size() << " offsets=[";
    for (std::size_t i = 0; i < offsets.size(); ++i)
      msg << (i ? " " : "") << fmt(offsets[i]);
    msg << "]";
    print_line(msg.str());
  });
  json manifest = base_manifest("pseudo", g);
  manifest["frames"] = frames;
  manifest["boxes"] = o.boxes;
  manifest["filter"] = o.filter;
  manifest["rectify"] = o.rectify;
  manifest["stride"] = o.stride;
  manifest["filter_k"] = o.filter_k;
  manifest["filter_sigma"] = o.filter_sigma;
  manifest["rectify_k"] = o.rectify_k;
  write_manifest(out, manifest);
  return degraded ? kExitDegraded : kExitOk;
}

// ---------------------------------------------------------------------------
// anchors
// ---------------------------------------------------------------------------

struct AnchorsOpts {
  std::string root;
  std::string out;
  double score_threshold = 0.5;
  std::size_t top_k = 9000;
  double nms_iou = 0.85;
  FrameSelect frames;
};

int cmd_anchors(const GlobalOpts& g, const AnchorsOpts& o) {
  const fs::path root = o.root;
  const fs::path out = o.out;
  const auto frames = o.frames.resolve(root / "velodyne", ".bin");
  for_each_frame(frames, g.jobs, [&](int id) {
    const std::string name = frame_name_id(id);
    require_exists(root / "calib" / (name + ".txt"));
    require_exists(root / "velodyne" / (name + ".bin"));
    require_exists(root / "scores" / (name + ".f32"));
    const FrameBundle bundle = load_frame(root, id, g.camera);
    const auto& scores = *bundle.point_scores;

    PointCloud fg;
    std::vector<float> fg_scores;
    for (std::size_t i = 0; i < bundle.cloud.size(); ++i)
      if (scores[i] > o.score_threshold) {
        fg.push_back(bundle.cloud.points[i]);
        fg_scores.push_back(scores[i]);
      }

    const SeedResult seeded = seed_anchors(fg, AnchorTemplate{}, bundle.calib);

    std::vector<Box2D> anchor_boxes2d;
    for (const auto& a : seeded.anchors) anchor_boxes2d.push_back(a.box2d);
    std::vector<Box2D> gt_boxes2d;
    for (const auto& gt : bundle.labels)
      if (gt.difficulty != Difficulty::ignored) gt_boxes2d.push_back(gt.box2d);
    const auto labels2d = label_2d_anchors(anchor_boxes2d, gt_boxes2d);

    // The 3D segmentation mask: the seeding point passed the score gate.
    std::vector<bool> fg3d(seeded.anchors.size());
    for (std::size_t i = 0; i < seeded.anchors.size(); ++i)
      fg3d[i] = fg_scores[seeded.anchors[i].source_point_index] >
                o.score_threshold;
    const auto joint = joint_filter(labels2d, fg3d);
    std::size_t fg2d = 0;
    for (const auto& lb : labels2d)
      if (lb == AnchorLabel::foreground) ++fg2d;

    std::vector<Box3D> joint_boxes;
    std::vector<double> joint_scores;
    for (std::size_t idx : joint) {
      joint_boxes.push_back(seeded.anchors[idx].box3d);
      joint_scores.push_back(
          fg_scores[seeded.anchors[idx].source_point_index]);
    }
    const auto selected =
        select_top_k(joint_boxes, joint_scores, o.top_k, o.nms_iou);

    std::ostringstream csv;
    csv << "x,y,z,l,w,h,theta,u_min,v_min,u_max,v_max,source_index,score\n";
    for (std::size_t sel : selected) {
      const JointAnchor& a = seeded.anchors[joint[sel]];
      csv << fmt(a.box3d.x) << ',' << fmt(a.box3d.y) << ',' << fmt(a.box3d.z)
          << ',' << fmt(a.box3d.l) << ',' << fmt(a.box3d.w) << ','
          << fmt(a.box3d.h) << ',' << fmt(a.box3d.theta) << ','
          << fmt(a.box2d.x_min()) << ',' << fmt(a.box2d.y_min()) << ','
          << fmt(a.box2d.x_max()) << ',' << fmt(a.box2d.y_max()) << ','
          << a.source_point_index << ',' << fmt(joint_scores[sel]) << '\n';
    }
    atomic_write(out / (name + ".csv"), csv.str());
    print_line("frame " + name + ": points=" +
               std::to_string(bundle.cloud.size()) +
               " foreground=" + std::to_string(fg.size()) +
               " seeded=" + std::to_string(seeded.anchors.size()) +
               " dropped=" + std::to_string(seeded.dropped_behind_camera) +
               " fg2d=" + std::to_string(fg2d) +
               " joint=" + std::to_string(joint.size()) +
               " selected=" + std::to_string(selected.size()));
  });
  json manifest = base_manifest("anchors", g);
  manifest["frames"] = frames;
  manifest["score_threshold"] = o.score_threshold;
  manifest["top_k"] = o.top_k;
  manifest["nms_iou"] = o.nms_iou;
  write_manifest(out, manifest);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// nms
// ---------------------------------------------------------------------------

struct NmsOpts {
  std::string in;
  std::string out;
  std::string calib;
  double iou = 0.85;
  std::size_t top_k = 0;  // 0 = unlimited
};

int cmd_nms(const GlobalOpts& g, const NmsOpts& o) {
  const Calibration calib =
      o.calib.empty() ? synthetic_calibration()
                      : read_calib(require_exists(o.calib), g.camera);
  const auto labels = read_label_file(require_exists(o.in));
  std::vector<Box3D> boxes;
  std::vector<double> scores;
  for (const auto& lb : labels) {
    boxes.push_back(label_to_box3d(lb, calib));
    scores.push_back(lb.score.value_or(1.0));
  }
  const std::size_t budget =
      o.top_k == 0 ? boxes.size() : o.top_k;
  const auto kept = select_top_k(boxes, scores, budget, o.iou);
  std::ostringstream body;
  for (std::size_t idx : kept) body << format_label_line(labels[idx]) << '\n';
  atomic_write(o.out, body.str());
  json manifest = base_manifest("nms", g);
  manifest["iou"] = o.iou;
  manifest["top_k"] = o.top_k;
  manifest["kept"] = kept.size();
  write_manifest(fs::path(o.out).parent_path(), manifest);
  print_line("kept " + std::to_string(kept.size()) + " of " +
             std::to_string(labels.size()) + " boxes");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval / recall
// ---------------------------------------------------------------------------

Calibration calib_for_frame(const std::string& calib_dir, int id,
                            int camera) {
  if (calib_dir.empty()) return synthetic_calibration();
  return read_calib(
      require_exists(fs::path(calib_dir) / (frame_name_id(id) + ".txt")),
      camera);
}

struct EvalOpts {
  std::string dets;
  std::string gts;
  std::string calib;
  std::string out;
  std::string mode = "3d";  // 2d | bev | 3d
  std::string interp = "40";
  double threshold = 0.7;
};

EvalMode parse_mode(const std::string& mode) {
  if (mode == "2d") return EvalMode::image2d;
  if (mode == "bev") return EvalMode::bev;
  return EvalMode::box3d;
}

int cmd_eval(const GlobalOpts& g, const EvalOpts& o) {
  require_exists(o.gts);
  require_exists(o.dets);
  const auto frames = list_frame_ids(o.gts, ".txt");
  std::vector<Detection> dets;
  std::vector<GroundTruth> gts;
  for (int id : frames) {
    const Calibration calib = calib_for_frame(o.calib, id, g.camera);
    const auto frame_gts =
        read_labels(fs::path(o.gts) / (frame_name_id(id) + ".txt"), calib, id);
    gts.insert(gts.end(), frame_gts.begin(), frame_gts.end());
    const fs::path det_path = fs::path(o.dets) / (frame_name_id(id) + ".txt");
    if (fs::exists(det_path)) {
      const auto frame_dets = read_detections(det_path, calib, id);
      dets.insert(dets.end(), frame_dets.begin(), frame_dets.end());
    }
  }

  const EvalMode mode = parse_mode(o.mode);
  const Interpolation interp =
      o.interp == "11" ? Interpolation::p11 : Interpolation::p40;
  const fs::path out = o.out;
  std::ostringstream ap_csv;
  ap_csv << "difficulty,ap,defined\n";
  const char* names[3] = {"easy", "moderate", "hard"};
  const Difficulty levels[3] = {Difficulty::easy, Difficulty::moderate,
                                Difficulty::hard};
  for (int i = 0; i < 3; ++i) {
    const auto leveled = gts_at_difficulty(gts, levels[i]);
    PrCurve curve;
    const ApResult result =
        compute_ap(dets, leveled, o.threshold, mode, interp, &curve);
    ap_csv << names[i] << ',' << fmt(result.ap) << ','
           << (result.defined ? 1 : 0) << '\n';
    std::ostringstream pr_csv;
    pr_csv << "recall,precision\n";
    for (std::size_t j = 0; j < curve.recall.size(); ++j)
      pr_csv << fmt(curve.recall[j]) << ',' << fmt(curve.precision[j]) << '\n';
    atomic_write(out / ("pr_" + std::string(names[i]) + ".csv"),
                 pr_csv.str());
    atomic_write(
        out / ("pr_" + std::string(names[i]) + ".svg"),
        svg_plot(curve.recall, curve.precision,
                 "Precision-recall (" + std::string(names[i]) + ")", "recall",
                 "precision"));
    print_line(std::string(names[i]) + ": ap=" + fmt(result.ap));
  }
  atomic_write(out / "ap.csv", ap_csv.str());
  json manifest = base_manifest("eval", g);
  manifest["mode"] = o.mode;
  manifest["interpolation"] = o.interp;
  manifest["threshold"] = o.threshold;
  manifest["frames"] = frames;
  write_manifest(out, manifest);
  return kExitOk;
}

struct RecallOpts {
  std::string proposals;
  std::string gts;
  std::string calib;
  std::string out;
  std::string mode = "3d";
  double threshold = 0.5;
  std::vector<std::size_t> k_values = {50, 100, 150, 200, 250, 300};
};

int cmd_recall(const GlobalOpts& g, const RecallOpts& o) {
  require_exists(o.gts);
  require_exists(o.proposals);
  const auto frames = list_frame_ids(o.gts, ".txt");
  std::vector<Detection> proposals;
  std::vector<GroundTruth> gts;
  for (int id : frames) {
    const Calibration calib = calib_for_frame(o.calib, id, g.camera);
    const auto frame_gts =
        read_labels(fs::path(o.gts) / (frame_name_id(id) + ".txt"), calib, id);
    gts.insert(gts.end(), frame_gts.begin(), frame_gts.end());
    const fs::path prop_path =
        fs::path(o.proposals) / (frame_name_id(id) + ".txt");
    if (fs::exists(prop_path)) {
      const auto frame_props = read_detections(prop_path, calib, id);
      proposals.insert(proposals.end(), frame_props.begin(),
                       frame_props.end());
    }
  }
  std::vector<std::size_t> ks = o.k_values;
  std::sort(ks.begin(), ks.end());
  const auto recalls =
      recall_at_k(proposals, gts, o.threshold, ks, parse_mode(o.mode));
  std::ostringstream csv;
  csv << "k,recall\n";
  std::vector<double> xs;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    csv << ks[i] << ',' << fmt(recalls[i]) << '\n';
    xs.push_back(static_cast<double>(ks[i]));
    print_line("k=" + std::to_string(ks[i]) + ": recall=" + fmt(recalls[i]));
  }
  const fs::path out = o.out;
  atomic_write(out / "recall.csv", csv.str());
  atomic_write(out / "recall.svg",
               svg_plot(xs, recalls, "Recall vs proposal budget", "k",
                        "recall"));
  json manifest = base_manifest("recall", g);
  manifest["mode"] = o.mode;
  manifest["threshold"] = o.threshold;
  manifest["k"] = ks;
  manifest["frames"] = frames;
  write_manifest(out, manifest);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LiDAR-camera fusion geometry toolkit"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.set_config("--config", "", "config file (INI), overridden by flags");
  app.add_option("--jobs", g.jobs, "worker threads for per-frame stages")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "RNG seed for synthetic data");
  app.add_option("--camera", g.camera, "camera index to bind (KITTI P matrix)")
      ->check(CLI::Range(0, 3));

  SynthOpts synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate synthetic frames");
  synth_cmd->add_option("--out", synth.out, "output dataset root")->required();
  synth_cmd->add_option("--frames", synth.frames, "number of frames")
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--num-boxes", synth.num_boxes, "boxes per frame");
  synth_cmd->add_option("--density", synth.density,
                        "surface points per square meter");
  synth_cmd->add_option("--noise", synth.noise, "disparity noise stddev, px");
  synth_cmd->add_option("--ground-points", synth.ground_points,
                        "ground clutter points per frame");

  ProjectOpts project;
  auto* project_cmd =
      app.add_subcommand("project", "project clouds to image coordinates");
  project_cmd->add_option("--root", project.root, "dataset root")->required();
  project_cmd->add_option("--out", project.out, "output directory")
      ->required();
  add_frame_select(project_cmd, project.frames);

  PseudoOpts pseudo;
  auto* pseudo_cmd =
      app.add_subcommand("pseudo", "densify clouds with pseudo-LiDAR points");
  pseudo_cmd->add_option("--root", pseudo.root, "dataset root")->required();
  pseudo_cmd->add_option("--out", pseudo.out, "output directory")->required();
  pseudo_cmd
      ->add_option("--boxes", pseudo.boxes, "crop regions: gt2d|pred2d|gt3d|none")
      ->check(CLI::IsMember({"gt2d", "pred2d", "gt3d", "none"}));
  pseudo_cmd->add_option("--pred", pseudo.pred_dir,
                         "predicted 2D boxes directory (for --boxes pred2d)");
  pseudo_cmd->add_flag("--filter,!--no-filter", pseudo.filter,
                       "statistical outlier removal");
  pseudo_cmd->add_flag("--rectify,!--no-rectify", pseudo.rectify,
                       "depth rectification against the real cloud");
  pseudo_cmd->add_option("--stride", pseudo.stride, "disparity pixel stride")
      ->check(CLI::PositiveNumber);
  pseudo_cmd->add_option("--filter-k", pseudo.filter_k,
                         "neighbors for outlier removal");
  pseudo_cmd->add_option("--filter-sigma", pseudo.filter_sigma,
                         "sigma multiplier for outlier removal");
  pseudo_cmd->add_option("--rectify-k", pseudo.rectify_k,
                         "neighbors for rectification");
  add_frame_select(pseudo_cmd, pseudo.frames);

  AnchorsOpts anchors;
  auto* anchors_cmd =
      app.add_subcommand("anchors", "seed, label and select joint anchors");
  anchors_cmd->add_option("--root", anchors.root, "dataset root")->required();
  anchors_cmd->add_option("--out", anchors.out, "output directory")
      ->required();
  anchors_cmd->add_option("--score-threshold", anchors.score_threshold,
                          "foreground score gate");
  anchors_cmd->add_option("--top-k", anchors.top_k, "proposal budget");
  anchors_cmd->add_option("--nms-iou", anchors.nms_iou,
                          "BEV IoU threshold for NMS");
  add_frame_select(anchors_cmd, anchors.frames);

  NmsOpts nms;
  auto* nms_cmd =
      app.add_subcommand("nms", "suppress overlapping detections in a file");
  nms_cmd->add_option("--in", nms.in, "input label file")->required();
  nms_cmd->add_option("--out", nms.out, "output label file")->required();
  nms_cmd->add_option("--calib", nms.calib,
                      "calibration file (default: built-in synthetic)");
  nms_cmd->add_option("--iou", nms.iou, "BEV IoU threshold");
  nms_cmd->add_option("--top-k", nms.top_k, "keep at most k (0 = all)");

  EvalOpts eval;
  auto* eval_cmd = app.add_subcommand("eval", "average precision evaluation");
  eval_cmd->add_option("--dets", eval.dets, "detections directory")
      ->required();
  eval_cmd->add_option("--gts", eval.gts, "ground-truth directory")
      ->required();
  eval_cmd->add_option("--calib", eval.calib,
                       "per-frame calibration directory (default: synthetic)");
  eval_cmd->add_option("--out", eval.out, "output directory")->required();
  eval_cmd->add_option("--mode", eval.mode, "IoU mode: 2d|bev|3d")
      ->check(CLI::IsMember({"2d", "bev", "3d"}));
  eval_cmd->add_option("--interp", eval.interp, "interpolation: 11|40")
      ->check(CLI::IsMember({"11", "40"}));
  eval_cmd->add_option("--threshold", eval.threshold, "IoU threshold");

  RecallOpts recall;
  auto* recall_cmd =
      app.add_subcommand("recall", "recall versus proposal budget");
  recall_cmd->add_option("--proposals", recall.proposals,
                         "proposals directory")
      ->required();
  recall_cmd->add_option("--gts", recall.gts, "ground-truth directory")
      ->required();
  recall_cmd->add_option("--calib", recall.calib,
                         "per-frame calibration directory (default: synthetic)");
  recall_cmd->add_option("--out", recall.out, "output directory")->required();
  recall_cmd->add_option("--mode", recall.mode, "IoU mode: 2d|bev|3d")
      ->check(CLI::IsMember({"2d", "bev", "3d"}));
  recall_cmd->add_option("--threshold", recall.threshold, "IoU threshold");
  recall_cmd->add_option("--k", recall.k_values, "proposal budgets");

  // Let the global flags (--seed, --jobs, ...) appear after the
  // subcommand name as well.
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  int rc = kExitOk;
  synth_cmd->callback([&] { rc = cmd_synth(g, synth); });
  project_cmd->callback([&] { rc = cmd_project(g, project); });
  pseudo_cmd->callback([&] { rc = cmd_pseudo(g, pseudo); });
  anchors_cmd->callback([&] { rc = cmd_anchors(g, anchors); });
  nms_cmd->callback([&] { rc = cmd_nms(g, nms); });
  eval_cmd->callback([&] { rc = cmd_eval(g, eval); });
  recall_cmd->callback([&] { rc = cmd_recall(g, recall); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitMalformed;
  } catch (const MissingInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitMissing;
  } catch (const fusegeom::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitMalformed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitMalformed;
  }
  return rc;
}
