#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "test_helpers.hpp"

using namespace fusegeom;
namespace fs = std::filesystem;

namespace {

/// Fresh scratch directory per test run.
fs::path scratch_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("fusegeom_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("velodyne round trip") {
  const fs::path dir = scratch_dir("velo");
  std::mt19937_64 rng(211);
  std::uniform_real_distribution<float> unit(-80.0f, 80.0f);
  SECTION("bit-identical through write and read") {
    PointCloud cloud;
    for (int i = 0; i < 500; ++i)
      cloud.push_back({unit(rng), unit(rng), unit(rng)}, unit(rng));
    write_velodyne(cloud, dir / "a.bin");
    const PointCloud back = read_velodyne(dir / "a.bin");
    REQUIRE(back.size() == cloud.size());
    CHECK(back.frame == Frame::velodyne);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      // float-exact: doubles came from floats, so the cast is lossless
      CHECK(back.points[i].x() == cloud.points[i].x());
      CHECK(back.points[i].y() == cloud.points[i].y());
      CHECK(back.points[i].z() == cloud.points[i].z());
      CHECK(back.reflectance[i] == cloud.reflectance[i]);
    }
  }
  SECTION("empty file is an empty cloud") {
    std::ofstream(dir / "empty.bin").close();
    CHECK(read_velodyne(dir / "empty.bin").size() == 0);
  }
  SECTION("size not a multiple of 16 throws") {
    std::ofstream out(dir / "bad.bin", std::ios::binary);
    out.write("0123456789abcdefx", 17);
    out.close();
    CHECK_THROWS_AS(read_velodyne(dir / "bad.bin"), TruncatedFile);
  }
  SECTION("missing file throws") {
    CHECK_THROWS_AS(read_velodyne(dir / "nope.bin"), Error);
  }
}

TEST_CASE("label lines") {
  SECTION("parse a well-formed detection line") {
    const auto lb = parse_label_line(
        "Car 0.1 1 -1.5 100 150 300 250 1.5 1.6 3.9 2.0 1.5 25.0 0.3 0.92");
    CHECK(lb.type == "Car");
    CHECK(lb.truncation == Catch::Approx(0.1));
    CHECK(lb.occlusion == 1);
    CHECK(lb.x1 == 100.0);
    CHECK(lb.y2 == 250.0);
    CHECK(lb.h == Catch::Approx(1.5));
    CHECK(lb.rotation_y == Catch::Approx(0.3));
    REQUIRE(lb.score.has_value());
    CHECK(*lb.score == Catch::Approx(0.92));
  }
  SECTION("15-field line has no score") {
    const auto lb = parse_label_line(
        "Pedestrian 0 0 0 1 2 3 4 5 6 7 8 9 10 11");
    CHECK_FALSE(lb.score.has_value());
  }
  SECTION("wrong field counts throw") {
    CHECK_THROWS_AS(parse_label_line(""), MalformedLine);
    CHECK_THROWS_AS(parse_label_line("Car 1 2 3"), MalformedLine);
    CHECK_THROWS_AS(
        parse_label_line("Car 0 0 0 1 2 3 4 5 6 7 8 9 10 11 12 13"),
        MalformedLine);
  }
  SECTION("format then parse round trips within 1e-9") {
    std::mt19937_64 rng(223);
    std::uniform_real_distribution<double> unit(-50.0, 50.0);
    for (int i = 0; i < 100; ++i) {
      KittiLabel lb;
      lb.type = "Car";
      lb.truncation = std::abs(unit(rng)) / 100.0;
      lb.occlusion = 2;
      lb.alpha = unit(rng) / 20.0;
      lb.x1 = unit(rng); lb.y1 = unit(rng);
      lb.x2 = lb.x1 + std::abs(unit(rng));
      lb.y2 = lb.y1 + std::abs(unit(rng));
      lb.h = 1.0 + std::abs(unit(rng)) / 50.0;
      lb.w = 1.0 + std::abs(unit(rng)) / 50.0;
      lb.l = 1.0 + std::abs(unit(rng)) / 50.0;
      lb.x = unit(rng); lb.y = unit(rng); lb.z = std::abs(unit(rng)) + 1.0;
      lb.rotation_y = unit(rng) / 20.0;
      lb.score = std::abs(unit(rng)) / 50.0;
      const KittiLabel back = parse_label_line(format_label_line(lb));
      CHECK(back.type == lb.type);
      CHECK(std::abs(back.x - lb.x) < 1e-9);
      CHECK(std::abs(back.z - lb.z) < 1e-9);
      CHECK(std::abs(back.rotation_y - lb.rotation_y) < 1e-9);
      CHECK(std::abs(*back.score - *lb.score) < 1e-9);
    }
  }
}

TEST_CASE("label <-> box conversions") {
  const Calibration calib = synthetic_calibration();
  SECTION("label_to_box3d lifts the bottom-face center") {
    KittiLabel lb;
    lb.h = 1.5;
    lb.w = 1.6;
    lb.l = 3.9;
    lb.x = 2.0;
    lb.y = 1.6;  // bottom face, camera y points down
    lb.z = 25.0;
    lb.rotation_y = 0.0;
    const Box3D box = label_to_box3d(lb, calib);
    // Oracle: lift to the geometric center in rect coordinates, then map.
    const Eigen::Vector3d expect =
        rect_to_velo_point(calib, {2.0, 1.6 - 0.75, 25.0});
    CHECK((box.center() - expect).norm() < 1e-12);
    CHECK(box.theta == Catch::Approx(wrap_to_pi(-M_PI / 2.0)));
  }
  SECTION("box3d_to_label inverts label_to_box3d") {
    std::mt19937_64 rng(227);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
      KittiLabel lb;
      lb.type = "Car";
      lb.h = 1.0 + unit(rng);
      lb.w = 1.0 + unit(rng);
      lb.l = 3.0 + unit(rng);
      lb.x = -20.0 + 40.0 * unit(rng);
      lb.y = 1.0 + unit(rng);
      lb.z = 5.0 + 50.0 * unit(rng);
      lb.rotation_y = wrap_to_pi(-M_PI + 2.0 * M_PI * unit(rng));
      const Box3D box = label_to_box3d(lb, calib);
      KittiLabel back = lb;
      box3d_to_label(box, calib, back);
      CHECK(std::abs(back.x - lb.x) < 1e-9);
      CHECK(std::abs(back.y - lb.y) < 1e-9);
      CHECK(std::abs(back.z - lb.z) < 1e-9);
      CHECK(std::abs(wrap_to_pi(back.rotation_y - lb.rotation_y)) < 1e-9);
    }
  }
  SECTION("difficulty lookup and DontCare handling") {
    KittiLabel lb;
    lb.type = "Car";
    lb.y1 = 100.0;
    lb.y2 = 130.0;  // 30 px tall
    lb.occlusion = 1;
    lb.truncation = 0.2;
    CHECK(label_difficulty(lb) == Difficulty::moderate);
    lb.type = "DontCare";
    CHECK(label_difficulty(lb) == Difficulty::ignored);
    const GroundTruth gt = label_to_ground_truth(lb, calib, 7);
    CHECK(gt.difficulty == Difficulty::ignored);
    CHECK(gt.frame_id == 7);
  }
}

TEST_CASE("score files") {
  const fs::path dir = scratch_dir("scores");
  SECTION("round trip") {
    const std::vector<float> scores = {0.0f, 1.0f, 0.25f, 1e-6f};
    write_scores(scores, dir / "s.f32");
    CHECK(read_scores(dir / "s.f32") == scores);
  }
  SECTION("bad size throws") {
    std::ofstream out(dir / "bad.f32", std::ios::binary);
    out.write("abc", 3);
    out.close();
    CHECK_THROWS_AS(read_scores(dir / "bad.f32"), TruncatedFile);
  }
}

TEST_CASE("disparity maps") {
  const fs::path dir = scratch_dir("disp");
  std::mt19937_64 rng(229);
  std::uniform_real_distribution<float> unit(0.0f, 150.0f);
  DisparityMap disp = DisparityMap::zeros(64, 48);
  // float-representable values, so the f32 file round trip stays exact
  for (double& v : disp.data) v = unit(rng);

  SECTION("f32 round trip is exact") {
    write_disparity_f32(disp, dir / "d.f32");
    const DisparityMap back = read_disparity_f32(dir / "d.f32");
    REQUIRE(back.width == disp.width);
    REQUIRE(back.height == disp.height);
    CHECK(back.data == disp.data);
  }
  SECTION("png round trip is exact up to the 1/256 quantization") {
    write_disparity_png(disp, dir / "d.png");
    const DisparityMap back = read_disparity_png(dir / "d.png");
    REQUIRE(back.width == disp.width);
    REQUIRE(back.height == disp.height);
    for (std::size_t i = 0; i < disp.data.size(); ++i)
      CHECK(std::abs(back.data[i] - disp.data[i]) <= 0.5 / 256.0 + 1e-6);
  }
  SECTION("read_disparity dispatches on the extension") {
    write_disparity_f32(disp, dir / "e.f32");
    write_disparity_png(disp, dir / "e.png");
    CHECK(read_disparity(dir / "e.f32").data == disp.data);
    CHECK(read_disparity(dir / "e.png").width == disp.width);
  }
  SECTION("bad magic throws") {
    std::ofstream out(dir / "bad.f32", std::ios::binary);
    out.write("NOPE\0\0\0\0\0\0\0\0", 12);
    out.close();
    CHECK_THROWS_AS(read_disparity_f32(dir / "bad.f32"), TruncatedFile);
  }
}

TEST_CASE("frame_name_id pads to six digits") {
  CHECK(frame_name_id(0) == "000000");
  CHECK(frame_name_id(42) == "000042");
  CHECK(frame_name_id(123456) == "123456");
}

TEST_CASE("synthetic scenes") {
  SceneSpec spec;
  spec.rng_seed = 31;
  SECTION("deterministic per (seed, frame)") {
    const FrameBundle a = synth_scene(spec, 3);
    const FrameBundle b = synth_scene(spec, 3);
    REQUIRE(a.cloud.size() == b.cloud.size());
    for (std::size_t i = 0; i < a.cloud.size(); ++i)
      CHECK((a.cloud.points[i] - b.cloud.points[i]).norm() == 0.0);
    CHECK(a.disparity->data == b.disparity->data);
    CHECK(*a.point_scores == *b.point_scores);

    SceneSpec other = spec;
    other.rng_seed = 32;
    const FrameBundle c = synth_scene(other, 3);
    bool differs = c.cloud.size() != a.cloud.size();
    for (std::size_t i = 0; !differs && i < a.cloud.size(); ++i)
      differs = (a.cloud.points[i] - c.cloud.points[i]).norm() != 0.0;
    CHECK(differs);
  }
  SECTION("boxes are BEV-disjoint and labeled consistently") {
    const FrameBundle bundle = synth_scene(spec, 0);
    REQUIRE(bundle.labels.size() == static_cast<std::size_t>(spec.num_boxes));
    for (std::size_t i = 0; i < bundle.labels.size(); ++i)
      for (std::size_t j = i + 1; j < bundle.labels.size(); ++j)
        CHECK(bev_intersection_area(bundle.labels[i].box3d,
                                    bundle.labels[j].box3d) == 0.0);
    for (const auto& gt : bundle.labels) {
      const Box2D env = project_box3d_to_box2d(
          bundle.calib, gt.box3d,
          std::make_pair(kSynthImageWidth, kSynthImageHeight));
      CHECK(std::abs(env.x - gt.box2d.x) < 1e-9);
      CHECK(std::abs(env.l - gt.box2d.l) < 1e-9);
    }
  }
  SECTION("score-1 points lie on a box surface, score-0 points outside") {
    const FrameBundle bundle = synth_scene(spec, 1);
    REQUIRE(bundle.point_scores->size() == bundle.cloud.size());
    for (std::size_t i = 0; i < bundle.cloud.size(); ++i) {
      bool inside = false;
      for (const auto& gt : bundle.labels)
        if (point_in_box3d(bundle.cloud.points[i], gt.box3d, 1e-9))
          inside = true;
      CHECK(inside == ((*bundle.point_scores)[i] == 1.0f));
    }
  }
  SECTION("calibration text round trips through the KITTI parser") {
    const Calibration calib = synthetic_calibration();
    const Calibration back =
        parse_kitti_calib(calibration_to_kitti_text(calib), 2);
    CHECK(back.f_u == Catch::Approx(calib.f_u));
    CHECK(back.c_v == Catch::Approx(calib.c_v));
    CHECK(back.b_x == Catch::Approx(calib.b_x));
    REQUIRE(back.stereo_baseline.has_value());
    CHECK(*back.stereo_baseline == Catch::Approx(*calib.stereo_baseline));
    CHECK(back.velo_to_cam_rotation.isApprox(calib.velo_to_cam_rotation));
    CHECK(back.velo_to_cam_translation.isApprox(calib.velo_to_cam_translation));
  }
  SECTION("rendered disparity inverts onto the box surfaces") {
    const FrameBundle bundle = synth_scene(spec, 2);
    const PointCloud pseudo =
        disparity_to_points(bundle.calib, *bundle.disparity, 4);
    REQUIRE(pseudo.size() > 100);
    std::size_t on_surface = 0;
    for (const auto& p : pseudo.points) {
      double best = 1e18;
      for (const auto& gt : bundle.labels) {
        // Signed distance to the box in its canonical frame.
        const Eigen::Vector3d q =
            rot_z(-gt.box3d.theta) * (p - gt.box3d.center());
        const double d = std::max({std::abs(q.x()) - gt.box3d.l / 2.0,
                                   std::abs(q.y()) - gt.box3d.w / 2.0,
                                   std::abs(q.z()) - gt.box3d.h / 2.0});
        best = std::min(best, std::abs(d));
      }
      if (best < 1e-6) ++on_surface;
    }
    CHECK(on_surface == pseudo.size());
  }
  SECTION("write_frame_bundle round trips through load_frame") {
    const fs::path root = scratch_dir("bundle");
    const FrameBundle bundle = synth_scene(spec, 5);
    write_frame_bundle(bundle, root);
    const FrameBundle back = load_frame(root, 5);
    CHECK(back.frame_id == 5);
    REQUIRE(back.cloud.size() == bundle.cloud.size());
    // the .bin file stores float32 coordinates
    for (std::size_t i = 0; i < back.cloud.size(); ++i)
      for (int axis = 0; axis < 3; ++axis)
        CHECK(back.cloud.points[i][axis] ==
              static_cast<double>(
                  static_cast<float>(bundle.cloud.points[i][axis])));
    REQUIRE(back.labels.size() == bundle.labels.size());
    for (std::size_t i = 0; i < back.labels.size(); ++i) {
      CHECK((back.labels[i].box3d.center() -
             bundle.labels[i].box3d.center()).norm() < 1e-9);
      CHECK(std::abs(wrap_to_pi(back.labels[i].box3d.theta -
                                bundle.labels[i].box3d.theta)) < 1e-9);
    }
    REQUIRE(back.disparity.has_value());
    REQUIRE(back.disparity->data.size() == bundle.disparity->data.size());
    // the f32 grid on disk quantizes the double-precision render
    for (std::size_t i = 0; i < back.disparity->data.size(); ++i)
      CHECK(back.disparity->data[i] ==
            static_cast<double>(static_cast<float>(bundle.disparity->data[i])));
    REQUIRE(back.point_scores.has_value());
    CHECK(*back.point_scores == *bundle.point_scores);
  }
  SECTION("invalid specs are rejected") {
    SceneSpec bad = spec;
    bad.num_boxes = -1;
    CHECK_THROWS_AS(synth_scene(bad), Error);
    bad = spec;
    bad.depth_min = 10.0;
    bad.depth_max = 5.0;
    CHECK_THROWS_AS(synth_scene(bad), Error);
  }
}
