#include <catch2/catch_amalgamated.hpp>

#include "test_helpers.hpp"

using namespace fusegeom;

namespace {

PointCloud velo_cloud(std::vector<Eigen::Vector3d> pts) {
  PointCloud cloud;
  cloud.frame = Frame::velodyne;
  cloud.points = std::move(pts);
  return cloud;
}

}  // namespace

TEST_CASE("KdTree3 matches brute-force nearest neighbors") {
  std::mt19937_64 rng(73);
  std::uniform_real_distribution<double> unit(-10.0, 10.0);
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 500; ++i)
    pts.push_back({unit(rng), unit(rng), unit(rng)});
  const KdTree3 tree(pts);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Vector3d q(unit(rng), unit(rng), unit(rng));
    const std::size_t k = 1 + trial % 10;
    const auto nbrs = tree.knn(q, k);
    std::vector<double> dists;
    for (const auto& p : pts) dists.push_back((p - q).norm());
    std::sort(dists.begin(), dists.end());
    REQUIRE(nbrs.size() == k);
    for (std::size_t i = 0; i < k; ++i)
      CHECK(nbrs[i].distance == Catch::Approx(dists[i]).margin(1e-12));
  }
}

TEST_CASE("disparity_to_points") {
  const Calibration calib = synthetic_calibration();
  SECTION("closed-form depth at the principal point") {
    Calibration c;
    c.f_u = 720.0;
    c.f_v = 720.0;
    c.c_u = 300.0;
    c.c_v = 100.0;
    c.stereo_baseline = 0.54;
    DisparityMap disp = DisparityMap::zeros(600, 200);
    disp.at(300, 100) = 72.0f;
    const PointCloud cloud = disparity_to_points(c, disp);
    REQUIRE(cloud.size() == 1);
    // Identity extrinsics: velodyne equals rect frame here.
    CHECK(cloud.points[0].x() == Catch::Approx(c.b_x).margin(1e-12));
    CHECK(cloud.points[0].y() == Catch::Approx(0.0).margin(1e-12));
    CHECK(cloud.points[0].z() == Catch::Approx(720.0 * 0.54 / 72.0));
  }
  SECTION("all-zero disparity gives an empty cloud") {
    CHECK(disparity_to_points(calib, DisparityMap::zeros(64, 32)).empty());
  }
  SECTION("missing baseline throws") {
    Calibration c;
    c.stereo_baseline.reset();
    CHECK_THROWS_AS(disparity_to_points(c, DisparityMap::zeros(4, 4)),
                    MissingBaseline);
  }
  SECTION("disparity rendered from a plane inverts onto that plane") {
    // Plane of constant rect depth z0: every pixel gets f*b/z0.
    const double z0 = 14.0;
    DisparityMap disp = DisparityMap::zeros(200, 100);
    for (int v = 0; v < disp.height; ++v)
      for (int u = 0; u < disp.width; ++u)
        disp.at(u, v) =
            static_cast<float>(calib.f_u * *calib.stereo_baseline / z0);
    const PointCloud cloud = disparity_to_points(calib, disp);
    REQUIRE(cloud.size() == 200 * 100);
    const PointCloud rect = velo_to_rect(calib, cloud);
    for (const auto& p : rect.points)
      CHECK(std::abs(p.z() - z0) < 1e-6);
  }
}

TEST_CASE("crop_points_by_box2d") {
  const Calibration calib = synthetic_calibration();
  Box3D box;
  box.x = 20.0;
  box.z = -0.9;
  box.l = 3.9;
  box.w = 1.6;
  box.h = 1.5;
  const Box2D envelope = project_box3d_to_box2d(calib, box);
  SECTION("box-center point is kept, behind-camera point dropped") {
    const auto kept = crop_points_by_box2d(
        calib, velo_cloud({box.center(), {-20.0, 0.0, 0.0}}), envelope);
    REQUIRE(kept.size() == 1);
    CHECK(kept.points[0].isApprox(box.center()));
  }
  SECTION("equals the per-point project-and-test oracle") {
    std::mt19937_64 rng(79);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    PointCloud cloud;
    for (int i = 0; i < 500; ++i)
      cloud.push_back({70.0 * unit(rng) - 5.0, 40.0 * (unit(rng) - 0.5),
                       4.0 * unit(rng) - 3.0});
    const auto kept = crop_points_by_box2d(calib, cloud, envelope);
    std::size_t expect = 0;
    for (const auto& p : cloud.points) {
      const ImagePoint ip =
          project_rect_point(calib, velo_to_rect_point(calib, p));
      if (!ip.behind_camera && ip.u >= envelope.x_min() &&
          ip.u <= envelope.x_max() && ip.v >= envelope.y_min() &&
          ip.v <= envelope.y_max())
        ++expect;
    }
    CHECK(kept.size() == expect);
  }
}

TEST_CASE("crop_points_by_box3d") {
  std::mt19937_64 rng(83);
  const Box3D box = testutil::random_box3d(rng, 5.0);
  SECTION("center kept, far point dropped") {
    const auto kept = crop_points_by_box3d(
        velo_cloud({box.center(),
                    box.center() + Eigen::Vector3d(2.0 * box.l, 0, 0)}),
        box);
    REQUIRE(kept.size() == 1);
  }
  SECTION("equals the canonical-transform containment oracle") {
    std::uniform_real_distribution<double> unit(-1.5, 1.5);
    PointCloud cloud;
    for (int i = 0; i < 1000; ++i)
      cloud.push_back(box.center() + Eigen::Vector3d(unit(rng) * box.l,
                                                     unit(rng) * box.w,
                                                     unit(rng) * box.h));
    const auto kept = crop_points_by_box3d(cloud, box);
    const auto canon = canonical_transform(box, cloud);
    std::size_t expect = 0;
    for (const auto& q : canon.points)
      if (std::abs(q.x()) <= box.l / 2.0 + 1e-9 &&
          std::abs(q.y()) <= box.w / 2.0 + 1e-9 &&
          std::abs(q.z()) <= box.h / 2.0 + 1e-9)
        ++expect;
    CHECK(kept.size() == expect);
  }
  SECTION("idempotent subset") {
    std::uniform_real_distribution<double> unit(-8.0, 8.0);
    PointCloud cloud;
    for (int i = 0; i < 200; ++i)
      cloud.push_back({unit(rng), unit(rng), unit(rng)});
    const auto once = crop_points_by_box3d(cloud, box);
    const auto twice = crop_points_by_box3d(once, box);
    CHECK(twice.size() == once.size());
  }
}

TEST_CASE("range_crop") {
  SECTION("origin kept, out-of-range dropped, boundary inclusive") {
    const auto kept = range_crop(velo_cloud(
        {{0.0, 0.0, 0.0}, {80.0, 0.0, 0.0}, {70.0, 40.0, 1.0}}));
    REQUIRE(kept.size() == 2);
    CHECK(kept.points[1].isApprox(Eigen::Vector3d(70.0, 40.0, 1.0)));
  }
}

TEST_CASE("statistical_filter") {
  std::mt19937_64 rng(89);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  SECTION("isolated far point removed from a tight ball") {
    PointCloud cloud;
    for (int i = 0; i < 100; ++i) {
      Eigen::Vector3d p(unit(rng), unit(rng), unit(rng));
      cloud.push_back(p * 0.05);  // inside a 0.1 m ball
    }
    cloud.push_back({10.0, 0.0, 0.0});
    const auto result = statistical_filter(cloud, 20, 1.0);
    REQUIRE(result.removed == std::vector<std::size_t>{100});
    CHECK(result.kept.size() == 100);
  }
  SECTION("regular grid interior removes nothing") {
    PointCloud cloud;
    for (int x = 0; x < 5; ++x)
      for (int y = 0; y < 5; ++y)
        for (int z = 0; z < 5; ++z)
          cloud.push_back({x * 1.0, y * 1.0, z * 1.0});
    // k = 1 on a unit lattice: every point's nearest neighbor sits at
    // distance exactly 1, so the statistic has zero variance and the
    // mu + sigma gate removes nothing.
    const auto result = statistical_filter(cloud, 1, 1.0);
    CHECK(result.removed.empty());
  }
  SECTION("cloud of size k throws") {
    PointCloud cloud;
    for (int i = 0; i < 20; ++i)
      cloud.push_back({unit(rng), unit(rng), unit(rng)});
    CHECK_THROWS_AS(statistical_filter(cloud, 20, 1.0), TooFewPoints);
  }
  SECTION("permutation invariant up to index relabeling") {
    PointCloud cloud;
    for (int i = 0; i < 200; ++i)
      cloud.push_back(Eigen::Vector3d(unit(rng), unit(rng), unit(rng)) * 0.2);
    cloud.push_back({5.0, 5.0, 5.0});
    cloud.push_back({-6.0, 2.0, 1.0});
    const auto base = statistical_filter(cloud, 10, 1.0);

    PointCloud shuffled = cloud;
    std::reverse(shuffled.points.begin(), shuffled.points.end());
    const auto rev = statistical_filter(shuffled, 10, 1.0);
    CHECK(base.removed.size() == rev.removed.size());
    CHECK(base.kept.size() == rev.kept.size());
    for (std::size_t idx : base.removed) {
      const std::size_t mirrored = cloud.size() - 1 - idx;
      CHECK(std::find(rev.removed.begin(), rev.removed.end(), mirrored) !=
            rev.removed.end());
    }
  }
}

TEST_CASE("rectify_depth") {
  const Calibration calib = synthetic_calibration();
  std::mt19937_64 rng(97);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  // Depth axis expressed in velodyne coordinates.
  const Eigen::Vector3d depth_axis =
      calib.velo_to_cam_rotation.transpose() *
      (calib.rect_rotation.transpose() * Eigen::Vector3d::UnitZ());

  PointCloud gt;
  gt.frame = Frame::velodyne;
  for (int i = 0; i < 300; ++i)
    gt.push_back(Eigen::Vector3d(20.0 + unit(rng), unit(rng), unit(rng)));

  SECTION("identical clouds give zero offset and residual") {
    // k = 1: each point's nearest GT neighbor is itself.
    const auto [cloud, result] = rectify_depth(calib, gt, gt, 1);
    CHECK(std::abs(result.offset) < 1e-6);
    CHECK(result.residual < 1e-9);
  }
  SECTION("injected +0.5 m depth shift is recovered") {
    PointCloud pseudo = gt;
    for (auto& p : pseudo.points) p += 0.5 * depth_axis;
    const auto [cloud, result] = rectify_depth(calib, pseudo, gt);
    CHECK(result.offset == Catch::Approx(-0.5).margin(0.05));
    // residual is the mean k-NN spacing of the recovered cloud, not an
    // alignment error, so it stays at the sampling density (~0.3 here).
  }
  SECTION("single-point closed form") {
    PointCloud one_gt, one_pseudo;
    one_gt.frame = one_pseudo.frame = Frame::velodyne;
    one_gt.push_back({15.0, 2.0, 0.0});
    one_pseudo.push_back(one_gt.points[0] + 1.25 * depth_axis);
    const auto [cloud, result] =
        rectify_depth(calib, one_pseudo, one_gt, 1);
    CHECK(result.offset == Catch::Approx(-1.25).margin(0.05));
  }
  SECTION("objective never worsens relative to zero shift") {
    PointCloud pseudo;
    pseudo.frame = Frame::velodyne;
    for (int i = 0; i < 100; ++i)
      pseudo.push_back(
          Eigen::Vector3d(20.0 + 2.0 * unit(rng), unit(rng), unit(rng)));
    const auto [cloud, result] = rectify_depth(calib, pseudo, gt);
    const KdTree3 tree(gt.points);
    double at_zero = 0.0;
    for (const auto& p : pseudo.points)
      at_zero += tree.mean_knn_distance(p, result.k_used);
    at_zero /= static_cast<double>(pseudo.size());
    CHECK(result.residual <= at_zero + 1e-12);
  }
  SECTION("empty clouds throw") {
    CHECK_THROWS_AS(rectify_depth(calib, PointCloud{}, gt), EmptyCloud);
    CHECK_THROWS_AS(rectify_depth(calib, gt, PointCloud{}), EmptyCloud);
  }
}
