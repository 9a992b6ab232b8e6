#include <catch2/catch_amalgamated.hpp>

#include "test_helpers.hpp"

using namespace fusegeom;

namespace {

Detection make_det(const Box2D& box, double score, int frame = 0) {
  Detection d;
  d.box2d = box;
  d.score = score;
  d.frame_id = frame;
  return d;
}

GroundTruth make_gt(const Box2D& box, int frame = 0,
                    Difficulty diff = Difficulty::easy) {
  GroundTruth g;
  g.box2d = box;
  g.frame_id = frame;
  g.difficulty = diff;
  return g;
}

Box2D square(double x, double y, double size = 10.0) {
  Box2D b;
  b.x = x;
  b.y = y;
  b.l = b.h = size;
  return b;
}

/// Random micro-scene: a handful of frames with <= 5 boxes each, plus
/// detections that are jittered copies and decoys.
void random_scene(std::mt19937_64& rng, std::vector<Detection>& dets,
                  std::vector<GroundTruth>& gts) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  dets.clear();
  gts.clear();
  const int frames = 1 + static_cast<int>(unit(rng) * 3);
  for (int f = 0; f < frames; ++f) {
    const int n = 1 + static_cast<int>(unit(rng) * 4);
    for (int i = 0; i < n; ++i) {
      const Box2D box = square(40.0 + 900.0 * unit(rng), 40.0 + 200.0 * unit(rng),
                               15.0 + 60.0 * unit(rng));
      Difficulty diff = Difficulty::easy;
      const double roll = unit(rng);
      if (roll > 0.85)
        diff = Difficulty::ignored;
      else if (roll > 0.6)
        diff = Difficulty::moderate;
      gts.push_back(make_gt(box, f, diff));
      if (unit(rng) < 0.8) {
        Box2D jittered = box;
        jittered.x += 8.0 * (unit(rng) - 0.5);
        jittered.y += 8.0 * (unit(rng) - 0.5);
        dets.push_back(make_det(jittered, unit(rng), f));
      }
      if (unit(rng) < 0.4)
        dets.push_back(make_det(
            square(40.0 + 900.0 * unit(rng), 40.0 + 200.0 * unit(rng), 20.0),
            unit(rng), f));
    }
  }
}

}  // namespace

TEST_CASE("compute_ap basics") {
  SECTION("perfect predictions give AP 1.0") {
    std::vector<GroundTruth> gts = {make_gt(square(100, 100)),
                                    make_gt(square(300, 100), 1)};
    std::vector<Detection> dets = {make_det(square(100, 100), 0.9),
                                   make_det(square(300, 100), 0.8, 1)};
    for (auto interp : {Interpolation::p11, Interpolation::p40}) {
      const auto result =
          compute_ap(dets, gts, 0.7, EvalMode::image2d, interp);
      CHECK(result.ap == Catch::Approx(1.0));
    }
  }
  SECTION("one TP above one disjoint FP, 11-point: AP stays 1.0") {
    std::vector<GroundTruth> gts = {make_gt(square(100, 100))};
    std::vector<Detection> dets = {make_det(square(100, 100), 0.9),
                                   make_det(square(800, 100), 0.8)};
    const auto result =
        compute_ap(dets, gts, 0.7, EvalMode::image2d, Interpolation::p11);
    CHECK(result.ap == Catch::Approx(1.0));
  }
  SECTION("no detections give AP 0") {
    std::vector<GroundTruth> gts = {make_gt(square(100, 100))};
    const auto result = compute_ap({}, gts, 0.7, EvalMode::image2d);
    CHECK(result.ap == 0.0);
    CHECK(result.defined);
  }
  SECTION("both empty is flagged undefined") {
    const auto result = compute_ap({}, {}, 0.7, EvalMode::image2d);
    CHECK(result.ap == 0.0);
    CHECK_FALSE(result.defined);
  }
  SECTION("ignored GTs neither count as FN nor penalize matches") {
    std::vector<GroundTruth> gts = {
        make_gt(square(100, 100)),
        make_gt(square(500, 100), 0, Difficulty::ignored)};
    std::vector<Detection> dets = {make_det(square(100, 100), 0.9),
                                   make_det(square(500, 100), 0.8)};
    const auto result = compute_ap(dets, gts, 0.7, EvalMode::image2d);
    CHECK(result.ap == Catch::Approx(1.0));
  }
  SECTION("adding a high-scored TP never decreases AP") {
    std::mt19937_64 rng(101);
    std::vector<Detection> dets;
    std::vector<GroundTruth> gts;
    random_scene(rng, dets, gts);
    gts.push_back(make_gt(square(600, 300), 0));
    const double before =
        compute_ap(dets, gts, 0.5, EvalMode::image2d).ap;
    dets.push_back(make_det(square(600, 300), 2.0, 0));  // above every FP
    const double after = compute_ap(dets, gts, 0.5, EvalMode::image2d).ap;
    CHECK(after >= before - 1e-12);
  }
}

TEST_CASE("compute_ap matches the brute-force evaluator") {
  std::mt19937_64 rng(103);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Detection> dets;
    std::vector<GroundTruth> gts;
    random_scene(rng, dets, gts);
    for (auto interp : {Interpolation::p11, Interpolation::p40}) {
      const double expect =
          testutil::brute_force_ap(dets, gts, 0.5, EvalMode::image2d, interp);
      const auto got = compute_ap(dets, gts, 0.5, EvalMode::image2d, interp);
      CHECK(std::abs(got.ap - expect) < 1e-12);
    }
  }
}

TEST_CASE("recall_at_k") {
  std::mt19937_64 rng(107);
  SECTION("proposals equal to GTs reach recall 1.0; k = 0 gives 0") {
    std::vector<GroundTruth> gts;
    std::vector<Detection> props;
    for (int i = 0; i < 5; ++i) {
      Box3D box = testutil::random_box3d(rng, 30.0);
      GroundTruth gt;
      gt.box3d = box;
      gt.frame_id = 0;
      gts.push_back(gt);
      Detection det;
      det.box3d = box;
      det.score = 0.5 + 0.1 * i;
      props.push_back(det);
    }
    const auto recalls = recall_at_k(props, gts, 0.7, {0, 10});
    CHECK(recalls[0] == 0.0);
    CHECK(recalls[1] == Catch::Approx(1.0));
  }
  SECTION("nondecreasing in k and matches the greedy oracle") {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<GroundTruth> gts;
      std::vector<Detection> props;
      for (int i = 0; i < 6; ++i) {
        Box3D box = testutil::random_box3d(rng, 25.0);
        GroundTruth gt;
        gt.box3d = box;
        gts.push_back(gt);
        // Jittered and decoy proposals.
        Detection det;
        det.box3d = box;
        det.box3d.x += 0.4 * (unit(rng) - 0.5);
        det.score = unit(rng);
        props.push_back(det);
        Detection decoy;
        decoy.box3d = testutil::random_box3d(rng, 25.0);
        decoy.score = unit(rng);
        props.push_back(decoy);
      }
      const std::vector<std::size_t> ks = {1, 2, 4, 8, 16};
      const auto recalls = recall_at_k(props, gts, 0.5, ks);
      for (std::size_t i = 1; i < recalls.size(); ++i)
        CHECK(recalls[i] >= recalls[i - 1]);

      // Oracle for the full-budget case: exhaustive greedy matching.
      std::vector<std::size_t> order(props.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) {
                         return props[a].score > props[b].score;
                       });
      std::vector<bool> used(gts.size(), false);
      std::size_t matched = 0;
      for (std::size_t p : order) {
        int best = -1;
        double best_iou = 0.0;
        for (std::size_t g = 0; g < gts.size(); ++g) {
          if (used[g]) continue;
          const double iou = iou_3d(props[p].box3d, gts[g].box3d);
          if (iou > best_iou) {
            best_iou = iou;
            best = static_cast<int>(g);
          }
        }
        if (best >= 0 && best_iou >= 0.5) {
          used[best] = true;
          ++matched;
        }
      }
      CHECK(recalls.back() ==
            Catch::Approx(static_cast<double>(matched) / gts.size()));
    }
  }
}

TEST_CASE("count_mispredicted") {
  std::vector<GroundTruth> gts = {make_gt(square(100, 100, 50))};
  SECTION("overlapping detection not counted") {
    const auto counts =
        count_mispredicted({make_det(square(110, 100, 50), 0.9)}, gts);
    CHECK(counts.total() == 0);
  }
  SECTION("disjoint detection counted under its height difficulty") {
    const auto counts =
        count_mispredicted({make_det(square(600, 100, 50), 0.9),
                            make_det(square(600, 200, 30), 0.8),
                            make_det(square(800, 200, 10), 0.7)},
                           gts);
    CHECK(counts.counts[0] == 1);  // height 50 -> easy
    CHECK(counts.counts[1] == 1);  // height 30 -> moderate
    CHECK(counts.counts[2] == 1);  // height 10 -> hard bucket
    CHECK(counts.total() == 3);
  }
  SECTION("equals the per-detection max-IoU oracle on a mixed set") {
    std::mt19937_64 rng(109);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Detection> dets;
    std::vector<GroundTruth> mixed_gts;
    for (int f = 0; f < 3; ++f)
      for (int i = 0; i < 5; ++i) {
        mixed_gts.push_back(
            make_gt(square(1000.0 * unit(rng), 300.0 * unit(rng), 40.0), f));
        dets.push_back(make_det(
            square(1000.0 * unit(rng), 300.0 * unit(rng), 40.0), unit(rng), f));
      }
    std::size_t expect = 0;
    for (const auto& det : dets) {
      double best = 0.0;
      for (const auto& gt : mixed_gts)
        if (gt.frame_id == det.frame_id)
          best = std::max(best, iou_2d(det.box2d, gt.box2d));
      if (best == 0.0) ++expect;
    }
    CHECK(count_mispredicted(dets, mixed_gts).total() == expect);
  }
}

TEST_CASE("gts_at_difficulty demotes stricter levels to ignored") {
  std::vector<GroundTruth> gts = {
      make_gt(square(0, 0), 0, Difficulty::easy),
      make_gt(square(0, 0), 0, Difficulty::moderate),
      make_gt(square(0, 0), 0, Difficulty::hard),
      make_gt(square(0, 0), 0, Difficulty::ignored)};
  const auto at_moderate = gts_at_difficulty(gts, Difficulty::moderate);
  CHECK(at_moderate[0].difficulty == Difficulty::easy);
  CHECK(at_moderate[1].difficulty == Difficulty::moderate);
  CHECK(at_moderate[2].difficulty == Difficulty::ignored);
  CHECK(at_moderate[3].difficulty == Difficulty::ignored);
}

TEST_CASE("classify_difficulty follows the height/occlusion/truncation table") {
  CHECK(classify_difficulty(45.0, 0, 0.1) == Difficulty::easy);
  CHECK(classify_difficulty(30.0, 1, 0.2) == Difficulty::moderate);
  CHECK(classify_difficulty(30.0, 2, 0.4) == Difficulty::hard);
  CHECK(classify_difficulty(20.0, 0, 0.0) == Difficulty::ignored);
  CHECK(classify_difficulty(45.0, 0, 0.4) == Difficulty::hard);
}
