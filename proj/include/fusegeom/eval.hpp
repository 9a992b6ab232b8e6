#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <numeric>
#include <vector>

#include "fusegeom/boxes.hpp"
#include "fusegeom/common.hpp"

namespace fusegeom {

// ---------------------------------------------------------------------------
// Detection evaluation: average precision, recall versus proposal count,
// misprediction counting.
// ---------------------------------------------------------------------------

enum class Difficulty { easy, moderate, hard, ignored };

/// KITTI difficulty convention from 2D box height (px), occlusion level
/// and truncation fraction.
inline Difficulty classify_difficulty(double box_height_px, int occlusion,
                                      double truncation) {
  if (box_height_px >= 40.0 && occlusion <= 0 && truncation <= 0.15)
    return Difficulty::easy;
  if (box_height_px >= 25.0 && occlusion <= 1 && truncation <= 0.30)
    return Difficulty::moderate;
  if (box_height_px >= 25.0 && occlusion <= 2 && truncation <= 0.50)
    return Difficulty::hard;
  return Difficulty::ignored;
}

struct Detection {
  Box2D box2d;
  Box3D box3d;
  double score = 0.0;
  int frame_id = 0;
};

struct GroundTruth {
  Box2D box2d;
  Box3D box3d;
  Difficulty difficulty = Difficulty::easy;
  int frame_id = 0;
};

enum class EvalMode { image2d, bev, box3d };
enum class Interpolation { p11, p40 };

inline double eval_iou(EvalMode mode, const Detection& det,
                       const GroundTruth& gt) {
  switch (mode) {
    case EvalMode::image2d:
      return iou_2d(det.box2d, gt.box2d);
    case EvalMode::bev:
      return iou_bev(det.box3d, gt.box3d);
    default:
      return iou_3d(det.box3d, gt.box3d);
  }
}

/// Copy of the ground truths with every difficulty stricter than `level`
/// demoted to ignored (the per-difficulty evaluation convention).
inline std::vector<GroundTruth> gts_at_difficulty(
    const std::vector<GroundTruth>& gts, Difficulty level) {
  std::vector<GroundTruth> out = gts;
  for (auto& gt : out) {
    if (gt.difficulty == Difficulty::ignored) continue;
    if (static_cast<int>(gt.difficulty) > static_cast<int>(level))
      gt.difficulty = Difficulty::ignored;
  }
  return out;
}

struct ApResult {
  double ap = 0.0;
  bool defined = true;  // false when there were no detections and no GTs
};

/// Raw precision-recall points in descending-score order (for plotting).
struct PrCurve {
  std::vector<double> recall;
  std::vector<double> precision;
};

/// Average precision with greedy per-frame matching: detections in
/// descending score, one detection per GT, IoU >= threshold required.
/// Ignored GTs neither count toward recall nor turn their matches into
/// false positives. `curve_out`, when given, receives the PR points.
inline ApResult compute_ap(const std::vector<Detection>& dets,
                           const std::vector<GroundTruth>& gts,
                           double iou_threshold = 0.7,
                           EvalMode mode = EvalMode::box3d,
                           Interpolation interp = Interpolation::p40,
                           PrCurve* curve_out = nullptr) {
  std::map<int, std::vector<std::size_t>> gts_by_frame;
  std::size_t total_gts = 0;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    gts_by_frame[gts[g].frame_id].push_back(g);
    if (gts[g].difficulty != Difficulty::ignored) ++total_gts;
  }

  if (dets.empty() || total_gts == 0) {
    return {0.0, !dets.empty() || total_gts != 0};
  }

  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return dets[a].score > dets[b].score;
                   });

  std::vector<bool> gt_matched(gts.size(), false);
  // Each detection becomes +1 TP, +1 FP, or nothing (ignored match).
  std::vector<int> outcome;  // 1 = TP, 0 = FP
  outcome.reserve(dets.size());
  for (std::size_t idx : order) {
    const Detection& det = dets[idx];
    auto it = gts_by_frame.find(det.frame_id);
    int best_gt = -1, best_ignored = -1;
    double best_iou = 0.0, best_ignored_iou = 0.0;
    if (it != gts_by_frame.end()) {
      for (std::size_t g : it->second) {
        if (gt_matched[g]) continue;
        const double iou = eval_iou(mode, det, gts[g]);
        if (gts[g].difficulty == Difficulty::ignored) {
          if (iou > best_ignored_iou) {
            best_ignored_iou = iou;
            best_ignored = static_cast<int>(g);
          }
        } else if (iou > best_iou) {
          best_iou = iou;
          best_gt = static_cast<int>(g);
        }
      }
    }
    if (best_gt >= 0 && best_iou >= iou_threshold) {
      gt_matched[best_gt] = true;
      outcome.push_back(1);
    } else if (best_ignored >= 0 && best_ignored_iou >= iou_threshold) {
      gt_matched[best_ignored] = true;  // match consumed, no PR contribution
    } else {
      outcome.push_back(0);
    }
  }

  // Precision-recall points in score order.
  std::vector<double> precision, recall;
  std::size_t tp = 0, fp = 0;
  for (int o : outcome) {
    if (o)
      ++tp;
    else
      ++fp;
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / total_gts);
  }
  if (curve_out) {
    curve_out->recall = recall;
    curve_out->precision = precision;
  }

  auto precision_at = [&](double r) {
    double best = 0.0;
    for (std::size_t i = 0; i < recall.size(); ++i)
      if (recall[i] >= r) best = std::max(best, precision[i]);
    return best;
  };

  double ap = 0.0;
  if (interp == Interpolation::p11) {
    for (int i = 0; i <= 10; ++i) ap += precision_at(i / 10.0);
    ap /= 11.0;
  } else {
    for (int i = 1; i <= 40; ++i) ap += precision_at(i / 40.0);
    ap /= 40.0;
  }
  return {ap, true};
}

/// Recall at each proposal budget k: per frame, truncate to the top-k
/// proposals by score, then greedy IoU matching against the GTs.
inline std::vector<double> recall_at_k(const std::vector<Detection>& proposals,
                                       const std::vector<GroundTruth>& gts,
                                       double iou_threshold,
                                       const std::vector<std::size_t>& k_values,
                                       EvalMode mode = EvalMode::box3d) {
  std::map<int, std::vector<std::size_t>> props_by_frame;
  for (std::size_t i = 0; i < proposals.size(); ++i)
    props_by_frame[proposals[i].frame_id].push_back(i);
  for (auto& [frame, idxs] : props_by_frame)
    std::stable_sort(idxs.begin(), idxs.end(), [&](std::size_t a, std::size_t b) {
      return proposals[a].score > proposals[b].score;
    });

  std::map<int, std::vector<std::size_t>> gts_by_frame;
  std::size_t total_gts = 0;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (gts[g].difficulty == Difficulty::ignored) continue;
    gts_by_frame[gts[g].frame_id].push_back(g);
    ++total_gts;
  }

  std::vector<double> recalls;
  recalls.reserve(k_values.size());
  for (std::size_t k : k_values) {
    std::size_t matched = 0;
    for (const auto& [frame, gt_idxs] : gts_by_frame) {
      std::vector<bool> used(gt_idxs.size(), false);
      auto pit = props_by_frame.find(frame);
      if (pit == props_by_frame.end()) continue;
      const std::size_t limit = std::min(k, pit->second.size());
      for (std::size_t i = 0; i < limit; ++i) {
        const Detection& prop = proposals[pit->second[i]];
        int best = -1;
        double best_iou = 0.0;
        for (std::size_t j = 0; j < gt_idxs.size(); ++j) {
          if (used[j]) continue;
          const double iou = eval_iou(mode, prop, gts[gt_idxs[j]]);
          if (iou > best_iou) {
            best_iou = iou;
            best = static_cast<int>(j);
          }
        }
        if (best >= 0 && best_iou >= iou_threshold) {
          used[best] = true;
          ++matched;
        }
      }
    }
    recalls.push_back(total_gts == 0
                          ? 0.0
                          : static_cast<double>(matched) / total_gts);
  }
  return recalls;
}

struct MispredictionCounts {
  // Indexed by Difficulty::easy/moderate/hard of the detection box height.
  std::array<std::size_t, 3> counts{0, 0, 0};
  std::size_t total() const { return counts[0] + counts[1] + counts[2]; }
};

/// Counts detections with zero intersection area against every GT 2D box
/// in their frame. Buckets by the detection's own box-height difficulty
/// (occlusion and truncation are unknown for a detection).
inline MispredictionCounts count_mispredicted(
    const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts) {
  std::map<int, std::vector<std::size_t>> gts_by_frame;
  for (std::size_t g = 0; g < gts.size(); ++g)
    gts_by_frame[gts[g].frame_id].push_back(g);

  MispredictionCounts result;
  for (const auto& det : dets) {
    double best = 0.0;
    auto it = gts_by_frame.find(det.frame_id);
    if (it != gts_by_frame.end())
      for (std::size_t g : it->second)
        best = std::max(best, iou_2d(det.box2d, gts[g].box2d));
    if (best > 0.0) continue;
    Difficulty d = classify_difficulty(det.box2d.h, 0, 0.0);
    if (d == Difficulty::ignored) d = Difficulty::hard;
    result.counts[static_cast<int>(d)]++;
  }
  return result;
}

}  // namespace fusegeom
