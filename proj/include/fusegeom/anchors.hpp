#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "fusegeom/boxes.hpp"
#include "fusegeom/calib.hpp"
#include "fusegeom/common.hpp"

namespace fusegeom {

// ---------------------------------------------------------------------------
// Joint 2D-3D anchor machinery: seeding on foreground points, labeling,
// joint filtering, regression target encoding, proposal assignment.
// ---------------------------------------------------------------------------

/// Template size used for every seeded anchor. Default is the car
/// template (3.9, 1.6, 1.5) meters.
struct AnchorTemplate {
  double l = 3.9;
  double w = 1.6;
  double h = 1.5;
};

/// A paired 2D/3D candidate: the 2D box is the image projection of the
/// 3D box, and both trace back to the foreground point that seeded them.
struct JointAnchor {
  Box3D box3d;
  Box2D box2d;
  std::size_t source_point_index = 0;
};

enum class AnchorLabel { foreground, background, ignored };

struct SeedResult {
  std::vector<JointAnchor> anchors;
  std::size_t dropped_behind_camera = 0;
};

/// Seeds joint anchors on foreground points: per point, one 3D box of
/// template size per yaw bin (default {0, pi/2}), projected to the image.
/// Anchors fully behind the camera are dropped and counted.
inline SeedResult seed_anchors(const PointCloud& foreground_points,
                               const AnchorTemplate& tmpl,
                               const Calibration& calib,
                               const std::vector<double>& yaw_bins = {0.0,
                                                                      M_PI / 2.0}) {
  require_frame(foreground_points, Frame::velodyne, "seed_anchors");
  SeedResult result;
  result.anchors.reserve(foreground_points.size() * yaw_bins.size());
  for (std::size_t i = 0; i < foreground_points.size(); ++i) {
    const auto& p = foreground_points.points[i];
    for (double yaw : yaw_bins) {
      Box3D box;
      box.x = p.x();
      box.y = p.y();
      box.z = p.z();
      box.l = tmpl.l;
      box.w = tmpl.w;
      box.h = tmpl.h;
      box.theta = wrap_to_pi(yaw);
      try {
        const Box2D projected = project_box3d_to_box2d(calib, box);
        result.anchors.push_back({box, projected, i});
      } catch (const FullyBehindCamera&) {
        ++result.dropped_behind_camera;
      }
    }
  }
  return result;
}

/// Labels each 2D anchor by its max IoU against the ground-truth boxes:
/// below `lo` background, above `hi` foreground, otherwise ignored.
inline std::vector<AnchorLabel> label_2d_anchors(const std::vector<Box2D>& anchors,
                                                 const std::vector<Box2D>& gts,
                                                 double lo = 0.3,
                                                 double hi = 0.5) {
  if (!(lo < hi)) throw Error("label_2d_anchors: need lo < hi");
  std::vector<AnchorLabel> labels;
  labels.reserve(anchors.size());
  for (const auto& anchor : anchors) {
    double best = 0.0;
    for (const auto& gt : gts) best = std::max(best, iou_2d(anchor, gt));
    if (best < lo)
      labels.push_back(AnchorLabel::background);
    else if (best > hi)
      labels.push_back(AnchorLabel::foreground);
    else
      labels.push_back(AnchorLabel::ignored);
  }
  return labels;
}

/// Keeps the indices that are foreground under both the 2D labeling and
/// the 3D point-segmentation mask.
inline std::vector<std::size_t> joint_filter(
    const std::vector<AnchorLabel>& labels2d, const std::vector<bool>& fg3d) {
  if (labels2d.size() != fg3d.size())
    throw LengthMismatch("joint_filter: label lists differ in length");
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < labels2d.size(); ++i)
    if (labels2d[i] == AnchorLabel::foreground && fg3d[i]) kept.push_back(i);
  return kept;
}

// ---------------------------------------------------------------------------
// Regression targets. Centers are raw offsets normalized by the anchor's
// BEV diagonal (3D) or the anchor size (2D); sizes are log ratios; theta
// is the residual wrapped to [-pi, pi) so decode(encode(gt)) returns gt
// up to a multiple of 2*pi.
// ---------------------------------------------------------------------------

struct RegressionTargets3D {
  double dx = 0.0, dy = 0.0, dz = 0.0;
  double dl = 0.0, dw = 0.0, dh = 0.0;
  double dtheta = 0.0;
};

struct RegressionTargets2D {
  double dx = 0.0, dy = 0.0;
  double dl = 0.0, dh = 0.0;
};

inline RegressionTargets3D encode_3d(const Box3D& anchor, const Box3D& gt) {
  const double diag = std::hypot(anchor.l, anchor.w);
  RegressionTargets3D t;
  t.dx = (gt.x - anchor.x) / diag;
  t.dy = (gt.y - anchor.y) / diag;
  t.dz = (gt.z - anchor.z) / diag;
  t.dl = std::log(gt.l / anchor.l);
  t.dw = std::log(gt.w / anchor.w);
  t.dh = std::log(gt.h / anchor.h);
  t.dtheta = wrap_to_pi(gt.theta - anchor.theta);
  return t;
}

inline Box3D decode_3d(const Box3D& anchor, const RegressionTargets3D& t) {
  const double diag = std::hypot(anchor.l, anchor.w);
  Box3D box;
  box.x = anchor.x + t.dx * diag;
  box.y = anchor.y + t.dy * diag;
  box.z = anchor.z + t.dz * diag;
  box.l = anchor.l * std::exp(t.dl);
  box.w = anchor.w * std::exp(t.dw);
  box.h = anchor.h * std::exp(t.dh);
  box.theta = wrap_to_pi(anchor.theta + t.dtheta);
  return box;
}

inline RegressionTargets2D encode_2d(const Box2D& anchor, const Box2D& gt) {
  RegressionTargets2D t;
  t.dx = (gt.x - anchor.x) / anchor.l;
  t.dy = (gt.y - anchor.y) / anchor.h;
  t.dl = std::log(gt.l / anchor.l);
  t.dh = std::log(gt.h / anchor.h);
  return t;
}

inline Box2D decode_2d(const Box2D& anchor, const RegressionTargets2D& t) {
  Box2D box;
  box.x = anchor.x + t.dx * anchor.l;
  box.y = anchor.y + t.dy * anchor.h;
  box.l = anchor.l * std::exp(t.dl);
  box.h = anchor.h * std::exp(t.dh);
  return box;
}

// ---------------------------------------------------------------------------
// Proposal-to-GT assignment and top-k selection.
// ---------------------------------------------------------------------------

enum class ProposalLabel { positive, negative, ignored };

struct ProposalAssignment {
  ProposalLabel label = ProposalLabel::negative;
  bool regression_eligible = false;
  int gt_index = -1;  // argmax-IoU ground truth, -1 when no GT exists
  double max_iou = 0.0;
};

/// Classifies proposals by max 3D IoU against the ground truths
/// (above `pos` positive, below `neg` negative, else ignored) and marks
/// regression eligibility at `reg_min`.
inline std::vector<ProposalAssignment> assign_proposals(
    const std::vector<Box3D>& proposals, const std::vector<Box3D>& gts,
    double pos = 0.6, double neg = 0.45, double reg_min = 0.55) {
  std::vector<ProposalAssignment> out;
  out.reserve(proposals.size());
  for (const auto& proposal : proposals) {
    ProposalAssignment a;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double iou = iou_3d(proposal, gts[g]);
      if (a.gt_index < 0 || iou > a.max_iou) {
        a.max_iou = iou;
        a.gt_index = static_cast<int>(g);
      }
    }
    if (a.max_iou > pos)
      a.label = ProposalLabel::positive;
    else if (a.max_iou < neg)
      a.label = ProposalLabel::negative;
    else
      a.label = ProposalLabel::ignored;
    a.regression_eligible = !gts.empty() && a.max_iou >= reg_min;
    if (!a.regression_eligible && a.label != ProposalLabel::positive &&
        gts.empty())
      a.gt_index = -1;
    out.push_back(a);
  }
  return out;
}

/// NMS followed by the descending-score top-k prefix of the survivors.
inline std::vector<std::size_t> select_top_k(const std::vector<Box3D>& proposals,
                                             const std::vector<double>& scores,
                                             std::size_t k,
                                             double nms_iou = 0.85) {
  std::vector<std::size_t> kept = nms_rotated(proposals, scores, nms_iou);
  if (kept.size() > k) kept.resize(k);
  return kept;
}

}  // namespace fusegeom
