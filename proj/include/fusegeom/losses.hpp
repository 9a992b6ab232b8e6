#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "fusegeom/anchors.hpp"
#include "fusegeom/boxes.hpp"
#include "fusegeom/calib.hpp"
#include "fusegeom/common.hpp"

namespace fusegeom {

// ---------------------------------------------------------------------------
// Scalar loss functions for segmentation, regression and the 2D-3D
// reprojection coupling. All pure; gradients are checked numerically.
// ---------------------------------------------------------------------------

struct LossConfig {
  double alpha_bce = 1.0;     // weight of the negative term in the BCE loss
  double beta_focal = 0.25;   // focal loss scale
  double gamma_focal = 2.0;   // focal loss exponent
  double alpha_reproj = 1.0;  // reprojection term weight in the total loss
  double prob_epsilon = 1e-7; // clamp for log arguments

  void validate() const {
    if (alpha_bce < 0.0 || beta_focal < 0.0 || gamma_focal < 0.0 ||
        alpha_reproj < 0.0)
      throw Error("LossConfig: weights must be nonnegative");
    if (!(prob_epsilon > 0.0 && prob_epsilon < 0.5))
      throw Error("LossConfig: prob_epsilon must lie in (0, 0.5)");
  }
};

namespace detail {
inline double clamp_prob(double p, double eps) {
  return std::clamp(p, eps, 1.0 - eps);
}
}  // namespace detail

/// Binary cross entropy over positive and negative probability lists:
///   -( (1/N_pos) sum log p_pos + (alpha/N_neg) sum log(1 - p_neg) ).
/// An empty list contributes nothing; both empty is an error.
inline double bce_seg_loss(std::span<const double> pos_probs,
                           std::span<const double> neg_probs,
                           const LossConfig& cfg = {}) {
  cfg.validate();
  if (pos_probs.empty() && neg_probs.empty())
    throw BothEmpty("bce_seg_loss: both probability lists are empty");
  double loss = 0.0;
  if (!pos_probs.empty()) {
    double acc = 0.0;
    for (double p : pos_probs)
      acc += std::log(detail::clamp_prob(p, cfg.prob_epsilon));
    loss -= acc / static_cast<double>(pos_probs.size());
  }
  if (!neg_probs.empty()) {
    double acc = 0.0;
    for (double p : neg_probs)
      acc += std::log(detail::clamp_prob(1.0 - p, cfg.prob_epsilon));
    loss -= cfg.alpha_bce * acc / static_cast<double>(neg_probs.size());
  }
  return loss;
}

/// Focal loss over foreground probabilities:
///   mean of -beta * (1 - P)^gamma * log(P).
inline double focal_loss(std::span<const double> probs,
                         const LossConfig& cfg = {}) {
  cfg.validate();
  if (probs.empty()) throw EmptyInput("focal_loss: empty probability list");
  double acc = 0.0;
  for (double p : probs) {
    const double pc = detail::clamp_prob(p, cfg.prob_epsilon);
    acc += -cfg.beta_focal * std::pow(1.0 - pc, cfg.gamma_focal) * std::log(pc);
  }
  return acc / static_cast<double>(probs.size());
}

/// Elementwise Huber with transition at 1.0, summed over residuals.
inline double smooth_l1(std::span<const double> pred,
                        std::span<const double> target) {
  if (pred.size() != target.size())
    throw KindMismatch("smooth_l1: prediction and target sizes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double r = std::abs(pred[i] - target[i]);
    acc += r < 1.0 ? 0.5 * r * r : r - 0.5;
  }
  return acc;
}

inline double smooth_l1(const RegressionTargets3D& pred,
                        const RegressionTargets3D& target) {
  const double p[7] = {pred.dx, pred.dy, pred.dz, pred.dl,
                       pred.dw, pred.dh, pred.dtheta};
  const double t[7] = {target.dx, target.dy, target.dz, target.dl,
                       target.dw, target.dh, target.dtheta};
  return smooth_l1(std::span<const double>(p), std::span<const double>(t));
}

inline double smooth_l1(const RegressionTargets2D& pred,
                        const RegressionTargets2D& target) {
  const double p[4] = {pred.dx, pred.dy, pred.dl, pred.dh};
  const double t[4] = {target.dx, target.dy, target.dl, target.dh};
  return smooth_l1(std::span<const double>(p), std::span<const double>(t));
}

/// 2D-3D coupling loss: projects the regressed 3D box to the image and
/// penalizes the scale-normalized center and log-size discrepancy
/// against the regressed 2D box:
///   smooth_l1 of (dcx/l', dcy/h', log(l''/l'), log(h''/h')).
/// Throws FullyBehindCamera when the 3D box has no visible corner.
inline double reprojection_loss(const Calibration& calib,
                                const Box3D& regressed3d,
                                const Box2D& regressed2d) {
  const Box2D reproj = project_box3d_to_box2d(calib, regressed3d);
  const double residual[4] = {
      (reproj.x - regressed2d.x) / regressed2d.l,
      (reproj.y - regressed2d.y) / regressed2d.h,
      std::log(reproj.l / regressed2d.l),
      std::log(reproj.h / regressed2d.h),
  };
  const double zero[4] = {0.0, 0.0, 0.0, 0.0};
  return smooth_l1(std::span<const double>(residual),
                   std::span<const double>(zero));
}

/// Eq-style total: l2d + l3d + alpha * lrep.
inline double total_regression_loss(double l2d, double l3d, double lrep,
                                    const LossConfig& cfg = {}) {
  cfg.validate();
  if (l2d < 0.0 || l3d < 0.0 || lrep < 0.0)
    throw Error("total_regression_loss: inputs must be nonnegative");
  return l2d + l3d + cfg.alpha_reproj * lrep;
}

/// Central-difference gradient of a scalar function of a Box3D over its
/// 7 parameters (x, y, z, l, w, h, theta).
inline std::array<double, 7> box3d_numeric_gradient(
    const std::function<double(const Box3D&)>& f, const Box3D& box,
    double step = 1e-6) {
  auto param = [](Box3D b, int i, double delta) {
    double* fields[7] = {&b.x, &b.y, &b.z, &b.l, &b.w, &b.h, &b.theta};
    *fields[i] += delta;
    return b;
  };
  std::array<double, 7> grad{};
  for (int i = 0; i < 7; ++i)
    grad[i] = (f(param(box, i, step)) - f(param(box, i, -step))) / (2.0 * step);
  return grad;
}

}  // namespace fusegeom
