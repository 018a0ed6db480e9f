// Copyright 2026 The facerecon Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "facerecon/losses.hpp"

#include <cmath>
#include <string>

#include "facerecon/error.hpp"

namespace facerecon {
namespace {

void require_same_rows(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::string(what) + ": " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

template <typename M>
void accumulate(M& dst, const M& src, double lambda) {
  if (src.size() == 0) return;
  if (dst.size() == 0) {
    dst = lambda * src;
    return;
  }
  if (dst.rows() != src.rows() || dst.cols() != src.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "inconsistent gradient block shapes");
  }
  dst += lambda * src;
}

// Mean over vertices of ||R X_v + t - target_v|| and its derivatives with
// respect to the pose chart and to X.
struct PosedDistance {
  double value = 0.0;
  Vector6d d_pose = Vector6d::Zero();
  PointSet3 d_points;
};

PosedDistance posed_distance(const RigidPose& pose, const CanonicalMesh& points,
                             const PointSet3& target) {
  const Eigen::Index n = points.rows();
  const Eigen::Matrix3d r = pose.rotation_matrix();
  PosedDistance out;
  out.d_points = PointSet3::Zero(n, 3);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d v = r * points.row(i).transpose();
    const Eigen::Vector3d diff = v + pose.translation() - target.row(i).transpose();
    const double len = diff.norm();
    out.value += len;
    if (len == 0.0) continue;  // subgradient 0 at the kink
    const Eigen::Vector3d u = diff / len;
    out.d_pose.head<3>() += v.cross(u);
    out.d_pose.tail<3>() += u;
    out.d_points.row(i) = (r.transpose() * u).transpose() * inv_n;
  }
  out.value *= inv_n;
  out.d_pose *= inv_n;
  return out;
}

}  // namespace

LossValue gnll(const LandmarkSet& pred, const PointSet2& gt_mu) {
  require_same_rows(pred.mu.rows(), gt_mu.rows(), "gnll landmark count");
  require_same_rows(pred.log_sigma.size(), pred.mu.rows(), "gnll sigma count");
  const Eigen::Index n = pred.size();
  LossValue out;
  out.grad.d_mu.resize(n, 2);
  out.grad.d_log_sigma.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = pred.log_sigma(i);
    const double inv_var = std::exp(-2.0 * s);
    const Eigen::RowVector2d diff = pred.mu.row(i) - gt_mu.row(i);
    const double sq = diff.squaredNorm();
    out.value += 2.0 * s + 0.5 * sq * inv_var;
    out.grad.d_mu.row(i) = diff * inv_var;
    out.grad.d_log_sigma(i) = 2.0 - sq * inv_var;
  }
  return out;
}

LossValue vdc(const CanonicalMesh& pred, const CanonicalMesh& gt) {
  require_same_rows(pred.rows(), gt.rows(), "vdc vertex count");
  if (pred.rows() == 0) throw Error(ErrorCode::kInvalidArgument, "vdc on empty mesh");
  const double inv_n = 1.0 / static_cast<double>(pred.rows());
  const PointSet3 diff = pred - gt;
  LossValue out;
  out.value = diff.squaredNorm() * inv_n;
  out.grad.d_mesh = 2.0 * inv_n * diff;
  return out;
}

WpdcWeights wpdc_weights_from_model(const PcaModel& model) {
  const Eigen::Index k = model.n_components();
  const double total = model.component_scales.sum();
  WpdcWeights w;
  if (!(total > 0.0)) {
    w.w = Eigen::VectorXd::Ones(k);
    return w;
  }
  w.w = model.component_scales * (static_cast<double>(k) / total);
  return w;
}

LossValue wpdc(const PcaCoeffs& pred, const PcaCoeffs& gt, const WpdcWeights& weights) {
  require_same_rows(pred.size(), gt.size(), "wpdc coefficient count");
  require_same_rows(pred.size(), weights.w.size(), "wpdc weight count");
  const Eigen::ArrayXd w2 = weights.w.array().square();
  const Eigen::ArrayXd diff = (pred - gt).array();
  LossValue out;
  out.value = (w2 * diff.square()).sum();
  out.grad.d_coeffs = (2.0 * w2 * diff).matrix();
  return out;
}

PnpLossResult pnp_loss(const LandmarkSet& x2d_pred, const CanonicalMesh& x3d_pred,
                       const CanonicalMesh& x3d_gt, const RigidPose& pose_gt,
                       const CameraIntrinsics& cam, const PnpLossOptions& options) {
  require_same_rows(x2d_pred.size(), x3d_pred.rows(), "pnp_loss landmark/mesh count");
  require_same_rows(x3d_pred.rows(), x3d_gt.rows(), "pnp_loss mesh count");

  PnPProblem problem;
  problem.points3 = x3d_pred;
  problem.points2 = x2d_pred.mu;
  problem.cam = cam;
  if (options.use_sigma_weights) problem.sigmas = x2d_pred.sigma();

  PnpLossResult out;
  out.solution = pnp_forward(problem, options.forward);
  const PointSet3 target = pose_gt.transform(x3d_gt);
  const PosedDistance gt_term = posed_distance(out.solution.pose, x3d_gt, target);
  const PosedDistance pred_term = posed_distance(out.solution.pose, x3d_pred, target);
  out.gt_term = gt_term.value;
  out.pred_term = pred_term.value;
  out.value = gt_term.value + pred_term.value;

  const Vector6d d_pose = gt_term.d_pose + pred_term.d_pose;
  const PnPAdjoint adj = pnp_backward_vjp(problem, out.solution, d_pose, options.ift);
  out.grad.d_mu = adj.d_points2;
  out.grad.d_mesh = adj.d_points3 + pred_term.d_points;
  if (options.sigma_gradients && problem.sigmas) {
    out.grad.d_log_sigma = adj.d_sigmas.cwiseProduct(*problem.sigmas);
  }
  return out;
}

void TotalLossConfig::validate() const {
  for (double l : lambda) {
    if (!(l >= 0.0) || !std::isfinite(l)) {
      throw Error(ErrorCode::kInvalidArgument, "loss weights must be non-negative");
    }
  }
}

LossValue total_loss(const LossParts& parts, const TotalLossConfig& cfg) {
  cfg.validate();
  LossValue out;
  const LossValue* items[] = {&parts.gnll, &parts.vdc, &parts.wpdc, &parts.pnp};
  for (int k = 0; k < 4; ++k) {
    const double l = cfg.lambda[k];
    out.value += l * items[k]->value;
    accumulate(out.grad.d_mu, items[k]->grad.d_mu, l);
    accumulate(out.grad.d_log_sigma, items[k]->grad.d_log_sigma, l);
    accumulate(out.grad.d_mesh, items[k]->grad.d_mesh, l);
    accumulate(out.grad.d_coeffs, items[k]->grad.d_coeffs, l);
  }
  return out;
}

void chain_mesh_to_coeffs(const PcaModel& model, LossGradients& grad) {
  if (grad.d_mesh.size() == 0) return;
  if (grad.d_mesh.rows() != model.n_vertices()) {
    throw Error(ErrorCode::kInconsistentVertexCount, "mesh gradient does not match model");
  }
  const Eigen::VectorXd chained = model.basis.transpose() * flatten(grad.d_mesh);
  if (grad.d_coeffs.size() == 0) {
    grad.d_coeffs = chained;
  } else {
    grad.d_coeffs += chained;
  }
  grad.d_mesh.resize(0, 3);
}

}  // namespace facerecon
