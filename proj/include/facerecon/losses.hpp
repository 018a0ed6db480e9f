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

#ifndef FACERECON_LOSSES_HPP_
#define FACERECON_LOSSES_HPP_

#include <array>

#include <Eigen/Core>

#include "facerecon/diff_pnp.hpp"
#include "facerecon/geometry.hpp"
#include "facerecon/shape_pca.hpp"

namespace facerecon {

// Predicted landmarks with one isotropic uncertainty per point, stored as
// log_sigma so that sigma = exp(log_sigma) stays positive.
struct LandmarkSet {
  PointSet2 mu;
  Eigen::VectorXd log_sigma;

  Eigen::Index size() const { return mu.rows(); }
  Eigen::VectorXd sigma() const { return log_sigma.array().exp().matrix(); }
};

// Gradients of a loss with respect to every prediction input. Blocks a loss
// does not depend on are left empty.
struct LossGradients {
  PointSet2 d_mu;
  Eigen::VectorXd d_log_sigma;
  PointSet3 d_mesh;
  Eigen::VectorXd d_coeffs;
};

struct LossValue {
  double value = 0.0;
  LossGradients grad;
};

// sum_i [ log(sigma_i^2) + ||mu_i - gt_i||^2 / (2 sigma_i^2) ].
LossValue gnll(const LandmarkSet& pred, const PointSet2& gt_mu);

// Mean over vertices of the squared Euclidean distance, mm^2.
LossValue vdc(const CanonicalMesh& pred, const CanonicalMesh& gt);

// Non-negative per-coefficient weights normalized to sum to K.
struct WpdcWeights {
  Eigen::VectorXd w;
};

// W_i proportional to the component scale: coefficients that move more
// surface weigh more.
WpdcWeights wpdc_weights_from_model(const PcaModel& model);

// sum_i (W_i (c_i - gt_i))^2.
LossValue wpdc(const PcaCoeffs& pred, const PcaCoeffs& gt, const WpdcWeights& weights);

struct PnpLossOptions {
  // Weight the PnP layer with the predicted sigmas.
  bool use_sigma_weights = true;
  // Additionally report dL/dlog_sigma through the implicit gradient.
  bool sigma_gradients = false;
  PnPForwardOptions forward;
  IftOptions ift;
};

struct PnpLossResult {
  double value = 0.0;
  double gt_term = 0.0;    // mean_v ||P_pred X_gt - P_gt X_gt||
  double pred_term = 0.0;  // mean_v ||P_pred X_pred - P_gt X_gt||
  LossGradients grad;      // d_mu, d_mesh (and d_log_sigma when requested)
  PnPSolution solution;
};

// Pose from the differentiable PnP layer on (landmarks, predicted mesh), scored
// against the ground-truth pose on both the ground-truth and predicted mesh.
PnpLossResult pnp_loss(const LandmarkSet& x2d_pred, const CanonicalMesh& x3d_pred,
                       const CanonicalMesh& x3d_gt, const RigidPose& pose_gt,
                       const CameraIntrinsics& cam, const PnpLossOptions& options = {});

struct TotalLossConfig {
  // gnll, vdc, wpdc, pnp
  std::array<double, 4> lambda = {0.01, 20.0, 10.0, 2.0};

  void validate() const;
};

struct LossParts {
  LossValue gnll;
  LossValue vdc;
  LossValue wpdc;
  LossValue pnp;
};

// Weighted sum of values and gradients. Gradient blocks are summed where
// several parts share an input; empty blocks are skipped.
LossValue total_loss(const LossParts& parts, const TotalLossConfig& cfg);

// Folds d_mesh into d_coeffs for mesh = reconstruct(model, coeffs) and clears
// d_mesh.
void chain_mesh_to_coeffs(const PcaModel& model, LossGradients& grad);

}  // namespace facerecon

#endif  // FACERECON_LOSSES_HPP_
