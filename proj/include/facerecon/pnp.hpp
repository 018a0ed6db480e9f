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

#ifndef FACERECON_PNP_HPP_
#define FACERECON_PNP_HPP_

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "facerecon/geometry.hpp"

namespace facerecon {

// 2D-3D correspondences. `sigmas` holds one positive pixel standard deviation
// per point; when absent every point gets unit weight.
struct PnPProblem {
  PointSet3 points3;
  PointSet2 points2;
  std::optional<Eigen::VectorXd> sigmas;
  CameraIntrinsics cam;

  Eigen::Index size() const { return points3.rows(); }
  // Throws kInvalidArgument / kDimensionMismatch on malformed input and
  // kDegenerateConfiguration for fewer than 6 correspondences.
  void validate() const;
  PnPProblem unweighted() const;
};

struct PnPSolution {
  RigidPose pose;
  // sum_i ||pi(R X_i + t) - x_i||^2 / sigma_i^2, px^2.
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;  // infinity norm at the returned pose
  // Cost after each accepted step; front() is the initial cost.
  std::vector<double> cost_history;
};

struct LmOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-10;
  double step_tolerance = 1e-12;
  double initial_damping = 1e-3;
  double damping_factor = 10.0;
  // Parameters in chart order (omega_x, omega_y, omega_z, tau_x, tau_y, tau_z).
  // Fixed parameters keep their initial value.
  std::array<bool, 6> free = {true, true, true, true, true, true};
  // Gauss-Newton steps after convergence, accepted when they halve the
  // gradient while the cost stays within a relative roundoff band. They are
  // not LM steps and do not enter cost_history.
  int polish_iterations = 3;
  double polish_cost_tolerance = 1e-12;
};

// Residuals r_i = (pi(R X_i + t) - x_i) / sigma_i stacked as (u0, v0, u1, ...)
// and their Jacobian with respect to the local chart of `retract`.
struct ReprojectionResult {
  Eigen::VectorXd residuals;
  Eigen::Matrix<double, Eigen::Dynamic, 6> jacobian;
};

ReprojectionResult reprojection_residuals(const PnPProblem& problem, const RigidPose& pose);
// Cost only; throws kNonPositiveDepth like the full evaluation.
double reprojection_cost(const PnPProblem& problem, const RigidPose& pose);

// Linear pose from the normalized DLT with the rotation block projected onto
// SO(3). Throws kDegenerateConfiguration for < 6 points or coplanar/collinear
// 3D structure.
RigidPose solve_pnp_dlt(const PnPProblem& problem);

// Levenberg-Marquardt on the weighted reprojection error starting at `init`.
// Returns the best pose found; `converged` is false when the iteration budget
// runs out.
PnPSolution solve_pnp_lm(const PnPProblem& problem, const RigidPose& init,
                         const LmOptions& options = {});

}  // namespace facerecon

#endif  // FACERECON_PNP_HPP_
