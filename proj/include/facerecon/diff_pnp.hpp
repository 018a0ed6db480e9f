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

#ifndef FACERECON_DIFF_PNP_HPP_
#define FACERECON_DIFF_PNP_HPP_

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "facerecon/geometry.hpp"
#include "facerecon/pnp.hpp"

namespace facerecon {

struct PnPForwardOptions {
  LmOptions lm;
  // Skips the DLT initialization.
  std::optional<RigidPose> warm_start;
};

// DLT initialization followed by LM refinement.
PnPSolution pnp_forward(const PnPProblem& problem, const PnPForwardOptions& options = {});

// Sensitivities of the solved pose, expressed in the local chart of `retract`
// at the solution. Column blocks follow point order: d_points2 has columns
// (u0, v0, u1, v1, ...), d_points3 has (x0, y0, z0, x1, ...).
struct PnPGradients {
  Eigen::Matrix<double, 6, Eigen::Dynamic> d_points2;
  Eigen::Matrix<double, 6, Eigen::Dynamic> d_points3;
  // Empty for unweighted problems.
  Eigen::Matrix<double, 6, Eigen::Dynamic> d_sigmas;
};

struct IftOptions {
  double tikhonov = 1e-10;
  double min_eigenvalue = 1e-10;
};

// Second-order data of the cost F(theta) = sum_i ||r_i||^2 at a pose: exact
// Hessian (Gauss-Newton term plus residual curvature), gradient, and the mixed
// derivatives of the gradient with respect to the inputs.
struct CostDerivatives {
  Vector6d gradient;
  Matrix6d hessian;
  Eigen::Matrix<double, 6, Eigen::Dynamic> mixed_points2;
  Eigen::Matrix<double, 6, Eigen::Dynamic> mixed_points3;
  Eigen::Matrix<double, 6, Eigen::Dynamic> mixed_sigmas;
};

CostDerivatives cost_derivatives(const PnPProblem& problem, const RigidPose& pose);

// Implicit differentiation of the stationarity condition grad F = 0:
// d theta / d q = -H^{-1} d(grad F)/dq.
// Throws kNotConverged when `solution` did not converge and kSingularHessian
// when the regularized Hessian has an eigenvalue below `min_eigenvalue`.
PnPGradients pnp_backward_ift(const PnPProblem& problem, const PnPSolution& solution,
                              const IftOptions& options = {});

// Vector-Jacobian product: given dL/dtheta at the solution, returns dL/dq
// without materializing the 6 x 5N matrices.
struct PnPAdjoint {
  PointSet2 d_points2;
  PointSet3 d_points3;
  Eigen::VectorXd d_sigmas;
};
PnPAdjoint pnp_backward_vjp(const PnPProblem& problem, const PnPSolution& solution,
                            const Vector6d& d_loss_d_pose, const IftOptions& options = {});

struct PoseDistribution {
  std::vector<RigidPose> samples;
  Eigen::VectorXd weights;  // non-negative, sums to 1
  double temperature = 0.0;
  RigidPose expected;
};

// Importance-sampled softargmin: target density exp(-F / T), Gaussian proposal
// N(0, T H^{-1}) in the chart at `center`. Sample 0 is the centre itself; the
// rest come in antithetic pairs. The expected pose is the weighted chart mean
// mapped back through `retract`.
PoseDistribution mc_softargmin_pose(const PnPProblem& problem, const PnPSolution& center,
                                    int n_samples, double temperature, std::uint64_t seed);

}  // namespace facerecon

#endif  // FACERECON_DIFF_PNP_HPP_
