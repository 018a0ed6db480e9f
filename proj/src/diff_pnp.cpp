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

#include "facerecon/diff_pnp.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "facerecon/error.hpp"
#include "facerecon/random.hpp"

namespace facerecon {

PnPSolution pnp_forward(const PnPProblem& problem, const PnPForwardOptions& options) {
  const RigidPose init = options.warm_start ? *options.warm_start : solve_pnp_dlt(problem);
  return solve_pnp_lm(problem, init, options.lm);
}

CostDerivatives cost_derivatives(const PnPProblem& p, const RigidPose& pose) {
  p.validate();
  const Eigen::Index n = p.size();
  const Eigen::Matrix3d r = pose.rotation_matrix();
  const double fx = p.cam.fx;
  const double fy = p.cam.fy;

  CostDerivatives out;
  out.gradient.setZero();
  out.hessian.setZero();
  out.mixed_points2.resize(6, 2 * n);
  out.mixed_points3.resize(6, 3 * n);
  if (p.sigmas) out.mixed_sigmas.resize(6, n);

  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d v = r * p.points3.row(i).transpose();
    const Eigen::Vector3d c = v + pose.translation();
    if (!(c.z() > 0.0)) {
      throw Error(ErrorCode::kNonPositiveDepth, "point " + std::to_string(i) + " behind camera", i);
    }
    const double sigma = p.sigmas ? (*p.sigmas)(i) : 1.0;
    const double k = 2.0 / (sigma * sigma);
    const double iz = 1.0 / c.z();
    const double iz2 = iz * iz;

    const Eigen::Vector2d e(fx * c.x() * iz + p.cam.cx - p.points2(i, 0),
                            fy * c.y() * iz + p.cam.cy - p.points2(i, 1));
    Eigen::Matrix<double, 2, 3> dpi;
    dpi << fx * iz, 0.0, -fx * c.x() * iz2,
           0.0, fy * iz, -fy * c.y() * iz2;
    Eigen::Matrix3d hu = Eigen::Matrix3d::Zero();
    hu(0, 2) = hu(2, 0) = -fx * iz2;
    hu(2, 2) = 2.0 * fx * c.x() * iz2 * iz;
    Eigen::Matrix3d hv = Eigen::Matrix3d::Zero();
    hv(1, 2) = hv(2, 1) = -fy * iz2;
    hv(2, 2) = 2.0 * fy * c.y() * iz2 * iz;

    const Eigen::Vector3d w = dpi.transpose() * e;
    const Eigen::Matrix3d q = dpi.transpose() * dpi + e.x() * hu + e.y() * hv;

    Eigen::Matrix<double, 3, 6> dc;
    dc.leftCols<3>() = -skew(v);
    dc.rightCols<3>().setIdentity();

    Vector6d g;
    g.head<3>() = v.cross(w);
    g.tail<3>() = w;
    g *= k;
    out.gradient += g;

    // Second-order term of exp(omega) v contracted with w.
    const Eigen::Matrix3d curvature =
        0.5 * (v * w.transpose() + w * v.transpose()) - w.dot(v) * Eigen::Matrix3d::Identity();
    Matrix6d h = dc.transpose() * q * dc;
    h.topLeftCorner<3, 3>() += curvature;
    out.hessian += k * h;

    out.mixed_points2.block<6, 2>(0, 2 * i) = -k * (dpi * dc).transpose();
    out.mixed_points3.block<3, 3>(0, 3 * i) = k * (-skew(w) + skew(v) * q) * r;
    out.mixed_points3.block<3, 3>(3, 3 * i) = k * q * r;
    if (p.sigmas) out.mixed_sigmas.col(i) = -2.0 * g / sigma;
  }
  return out;
}

namespace {

Eigen::LDLT<Matrix6d> regularized_factor(const Matrix6d& hessian, const IftOptions& options) {
  const Matrix6d reg = hessian + options.tikhonov * Matrix6d::Identity();
  const Eigen::SelfAdjointEigenSolver<Matrix6d> eig(reg, Eigen::EigenvaluesOnly);
  const double min_eig = eig.eigenvalues()(0);
  if (!(min_eig > options.min_eigenvalue)) {
    throw Error(ErrorCode::kSingularHessian,
                "Hessian min eigenvalue " + std::to_string(min_eig) + " below threshold");
  }
  return reg.ldlt();
}

void require_converged(const PnPSolution& solution) {
  if (!solution.converged) {
    throw Error(ErrorCode::kNotConverged, "PnP solution did not converge");
  }
}

}  // namespace

PnPGradients pnp_backward_ift(const PnPProblem& problem, const PnPSolution& solution,
                              const IftOptions& options) {
  require_converged(solution);
  const CostDerivatives d = cost_derivatives(problem, solution.pose);
  const auto factor = regularized_factor(d.hessian, options);
  PnPGradients out;
  out.d_points2 = -factor.solve(d.mixed_points2);
  out.d_points3 = -factor.solve(d.mixed_points3);
  if (problem.sigmas) out.d_sigmas = -factor.solve(d.mixed_sigmas);
  return out;
}

PnPAdjoint pnp_backward_vjp(const PnPProblem& problem, const PnPSolution& solution,
                            const Vector6d& d_loss_d_pose, const IftOptions& options) {
  require_converged(solution);
  const CostDerivatives d = cost_derivatives(problem, solution.pose);
  const auto factor = regularized_factor(d.hessian, options);
  const Vector6d lambda = factor.solve(d_loss_d_pose);
  const Eigen::Index n = problem.size();

  PnPAdjoint out;
  const Eigen::RowVectorXd g2 = -lambda.transpose() * d.mixed_points2;
  const Eigen::RowVectorXd g3 = -lambda.transpose() * d.mixed_points3;
  out.d_points2 = Eigen::Map<const PointSet2>(g2.data(), n, 2);
  out.d_points3 = Eigen::Map<const PointSet3>(g3.data(), n, 3);
  if (problem.sigmas) out.d_sigmas = -(lambda.transpose() * d.mixed_sigmas).transpose();
  return out;
}

PoseDistribution mc_softargmin_pose(const PnPProblem& problem, const PnPSolution& center,
                                    int n_samples, double temperature, std::uint64_t seed) {
  if (n_samples < 1) {
    throw Error(ErrorCode::kInvalidArgument, "n_samples must be >= 1");
  }
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorCode::kInvalidArgument, "temperature must be positive");
  }
  const CostDerivatives d = cost_derivatives(problem, center.pose);
  const Eigen::LLT<Matrix6d> llt(d.hessian);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::kSingularHessian, "cost Hessian is not positive definite at the centre");
  }
  const double center_cost = reprojection_cost(problem, center.pose);

  // theta = sqrt(T) L^{-T} z has covariance T H^{-1} for H = L L^T.
  const double scale = std::sqrt(temperature);
  const auto upper = llt.matrixU();
  Random rng(seed);
  std::vector<Vector6d> thetas;
  thetas.reserve(n_samples);
  thetas.push_back(Vector6d::Zero());
  while (static_cast<int>(thetas.size()) < n_samples) {
    Vector6d z;
    for (int k = 0; k < 6; ++k) z(k) = rng.normal();
    const Vector6d theta = scale * upper.solve(z);
    thetas.push_back(theta);
    if (static_cast<int>(thetas.size()) < n_samples) thetas.push_back(-theta);
  }

  PoseDistribution out;
  out.temperature = temperature;
  out.samples.reserve(n_samples);
  Eigen::VectorXd log_w(n_samples);
  for (int j = 0; j < n_samples; ++j) {
    const RigidPose pose = retract(center.pose, thetas[j]);
    out.samples.push_back(pose);
    double cost = std::numeric_limits<double>::infinity();
    try {
      cost = reprojection_cost(problem, pose);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNonPositiveDepth) throw;
    }
    const double quad = thetas[j].dot(d.hessian * thetas[j]);
    log_w(j) = -(cost - center_cost) / temperature + 0.5 * quad / temperature;
  }
  const double max_log = log_w.maxCoeff();
  if (!std::isfinite(max_log)) {
    throw Error(ErrorCode::kDegenerateWeights, "no sample has a finite weight");
  }
  out.weights = (log_w.array() - max_log).exp().matrix();
  const double total = out.weights.sum();
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw Error(ErrorCode::kDegenerateWeights, "importance weights underflow");
  }
  out.weights /= total;

  Vector6d mean = Vector6d::Zero();
  for (int j = 0; j < n_samples; ++j) mean += out.weights(j) * thetas[j];
  out.expected = retract(center.pose, mean);
  return out;
}

}  // namespace facerecon
