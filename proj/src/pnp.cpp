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

#include "facerecon/pnp.hpp"

#include <cmath>
#include <string>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "facerecon/error.hpp"

namespace facerecon {
namespace {

constexpr Eigen::Index kMinCorrespondences = 6;

double weight_of(const PnPProblem& p, Eigen::Index i) {
  return p.sigmas ? 1.0 / (*p.sigmas)(i) : 1.0;
}

void throw_depth(Eigen::Index i) {
  throw Error(ErrorCode::kNonPositiveDepth, "point " + std::to_string(i) + " behind camera", i);
}

}  // namespace

void PnPProblem::validate() const {
  if (points3.rows() != points2.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "2D and 3D point counts differ");
  }
  if (sigmas && sigmas->size() != points3.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "sigma count differs from point count");
  }
  if (points3.rows() < kMinCorrespondences) {
    throw Error(ErrorCode::kDegenerateConfiguration,
                "need at least 6 correspondences, got " + std::to_string(points3.rows()));
  }
  if (sigmas && !((sigmas->array() > 0.0).all() && sigmas->allFinite())) {
    throw Error(ErrorCode::kInvalidArgument, "sigmas must be positive and finite");
  }
  if (!points3.allFinite() || !points2.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, "non-finite coordinates");
  }
  cam.validate();
}

PnPProblem PnPProblem::unweighted() const {
  PnPProblem p = *this;
  p.sigmas.reset();
  return p;
}

ReprojectionResult reprojection_residuals(const PnPProblem& p, const RigidPose& pose) {
  const Eigen::Index n = p.size();
  const Eigen::Matrix3d r = pose.rotation_matrix();
  const Eigen::Vector3d& t = pose.translation();
  ReprojectionResult out;
  out.residuals.resize(2 * n);
  out.jacobian.resize(2 * n, 6);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d v = r * p.points3.row(i).transpose();
    const Eigen::Vector3d c = v + t;
    if (!(c.z() > 0.0)) throw_depth(i);
    const double w = weight_of(p, i);
    const double iz = 1.0 / c.z();
    out.residuals(2 * i) = w * (p.cam.fx * c.x() * iz + p.cam.cx - p.points2(i, 0));
    out.residuals(2 * i + 1) = w * (p.cam.fy * c.y() * iz + p.cam.cy - p.points2(i, 1));

    Eigen::Matrix<double, 2, 3> dpi;
    dpi << p.cam.fx * iz, 0.0, -p.cam.fx * c.x() * iz * iz,
           0.0, p.cam.fy * iz, -p.cam.fy * c.y() * iz * iz;
    // d c / d omega = -[v]x, d c / d tau = I.
    out.jacobian.block<2, 3>(2 * i, 0) = -w * dpi * skew(v);
    out.jacobian.block<2, 3>(2 * i, 3) = w * dpi;
  }
  return out;
}

double reprojection_cost(const PnPProblem& p, const RigidPose& pose) {
  const Eigen::Matrix3d r = pose.rotation_matrix();
  double cost = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const Eigen::Vector3d c = r * p.points3.row(i).transpose() + pose.translation();
    if (!(c.z() > 0.0)) throw_depth(i);
    const double w = weight_of(p, i);
    const double du = p.cam.fx * c.x() / c.z() + p.cam.cx - p.points2(i, 0);
    const double dv = p.cam.fy * c.y() / c.z() + p.cam.cy - p.points2(i, 1);
    cost += w * w * (du * du + dv * dv);
  }
  return cost;
}

RigidPose solve_pnp_dlt(const PnPProblem& p) {
  p.validate();
  const Eigen::Index n = p.size();

  // Condition the 3D points: zero centroid, mean distance sqrt(3).
  const Eigen::Vector3d centroid = p.points3.colwise().mean().transpose();
  const double spread = (p.points3.rowwise() - centroid.transpose()).rowwise().norm().mean();
  if (!(spread > 0.0)) {
    throw Error(ErrorCode::kDegenerateConfiguration, "all 3D points coincide");
  }
  const double s = std::sqrt(3.0) / spread;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n, 12);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Vector4d xh;
    xh << s * (p.points3.row(i).transpose() - centroid), 1.0;
    const double xn = (p.points2(i, 0) - p.cam.cx) / p.cam.fx;
    const double yn = (p.points2(i, 1) - p.cam.cy) / p.cam.fy;
    const double w = weight_of(p, i);
    a.block<1, 4>(2 * i, 0) = w * xh.transpose();
    a.block<1, 4>(2 * i, 8) = -w * xn * xh.transpose();
    a.block<1, 4>(2 * i + 1, 4) = w * xh.transpose();
    a.block<1, 4>(2 * i + 1, 8) = -w * yn * xh.transpose();
  }

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  // A generic configuration has a one-dimensional null space. Planar
  // structure adds three more (M + v * plane^T), collinear even more.
  if (!(sv(10) > 1e-8 * sv(0))) {
    throw Error(ErrorCode::kDegenerateConfiguration, "rank-deficient DLT system (coplanar or collinear points)");
  }
  const Eigen::VectorXd m = svd.matrixV().col(11);
  Eigen::Matrix<double, 3, 4> mp;
  mp.row(0) = m.segment<4>(0).transpose();
  mp.row(1) = m.segment<4>(4).transpose();
  mp.row(2) = m.segment<4>(8).transpose();

  // Undo conditioning: X' = s (X - c).
  Eigen::Matrix4d cond = Eigen::Matrix4d::Identity();
  cond.topLeftCorner<3, 3>() *= s;
  cond.topRightCorner<3, 1>() = -s * centroid;
  Eigen::Matrix<double, 3, 4> proj = mp * cond;

  Eigen::Matrix3d lin = proj.leftCols<3>();
  if (lin.determinant() < 0.0) {
    proj = -proj;
    lin = -lin;
  }
  const Eigen::JacobiSVD<Eigen::Matrix3d> rsvd(lin, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d rot = rsvd.matrixU() * rsvd.matrixV().transpose();
  if (rot.determinant() < 0.0) {
    throw Error(ErrorCode::kDegenerateConfiguration, "DLT rotation has negative determinant");
  }
  const double lambda = rsvd.singularValues().mean();
  if (!(lambda > 0.0)) {
    throw Error(ErrorCode::kDegenerateConfiguration, "DLT scale vanished");
  }
  return RigidPose(rot, proj.col(3) / lambda);
}

PnPSolution solve_pnp_lm(const PnPProblem& p, const RigidPose& init, const LmOptions& options) {
  p.validate();

  PnPSolution sol;
  sol.pose = init;
  ReprojectionResult cur = reprojection_residuals(p, init);
  double cost = cur.residuals.squaredNorm();
  sol.cost_history.push_back(cost);

  double damping = options.initial_damping;
  int iterations = 0;
  bool converged = false;
  Vector6d grad = cur.jacobian.transpose() * cur.residuals;
  for (int k = 0; k < 6; ++k) {
    if (!options.free[k]) grad(k) = 0.0;
  }

  while (iterations < options.max_iterations) {
    if (grad.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
      converged = true;
      break;
    }
    const Matrix6d h = cur.jacobian.transpose() * cur.jacobian;
    Matrix6d damped = h;
    for (int k = 0; k < 6; ++k) {
      damped(k, k) += damping * std::max(h(k, k), 1e-12);
    }
    for (int k = 0; k < 6; ++k) {
      if (options.free[k]) continue;
      damped.row(k).setZero();
      damped.col(k).setZero();
      damped(k, k) = 1.0;
    }
    const Vector6d step = -damped.ldlt().solve(grad);
    ++iterations;
    if (!step.allFinite() || step.norm() < options.step_tolerance) {
      converged = step.allFinite();
      break;
    }

    const RigidPose candidate = retract(sol.pose, step);
    bool accepted = false;
    try {
      ReprojectionResult next = reprojection_residuals(p, candidate);
      const double next_cost = next.residuals.squaredNorm();
      if (next_cost < cost) {
        accepted = true;
        sol.pose = candidate;
        cost = next_cost;
        cur = std::move(next);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNonPositiveDepth) throw;
    }
    if (accepted) {
      sol.cost_history.push_back(cost);
      damping = std::max(damping / options.damping_factor, 1e-15);
      grad = cur.jacobian.transpose() * cur.residuals;
      for (int k = 0; k < 6; ++k) {
        if (!options.free[k]) grad(k) = 0.0;
      }
    } else {
      damping *= options.damping_factor;
    }
  }

  // Near the minimum cost differences drown in roundoff long before the
  // gradient does. Polish with Gauss-Newton steps judged on the gradient so the
  // returned pose is stationary to the precision implicit differentiation needs.
  if (converged) {
    for (int k = 0; k < options.polish_iterations; ++k) {
      const double g0 = grad.lpNorm<Eigen::Infinity>();
      if (g0 == 0.0) break;
      Matrix6d h = cur.jacobian.transpose() * cur.jacobian;
      for (int a = 0; a < 6; ++a) {
        if (options.free[a]) continue;
        h.row(a).setZero();
        h.col(a).setZero();
        h(a, a) = 1.0;
      }
      const Vector6d step = -h.ldlt().solve(grad);
      if (!step.allFinite()) break;
      const RigidPose candidate = retract(sol.pose, step);
      ReprojectionResult next;
      try {
        next = reprojection_residuals(p, candidate);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNonPositiveDepth) throw;
        break;
      }
      Vector6d next_grad = next.jacobian.transpose() * next.residuals;
      for (int a = 0; a < 6; ++a) {
        if (!options.free[a]) next_grad(a) = 0.0;
      }
      const double next_cost = next.residuals.squaredNorm();
      if (!(next_grad.lpNorm<Eigen::Infinity>() < 0.5 * g0) ||
          !(next_cost <= cost * (1.0 + options.polish_cost_tolerance))) {
        break;
      }
      sol.pose = candidate;
      cost = next_cost;
      cur = std::move(next);
      grad = next_grad;
    }
  }

  sol.final_cost = cost;
  sol.iterations = iterations;
  sol.converged = converged;
  sol.gradient_norm = grad.lpNorm<Eigen::Infinity>();
  return sol;
}

}  // namespace facerecon
