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


#include <algorithm>
#include <functional>
#include <cmath>
#include <vector>

#include <doctest.h>

#include "facerecon/error.hpp"
#include "facerecon/pnp.hpp"
#include "facerecon/random.hpp"
#include "grid_oracle.hpp"
#include "test_util.hpp"

namespace facerecon {
namespace {

using testing::angle_between;
using testing::synthetic_problem;

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kInvalidArgument;
}

TEST_CASE("dlt: noise-free seed is close and refinement is exact") {
  Random rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    RigidPose truth;
    const PnPProblem p = synthetic_problem(rng, 12, &truth);
    const RigidPose seed = solve_pnp_dlt(p);
    CHECK(angle_between(seed, truth) < 1e-2);
    CHECK((seed.translation() - truth.translation()).norm() < 1e-2 * truth.translation().norm());
    const PnPSolution s = solve_pnp_lm(p, seed);
    CHECK(s.converged);
    CHECK(angle_between(s.pose, truth) < 1e-6);
    CHECK((s.pose.translation() - truth.translation()).norm() < 1e-3);
  }
}

TEST_CASE("dlt: five correspondences are degenerate") {
  Random rng(1);
  RigidPose truth;
  const PnPProblem p = synthetic_problem(rng, 5, &truth);
  CHECK(code_of([&] { solve_pnp_dlt(p); }) == ErrorCode::kDegenerateConfiguration);
  CHECK(code_of([&] { solve_pnp_lm(p, truth); }) == ErrorCode::kDegenerateConfiguration);
}

TEST_CASE("dlt: coplanar structure is degenerate") {
  Random rng(2);
  RigidPose truth;
  PnPProblem p = synthetic_problem(rng, 20, &truth);
  p.points3.col(2).setConstant(5.0);
  p.points2 = project(p.points3, truth, p.cam);
  CHECK(code_of([&] { solve_pnp_dlt(p); }) == ErrorCode::kDegenerateConfiguration);
}

TEST_CASE("problem validation") {
  Random rng(3);
  RigidPose truth;
  PnPProblem p = synthetic_problem(rng, 10, &truth);
  PnPProblem bad = p;
  bad.points2.conservativeResize(9, 2);
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::kDimensionMismatch);
  bad = p;
  bad.sigmas = Eigen::VectorXd::Ones(10);
  (*bad.sigmas)(4) = 0.0;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::kInvalidArgument);
  bad.sigmas = Eigen::VectorXd::Ones(4);
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::kDimensionMismatch);
  bad = p;
  bad.points2(0, 0) = std::nan("");
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::kInvalidArgument);

  p.sigmas = Eigen::VectorXd::Constant(10, 2.0);
  CHECK_FALSE(p.unweighted().sigmas.has_value());
}

TEST_CASE("lm: ground-truth init is already stationary") {
  Random rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    RigidPose truth;
    const PnPProblem p = synthetic_problem(rng, 30, &truth);
    const PnPSolution s = solve_pnp_lm(p, truth);
    CHECK(s.final_cost < 1e-18);
    CHECK(s.cost_history.size() == 1);
    CHECK(s.converged);
  }
}

TEST_CASE("lm: noise-free data from the DLT seed") {
  Random rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    RigidPose truth;
    const PnPProblem p = synthetic_problem(rng, 40, &truth);
    const PnPSolution s = solve_pnp_lm(p, solve_pnp_dlt(p));
    CHECK(angle_between(s.pose, truth) < 1e-6);
    CHECK((s.pose.translation() - truth.translation()).norm() < 1e-3);
  }
}

TEST_CASE("lm: accepted costs never increase") {
  Random rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    RigidPose truth;
    PnPProblem p = synthetic_problem(rng, 30, &truth, 2.0);
    p.sigmas = Eigen::VectorXd(30);
    for (Eigen::Index i = 0; i < 30; ++i) (*p.sigmas)(i) = rng.uniform(0.5, 3.0);
    const RigidPose init = retract(truth, (Vector6d() << 0.2, -0.1, 0.15, 20, -10, 60).finished());
    const PnPSolution s = solve_pnp_lm(p, init);
    CHECK(s.converged);
    for (std::size_t k = 1; k < s.cost_history.size(); ++k) {
      CHECK(s.cost_history[k] <= s.cost_history[k - 1]);
    }
    CHECK(s.final_cost <= s.cost_history.back() * (1.0 + 1e-12));
  }
}

TEST_CASE("lm: restricted 2-DoF problem matches exhaustive grid search") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto g = testing::grid_instance(seed);
    const auto lm = testing::lm_restricted(g);
    const auto grid = testing::grid_search(g, 1e-3, 0.03, 0.05);
    CHECK_FALSE(grid.on_boundary);
    CHECK(std::abs(lm.yaw - grid.yaw) <= 1e-3);
    CHECK(std::abs(lm.tz - grid.tz) <= 1.0);
  }
}

TEST_CASE("lm: fixed parameters keep their initial value") {
  const auto g = testing::grid_instance(42);
  LmOptions opts;
  opts.free = {false, true, false, false, false, true};
  const RigidPose init = retract(g.base, (Vector6d() << 0, 0.03, 0, 0, 0, 15.0).finished());
  const PnPSolution s = solve_pnp_lm(g.problem, init, opts);
  const Vector6d d = local_coordinates(init, s.pose);
  CHECK(std::abs(d(0)) < 1e-15);
  CHECK(std::abs(d(2)) < 1e-15);
  CHECK(std::abs(d(3)) < 1e-12);
  CHECK(std::abs(d(4)) < 1e-12);
}

TEST_CASE("lm: iteration budget exhaustion is reported") {
  Random rng(8);
  RigidPose truth;
  const PnPProblem p = synthetic_problem(rng, 30, &truth, 1.0);
  LmOptions opts;
  opts.max_iterations = 1;
  const RigidPose init = retract(truth, (Vector6d() << 0.3, 0.2, -0.2, 30, 30, 100).finished());
  const PnPSolution s = solve_pnp_lm(p, init, opts);
  CHECK_FALSE(s.converged);
  CHECK(s.iterations == 1);
}

TEST_CASE("residuals: zero at the generating pose") {
  Random rng(9);
  RigidPose truth;
  const PnPProblem p = synthetic_problem(rng, 15, &truth);
  const ReprojectionResult r = reprojection_residuals(p, truth);
  CHECK(r.residuals.size() == 30);
  CHECK(r.residuals.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("residuals: Jacobian matches finite differences") {
  Random rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    RigidPose truth;
    PnPProblem p = synthetic_problem(rng, 15, &truth, 1.0);
    p.sigmas = Eigen::VectorXd(15);
    for (Eigen::Index i = 0; i < 15; ++i) (*p.sigmas)(i) = rng.uniform(0.5, 3.0);
    const RigidPose at = retract(truth, (Vector6d() << 0.01, -0.02, 0.01, 2, -1, 3).finished());
    const ReprojectionResult r = reprojection_residuals(p, at);
    Eigen::MatrixXd num(30, 6);
    for (int k = 0; k < 6; ++k) {
      Vector6d e = Vector6d::Zero();
      e(k) = 1e-6;
      num.col(k) = (reprojection_residuals(p, retract(at, e)).residuals -
                    reprojection_residuals(p, retract(at, -e)).residuals) / 2e-6;
    }
    const double rel = (r.jacobian - num).cwiseAbs().maxCoeff() / num.cwiseAbs().maxCoeff();
    CHECK(rel < 1e-5);
  }
}

TEST_CASE("residuals: doubling every sigma halves every residual") {
  Random rng(11);
  RigidPose truth;
  PnPProblem p = synthetic_problem(rng, 12, &truth, 1.5);
  p.sigmas = Eigen::VectorXd(12);
  for (Eigen::Index i = 0; i < 12; ++i) (*p.sigmas)(i) = rng.uniform(0.5, 3.0);
  const Eigen::VectorXd a = reprojection_residuals(p, truth).residuals;
  *p.sigmas *= 2.0;
  const Eigen::VectorXd b = reprojection_residuals(p, truth).residuals;
  CHECK((b - 0.5 * a).cwiseAbs().maxCoeff() < 1e-15 * a.cwiseAbs().maxCoeff() + 1e-300);
  CHECK(reprojection_cost(p, truth) == doctest::Approx(a.squaredNorm() / 4.0).epsilon(1e-14));
}

TEST_CASE("lm: common sigma scale leaves the minimizer unchanged") {
  Random rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    RigidPose truth;
    PnPProblem p = synthetic_problem(rng, 30, &truth, 1.0);
    p.sigmas = Eigen::VectorXd(30);
    for (Eigen::Index i = 0; i < 30; ++i) (*p.sigmas)(i) = rng.uniform(0.5, 3.0);
    const RigidPose init = solve_pnp_dlt(p);
    const PnPSolution a = solve_pnp_lm(p, init);
    *p.sigmas *= 3.7;
    const PnPSolution b = solve_pnp_lm(p, init);
    CHECK(angle_between(a.pose, b.pose) < 1e-9);
    CHECK((a.pose.translation() - b.pose.translation()).norm() < 1e-9);
    CHECK(b.final_cost == doctest::Approx(a.final_cost / (3.7 * 3.7)).epsilon(1e-9));
  }
}

TEST_CASE("lm: median translation error shrinks with the pixel noise") {
  const double levels[] = {2.0, 1.0, 0.5, 0.1};
  std::vector<double> medians;
  for (double s : levels) {
    Random rng(13);
    std::vector<double> errors;
    for (int trial = 0; trial < 100; ++trial) {
      RigidPose truth;
      const PnPProblem p = synthetic_problem(rng, 40, &truth, s);
      const PnPSolution sol = solve_pnp_lm(p, solve_pnp_dlt(p));
      errors.push_back((sol.pose.translation() - truth.translation()).norm());
    }
    std::nth_element(errors.begin(), errors.begin() + 50, errors.end());
    medians.push_back(errors[50]);
  }
  for (std::size_t k = 1; k < medians.size(); ++k) CHECK(medians[k] < medians[k - 1]);
}

}  // namespace
}  // namespace facerecon
