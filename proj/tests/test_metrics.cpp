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
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <doctest.h>

#include "facerecon/error.hpp"
#include "facerecon/metrics.hpp"
#include "facerecon/random.hpp"
#include "test_util.hpp"

namespace facerecon {
namespace {

using testing::random_pose;

constexpr double kPi = std::numbers::pi;

RigidPose from_euler(double yaw, double pitch, double roll) {
  EulerAngles e;
  e.yaw = yaw;
  e.pitch = pitch;
  e.roll = roll;
  return euler_to_pose(e);
}

TEST_CASE("mae_r") {
  const RigidPose a = from_euler(10, 20, 30);
  CHECK(mae_r(a, a) == 0.0);
  CHECK(mae_r(RigidPose::identity(), RigidPose::identity()) == 0.0);
  CHECK(mae_r(from_euler(11, 22, 33), a) == doctest::Approx(2.0).epsilon(1e-12));
  // Wrap-around: 179 vs -179 is 2 degrees apart.
  CHECK(mae_r(from_euler(179, 0, 0), from_euler(-179, 0, 0)) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  Random rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const RigidPose p = random_pose(rng);
    const RigidPose q = random_pose(rng);
    CHECK(std::abs(mae_r(p, q) - mae_r(q, p)) <= 1e-12);
    CHECK(mae_r(p, p) == 0.0);
  }

  bool lock = false;
  mae_r(from_euler(0, 90, 0), RigidPose::identity(), &lock);
  CHECK(lock);
  mae_r(a, RigidPose::identity(), &lock);
  CHECK_FALSE(lock);
}

TEST_CASE("mae_t") {
  const RigidPose a(Eigen::Quaterniond::Identity(), Eigen::Vector3d(1, 2, 3));
  const RigidPose b(Eigen::Quaterniond::Identity(), Eigen::Vector3d(4, 2, 3));
  CHECK(mae_t(a, a) == 0.0);
  CHECK(mae_t(b, a) == 1.0);
  CHECK(mae_t(a, b) == mae_t(b, a));
}

TEST_CASE("add") {
  Random rng(2);
  const CanonicalMesh mesh = testing::random_points(rng, 100);
  for (int trial = 0; trial < 50; ++trial) {
    const RigidPose gt = random_pose(rng);
    CHECK(add(gt, gt, mesh) == 0.0);
    const Eigen::Vector3d d(rng.normal(), rng.normal(), rng.normal());
    const RigidPose shifted(gt.rotation(), gt.translation() + d);
    CHECK(std::abs(add(shifted, gt, mesh) - d.norm()) <= 1e-12);

    const RigidPose pred = random_pose(rng);
    CHECK(std::abs(add(pred, gt, mesh) - add(gt, pred, mesh)) <= 1e-12 * add(pred, gt, mesh));
    const RigidPose common = random_pose(rng);
    const double moved = add(compose(common, pred), compose(common, gt), mesh);
    CHECK(std::abs(moved - add(pred, gt, mesh)) <= 1e-9);
  }
  CHECK_THROWS_AS(add(RigidPose::identity(), RigidPose::identity(), CanonicalMesh(0, 3)), Error);
}

TEST_CASE("geodesic distance") {
  Random rng(3);
  const RigidPose id = RigidPose::identity();
  CHECK(geodesic_distance(id, id) == 0.0);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
    axis.normalize();
    const RigidPose half(Eigen::Quaterniond(Eigen::AngleAxisd(kPi, axis)), Eigen::Vector3d::Zero());
    CHECK(geodesic_distance(half, id) == doctest::Approx(kPi).epsilon(1e-12));
  }
  for (int trial = 0; trial < 500; ++trial) {
    const RigidPose a = random_pose(rng);
    const RigidPose b = random_pose(rng);
    const RigidPose c = random_pose(rng);
    const double dot = std::abs(a.rotation().coeffs().dot(b.rotation().coeffs()));
    const double quat_angle = 2.0 * std::acos(std::min(dot, 1.0));
    CHECK(std::abs(geodesic_distance(a, b) - quat_angle) < 1e-9);
    CHECK(geodesic_distance(a, b) == doctest::Approx(geodesic_distance(b, a)).epsilon(1e-12));
    CHECK(geodesic_distance(a, c) <= geodesic_distance(a, b) + geodesic_distance(b, c) + 1e-9);
  }
}

TEST_CASE("vertex error stats") {
  Random rng(4);
  const CanonicalMesh a = testing::random_points(rng, 51);
  const VertexErrorStats zero = vertex_error_stats(a, a);
  CHECK(zero.median == 0.0);
  CHECK(zero.mean == 0.0);
  const Eigen::RowVector3d d(0.3, -1.2, 2.0);
  CanonicalMesh b = a;
  b.rowwise() += d;
  const VertexErrorStats s = vertex_error_stats(b, a);
  CHECK(std::abs(s.median - d.norm()) <= 1e-12);
  CHECK(std::abs(s.mean - d.norm()) <= 1e-12);

  CanonicalMesh c = CanonicalMesh::Zero(4, 3);
  CanonicalMesh g = CanonicalMesh::Zero(4, 3);
  c(0, 0) = 1;
  c(1, 0) = 2;
  c(2, 0) = 3;
  c(3, 0) = 10;
  const VertexErrorStats even = vertex_error_stats(c, g);
  CHECK(even.median == 2.5);
  CHECK(even.mean == 4.0);
  CHECK_THROWS_AS(vertex_error_stats(c, g.topRows(3)), Error);
}

EvalReport random_report(Random& rng) {
  EvalReport r;
  r.mae_r = rng.uniform(0, 5);
  r.mae_t = rng.uniform(0, 5);
  r.add = rng.uniform(0, 20);
  r.geodesic = rng.uniform(0, 0.1);
  r.vertex_median = rng.uniform(0, 3);
  r.vertex_mean = rng.uniform(0, 3);
  return r;
}

void check_close(const EvalReport& a, const EvalReport& b, double tol) {
  CHECK(std::abs(a.mae_r - b.mae_r) <= tol);
  CHECK(std::abs(a.mae_t - b.mae_t) <= tol);
  CHECK(std::abs(a.add - b.add) <= tol);
  CHECK(std::abs(a.geodesic - b.geodesic) <= tol);
  CHECK(std::abs(a.vertex_median - b.vertex_median) <= tol);
  CHECK(std::abs(a.vertex_mean - b.vertex_mean) <= tol);
}

TEST_CASE("aggregate") {
  Random rng(5);
  const EvalReport one = random_report(rng);
  const EvalReport self = aggregate(std::vector<EvalReport>{one});
  check_close(self, one, 0.0);
  CHECK(self.sample_count == 1);

  const EvalReport two = aggregate(std::vector<EvalReport>{one, one});
  check_close(two, one, 1e-15);
  CHECK(two.sample_count == 2);

  std::vector<EvalReport> many;
  for (int i = 0; i < 31; ++i) many.push_back(random_report(rng));
  many[3].failure_count = 2;
  const EvalReport base = aggregate(many);
  CHECK(base.failure_count == 2);
  std::vector<double> medians;
  for (const auto& r : many) medians.push_back(r.vertex_median);
  std::sort(medians.begin(), medians.end());
  CHECK(base.vertex_median == medians[15]);
  for (int trial = 0; trial < 20; ++trial) {
    for (std::size_t i = many.size() - 1; i > 0; --i) std::swap(many[i], many[rng.below(i + 1)]);
    check_close(aggregate(many), base, 1e-12);
  }
  CHECK_THROWS_AS(aggregate(std::vector<EvalReport>{}), Error);
}

TEST_CASE("report serialization") {
  Random rng(6);
  EvalReport r = random_report(rng);
  r.sample_count = 7;
  r.failure_count = 1;
  const EvalReport back = eval_report_from_json(to_json(r));
  check_close(back, r, 0.0);
  CHECK(back.sample_count == 7);
  CHECK(back.failure_count == 1);
  const auto j = to_json(r);
  for (const char* key : {"mae_r", "mae_t", "add", "geodesic", "vertex_median", "vertex_mean", "sample_count",
                          "failure_count"}) {
    CHECK(j.contains(key));
  }
  CHECK(csv_header() == "mae_r,mae_t,add,geodesic,vertex_median,vertex_mean,sample_count,failure_count");
  const std::string row = csv_row(r);
  CHECK(std::count(row.begin(), row.end(), ',') == 7);
  CHECK(std::stod(row.substr(0, row.find(','))) == r.mae_r);
}

TEST_CASE("evaluate_sample combines the metrics") {
  Random rng(7);
  const CanonicalMesh mesh = testing::random_points(rng, 30);
  const RigidPose gt = random_pose(rng);
  const RigidPose pred = random_pose(rng);
  CanonicalMesh pred_mesh = mesh;
  pred_mesh.rowwise() += Eigen::RowVector3d(0, 0, 1);
  const EvalReport r = evaluate_sample(pred, gt, pred_mesh, mesh);
  CHECK(r.mae_r == mae_r(pred, gt));
  CHECK(r.mae_t == mae_t(pred, gt));
  CHECK(r.add == add(pred, gt, mesh));
  CHECK(r.geodesic == geodesic_distance(pred, gt));
  CHECK(r.vertex_mean == doctest::Approx(1.0).epsilon(1e-14));
}

}  // namespace
}  // namespace facerecon
