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

#include "facerecon/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <fmt/format.h>

#include "facerecon/error.hpp"

namespace facerecon {
namespace {

double angle_diff(double a, double b) {
  double d = std::fmod(a - b, 360.0);
  if (d >= 180.0) d -= 360.0;
  if (d < -180.0) d += 360.0;
  return std::abs(d);
}

double median_of(std::vector<double> values) {
  const std::size_t n = values.size();
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (n % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(values.begin(), mid);
  return 0.5 * (lower + upper);
}

}  // namespace

double mae_r(const RigidPose& pred, const RigidPose& gt, bool* gimbal_lock) {
  const EulerAngles a = pose_to_euler(pred);
  const EulerAngles b = pose_to_euler(gt);
  if (gimbal_lock) *gimbal_lock = a.gimbal_lock || b.gimbal_lock;
  return (angle_diff(a.yaw, b.yaw) + angle_diff(a.pitch, b.pitch) + angle_diff(a.roll, b.roll)) / 3.0;
}

double mae_t(const RigidPose& pred, const RigidPose& gt) {
  return (pred.translation() - gt.translation()).cwiseAbs().mean();
}

double add(const RigidPose& pred, const RigidPose& gt, const CanonicalMesh& mesh_gt) {
  if (mesh_gt.rows() == 0) throw Error(ErrorCode::kInvalidArgument, "ADD on empty mesh");
  return (gt.transform(mesh_gt) - pred.transform(mesh_gt)).rowwise().norm().mean();
}

double geodesic_distance(const RigidPose& pred, const RigidPose& gt) {
  // arccos((tr - 1) / 2) written as atan2 so it stays accurate near 0 and pi.
  const Eigen::Matrix3d rel = pred.rotation_matrix().transpose() * gt.rotation_matrix();
  const Eigen::Vector3d axis(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0), rel(1, 0) - rel(0, 1));
  return std::atan2(0.5 * axis.norm(), 0.5 * (rel.trace() - 1.0));
}

VertexErrorStats vertex_error_stats(const CanonicalMesh& pred, const CanonicalMesh& gt) {
  if (pred.rows() != gt.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "vertex count mismatch");
  }
  if (pred.rows() == 0) throw Error(ErrorCode::kInvalidArgument, "empty mesh");
  const Eigen::VectorXd d = (pred - gt).rowwise().norm();
  return {median_of(std::vector<double>(d.data(), d.data() + d.size())), d.mean()};
}

EvalReport evaluate_sample(const RigidPose& pred, const RigidPose& gt,
                           const CanonicalMesh& mesh_pred, const CanonicalMesh& mesh_gt) {
  EvalReport r;
  r.mae_r = mae_r(pred, gt);
  r.mae_t = mae_t(pred, gt);
  r.add = add(pred, gt, mesh_gt);
  r.geodesic = geodesic_distance(pred, gt);
  const VertexErrorStats v = vertex_error_stats(mesh_pred, mesh_gt);
  r.vertex_median = v.median;
  r.vertex_mean = v.mean;
  r.sample_count = 1;
  return r;
}

EvalReport aggregate(std::span<const EvalReport> reports) {
  if (reports.empty()) throw Error(ErrorCode::kInvalidArgument, "aggregate of zero reports");
  EvalReport out;
  out.sample_count = 0;
  std::vector<double> medians;
  medians.reserve(reports.size());
  for (const auto& r : reports) {
    const double w = static_cast<double>(r.sample_count);
    out.mae_r += w * r.mae_r;
    out.mae_t += w * r.mae_t;
    out.add += w * r.add;
    out.geodesic += w * r.geodesic;
    out.vertex_mean += w * r.vertex_mean;
    out.sample_count += r.sample_count;
    out.failure_count += r.failure_count;
    medians.push_back(r.vertex_median);
  }
  const double inv = 1.0 / static_cast<double>(out.sample_count);
  out.mae_r *= inv;
  out.mae_t *= inv;
  out.add *= inv;
  out.geodesic *= inv;
  out.vertex_mean *= inv;
  out.vertex_median = median_of(std::move(medians));
  return out;
}

nlohmann::json to_json(const EvalReport& r) {
  return {
      {"mae_r", r.mae_r},
      {"mae_t", r.mae_t},
      {"add", r.add},
      {"geodesic", r.geodesic},
      {"vertex_median", r.vertex_median},
      {"vertex_mean", r.vertex_mean},
      {"sample_count", r.sample_count},
      {"failure_count", r.failure_count},
  };
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.mae_r = j.at("mae_r").get<double>();
  r.mae_t = j.at("mae_t").get<double>();
  r.add = j.at("add").get<double>();
  r.geodesic = j.at("geodesic").get<double>();
  r.vertex_median = j.at("vertex_median").get<double>();
  r.vertex_mean = j.at("vertex_mean").get<double>();
  r.sample_count = j.at("sample_count").get<long>();
  r.failure_count = j.value("failure_count", 0L);
  return r;
}

std::string csv_header() {
  return "mae_r,mae_t,add,geodesic,vertex_median,vertex_mean,sample_count,failure_count";
}

std::string csv_row(const EvalReport& r) {
  return fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{},{}", r.mae_r, r.mae_t,
                     r.add, r.geodesic, r.vertex_median, r.vertex_mean, r.sample_count,
                     r.failure_count);
}

}  // namespace facerecon
