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

#ifndef FACERECON_METRICS_HPP_
#define FACERECON_METRICS_HPP_

#include <span>
#include <string>

#include <json.hpp>

#include "facerecon/geometry.hpp"

namespace facerecon {

// Angles in degrees / radians, distances in mm.
struct EvalReport {
  double mae_r = 0.0;
  double mae_t = 0.0;
  double add = 0.0;
  double geodesic = 0.0;
  double vertex_median = 0.0;
  double vertex_mean = 0.0;
  long sample_count = 1;
  long failure_count = 0;
};

// Mean absolute yaw/pitch/roll difference, each wrapped onto the circle.
// `gimbal_lock`, when given, reports whether either pose hit the singularity.
double mae_r(const RigidPose& pred, const RigidPose& gt, bool* gimbal_lock = nullptr);
double mae_t(const RigidPose& pred, const RigidPose& gt);
// Mean per-vertex distance between the mesh posed by pred and by gt.
double add(const RigidPose& pred, const RigidPose& gt, const CanonicalMesh& mesh_gt);
// arccos((trace(R_pred^T R_gt) - 1) / 2).
double geodesic_distance(const RigidPose& pred, const RigidPose& gt);

struct VertexErrorStats {
  double median = 0.0;
  double mean = 0.0;
};
VertexErrorStats vertex_error_stats(const CanonicalMesh& pred, const CanonicalMesh& gt);

// All metrics for one sample.
EvalReport evaluate_sample(const RigidPose& pred, const RigidPose& gt,
                           const CanonicalMesh& mesh_pred, const CanonicalMesh& mesh_gt);

// Arithmetic means (weighted by sample_count) except vertex_median, which is
// the median of the per-report medians. Failure counts add up.
EvalReport aggregate(std::span<const EvalReport> reports);

nlohmann::json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& j);
std::string csv_header();
std::string csv_row(const EvalReport& report);

}  // namespace facerecon

#endif  // FACERECON_METRICS_HPP_
