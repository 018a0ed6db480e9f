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

#ifndef FACERECON_EXPERIMENTS_HPP_
#define FACERECON_EXPERIMENTS_HPP_

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "facerecon/losses.hpp"
#include "facerecon/metrics.hpp"
#include "facerecon/synth.hpp"

namespace facerecon {

// ---------------------------------------------------------------------------
// Pose evaluation

enum class WeightMode { kWeighted, kUnweighted };

struct PoseEvalResult {
  EvalReport summary;
  // Empty entries mark samples whose solve failed.
  std::vector<std::optional<EvalReport>> per_sample;
  std::vector<RigidPose> poses;
  double median_add = 0.0;
};

// Mirrors inference: noisy landmarks are mapped into the crop frame, unwarped
// back, and solved against the ground-truth canonical mesh. Solver failures
// are counted in summary.failure_count rather than thrown.
PoseEvalResult run_pose_eval(const Dataset& dataset, WeightMode mode, int threads = 0);

// ---------------------------------------------------------------------------
// PnP finetuning benchmark
//
// Each trial replaces the network with per-sample free variables (landmarks,
// log sigmas, PCA coefficients). Supervision consists of `label_draws` noisy
// copies of the 2D and 3D labels; the phase-1 objective
// lambda1 gnll + lambda2 vdc + lambda3 wpdc (each averaged over the draws) has
// a closed-form optimum where the trial starts. Phase 2 adds lambda4 pnp_loss
// and runs diagonally preconditioned gradient descent, halving the rate
// whenever a step would increase the loss.

struct FinetuneConfig {
  int steps = 60;
  double learning_rate = 0.1;
  TotalLossConfig loss;
  std::array<bool, 4> phase1_active = {true, true, true, false};
  std::array<bool, 4> phase2_active = {true, true, true, true};
  int trials = 50;
  std::uint64_t seed = 1;
  int label_draws = 3;
  double mesh_label_noise = 0.5;  // mm per axis
  double divergence_factor = 10.0;
  int threads = 0;

  void validate() const;
};

nlohmann::json to_json(const FinetuneConfig& cfg);
FinetuneConfig finetune_config_from_json(const nlohmann::json& j);

struct TrialResult {
  int trial = 0;
  std::int64_t sample_id = 0;
  EvalReport before;
  EvalReport after;
  double loss_before = 0.0;
  double loss_after = 0.0;
  int steps_run = 0;
  bool aborted = false;
  std::string abort_reason;
};

struct BenchmarkResult {
  std::vector<TrialResult> trials;
  double win_rate = 0.0;  // share of trials with lower ADD after finetuning
  double mean_add_before = 0.0;
  double mean_add_after = 0.0;
  double mean_add_delta = 0.0;  // after - before
  int aborted = 0;
};

nlohmann::json to_json(const BenchmarkResult& result);

// Per-trial state exposed for testing the phase-1 initialization.
struct StudentState {
  LandmarkSet landmarks;
  PcaCoeffs coeffs;
};

struct TrialLabels {
  std::vector<PointSet2> landmarks;  // one per draw
  std::vector<CanonicalMesh> meshes;
  std::vector<PcaCoeffs> coeffs;
};

TrialLabels draw_trial_labels(const SyntheticSample& sample, const PcaModel& model,
                              const FinetuneConfig& cfg, int trial);
StudentState phase1_optimum(const TrialLabels& labels, const PcaModel& model);

// Objective of one phase at a student state, with gradients folded onto
// (mu, log_sigma, coeffs). `pnp_pose`, when given, warm-starts the PnP layer
// and receives its solution.
LossValue finetune_objective(const StudentState& state, const TrialLabels& labels,
                             const SyntheticSample& sample, const PcaModel& model,
                             const TotalLossConfig& loss, const std::array<bool, 4>& active,
                             std::optional<RigidPose>* pnp_pose = nullptr,
                             bool sigma_through_pnp = false);

TrialResult run_finetune_trial(const Dataset& dataset, const FinetuneConfig& cfg, int trial);
BenchmarkResult run_finetune_benchmark(const Dataset& dataset, const FinetuneConfig& cfg);

// ---------------------------------------------------------------------------
// Gradient audit

// max_i |analytic_i - numeric_i| / max(max_i |numeric_i|, 1e-12)
double relative_error(const Eigen::Ref<const Eigen::MatrixXd>& analytic,
                      const Eigen::Ref<const Eigen::MatrixXd>& numeric);

// Central differences of f with respect to every entry of x.
Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double step);

struct GradAuditRow {
  std::string op;
  double max_rel_error = 0.0;
  double threshold = 0.0;
  int instances = 0;
  bool pass = true;
};

std::vector<GradAuditRow> run_grad_audit(std::uint64_t seed, int n_instances);
nlohmann::json to_json(const std::vector<GradAuditRow>& rows);

// Random small PnP instance used by the gradient audit and tests: n points in
// front of the camera, pixel noise `noise` and per-point sigmas in [0.5, 3].
PnPProblem random_pnp_problem(std::uint64_t seed, Eigen::Index n, double noise,
                              RigidPose* true_pose = nullptr);

}  // namespace facerecon

#endif  // FACERECON_EXPERIMENTS_HPP_
