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


// Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
// when any criterion fails.
//
// usage: acceptance <facerecon_cli> <work_dir>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "facerecon/binary_io.hpp"
#include "facerecon/diff_pnp.hpp"
#include "facerecon/experiments.hpp"
#include "facerecon/losses.hpp"
#include "facerecon/metrics.hpp"
#include "facerecon/random.hpp"
#include "facerecon/shape_pca.hpp"
#include "facerecon/synth.hpp"
#include "grid_oracle.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace facerecon;

namespace {

// Criterion 1
constexpr int kAuditInstances = 20;
constexpr double kSmoothLossTol = 1e-6;
constexpr double kPnpGradTol = 1e-4;
constexpr double kAuditSeconds = 60.0;
// Criterion 2
constexpr int kExactSamples = 100;
constexpr double kExactRotTol = 1e-6;    // rad
constexpr double kExactTransTol = 1e-3;  // mm
constexpr double kExactAddTol = 1e-3;    // mm
// Criterion 3
constexpr int kGridInstances = 20;
constexpr double kGridStep = 1e-3;
// Criterion 4
constexpr double kSoftTemperature = 1e-8;  // times final_cost
constexpr double kSoftTol = 1e-4;
// Criterion 5
constexpr double kOrthoTol = 1e-9;
constexpr double kRoundTripTol = 1e-9;
// Criterion 7
constexpr int kPairedDatasets = 100;
constexpr int kPairedSamples = 100;
constexpr int kPairedWinsNeeded = 80;
// Criterion 8
constexpr int kFinetuneTrials = 50;
constexpr double kWinRateNeeded = 0.7;
constexpr double kFinetuneSeconds = 600.0;
// Criterion 9
constexpr double kMetricTol = 1e-12;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome gradient_audit() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = run_grad_audit(2026, kAuditInstances);
  const double elapsed = seconds_since(t0);
  bool ok = elapsed < kAuditSeconds;
  std::string detail;
  for (const auto& r : rows) {
    double tol = 0.0;
    if (r.op == "gnll" || r.op == "vdc" || r.op == "wpdc") tol = kSmoothLossTol;
    else if (r.op == "pnp_loss" || r.op == "pnp_backward_ift") tol = kPnpGradTol;
    else continue;
    ok = ok && r.instances >= kAuditInstances && r.max_rel_error <= tol;
    detail += fmt::format("{}={:.2e} ", r.op, r.max_rel_error);
  }
  return {ok, detail + fmt::format("time={:.1f}s", elapsed)};
}

Outcome pnp_exactness() {
  SceneConfig cfg;
  cfg.n_samples = kExactSamples;
  const ShapeSpace space = gen_shape_space(cfg);
  const auto samples = gen_samples(space.model, cfg, cfg.n_samples);
  double worst_rot = 0.0, worst_t = 0.0, worst_add = 0.0;
  for (const auto& s : samples) {
    PnPProblem p;
    p.points3 = s.mesh;
    p.points2 = s.clean;
    p.cam = s.cam;
    const PnPSolution sol = pnp_forward(p);
    worst_rot = std::max(worst_rot, geodesic_distance(sol.pose, s.pose));
    worst_t = std::max(worst_t, (sol.pose.translation() - s.pose.translation()).norm());
    worst_add = std::max(worst_add, add(sol.pose, s.pose, s.mesh));
  }
  return {worst_rot < kExactRotTol && worst_t < kExactTransTol && worst_add < kExactAddTol,
          fmt::format("max rot={:.2e} rad, max trans={:.2e} mm, max ADD={:.2e} mm", worst_rot, worst_t, worst_add)};
}

Outcome grid_oracle() {
  int matched = 0;
  double worst_yaw = 0.0, worst_tz = 0.0;
  for (int i = 0; i < kGridInstances; ++i) {
    const auto g = testing::grid_instance(1000 + i);
    const auto lm = testing::lm_restricted(g);
    const auto grid = testing::grid_search(g, kGridStep, 0.03, 0.05);
    const double dy = std::abs(lm.yaw - grid.yaw);
    const double dz = std::abs(lm.tz - grid.tz) / 1000.0;  // m
    worst_yaw = std::max(worst_yaw, dy);
    worst_tz = std::max(worst_tz, dz);
    if (!grid.on_boundary && dy <= kGridStep && dz <= kGridStep) ++matched;
  }
  return {matched == kGridInstances,
          fmt::format("{}/{} within one cell, max |dyaw|={:.2e} rad, max |dtz|={:.2e} m", matched, kGridInstances,
                      worst_yaw, worst_tz)};
}

Outcome softargmin_limit() {
  double worst_rot = 0.0, worst_t = 0.0;
  for (int i = 0; i < 20; ++i) {
    const PnPProblem p = random_pnp_problem(3000 + i, 60, 1.0);
    const PnPSolution sol = pnp_forward(p);
    const PoseDistribution d = mc_softargmin_pose(p, sol, 64, kSoftTemperature * sol.final_cost, 17 + i);
    worst_rot = std::max(worst_rot, geodesic_distance(d.expected, sol.pose));
    worst_t = std::max(worst_t, (d.expected.translation() - sol.pose.translation()).norm());
  }
  return {worst_rot < kSoftTol && worst_t < kSoftTol,
          fmt::format("max rot={:.2e} rad, max trans={:.2e} mm", worst_rot, worst_t)};
}

Outcome pca_identities() {
  const ShapeSpace space = gen_shape_space(SceneConfig{});
  const PcaModel& m = space.model;
  const double ortho =
      (m.basis.transpose() * m.basis - Eigen::MatrixXd::Identity(m.n_components(), m.n_components())).cwiseAbs().maxCoeff();
  Random rng(5);
  double round_trip = 0.0;
  for (int i = 0; i < 50; ++i) {
    Eigen::VectorXd c(m.n_components());
    for (Eigen::Index j = 0; j < c.size(); ++j) c(j) = m.component_scales(j) * rng.normal();
    const CanonicalMesh mesh = reconstruct(m, c);
    round_trip = std::max(round_trip, (reconstruct(m, fit_coeffs(m, mesh)) - mesh).rowwise().norm().maxCoeff());
  }
  const bool ok = space.meshes.size() == 251 && m.n_components() == 250 && ortho <= kOrthoTol &&
                  round_trip < kRoundTripTol;
  return {ok, fmt::format("meshes={}, K={}, |B^T B - I|max={:.2e}, round trip={:.2e} mm", space.meshes.size(),
                          m.n_components(), ortho, round_trip)};
}

Outcome gnll_specialization() {
  Random rng(6);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    LandmarkSet l;
    l.mu = testing::random_points2(rng, 68);
    l.log_sigma = Eigen::VectorXd::Zero(68);
    const PointSet2 gt = testing::random_points2(rng, 68);
    const double half_sq = 0.5 * (l.mu - gt).squaredNorm();
    worst = std::max(worst, std::abs(gnll(l, gt).value - half_sq) / half_sq);
  }
  // Summation order differs between the two sides, so allow a few ulps.
  return {worst <= 8.0 * std::numeric_limits<double>::epsilon(), fmt::format("max rel diff={:.2e}", worst)};
}

Outcome weighting_trend() {
  SceneConfig cfg;
  cfg.n_samples = kPairedSamples;
  cfg.noise.occlusion_fraction = 0.2;
  cfg.noise.occlusion_multiplier = 5.0;
  const ShapeSpace space = gen_shape_space(cfg);
  int wins = 0;
  double sum_w = 0.0, sum_u = 0.0;
  for (int d = 0; d < kPairedDatasets; ++d) {
    SceneConfig dc = cfg;
    dc.seed = cfg.seed + 1 + static_cast<std::uint64_t>(d);
    const Dataset ds{dc, space.model, gen_samples(space.model, dc, dc.n_samples)};
    const double w = run_pose_eval(ds, WeightMode::kWeighted).median_add;
    const double u = run_pose_eval(ds, WeightMode::kUnweighted).median_add;
    if (w < u) ++wins;
    sum_w += w;
    sum_u += u;
  }
  return {wins >= kPairedWinsNeeded,
          fmt::format("weighted better in {}/{}, mean median ADD {:.4f} vs {:.4f} mm", wins, kPairedDatasets,
                      sum_w / kPairedDatasets, sum_u / kPairedDatasets)};
}

Outcome finetune_trend() {
  SceneConfig cfg;
  const ShapeSpace space = gen_shape_space(cfg);
  const Dataset ds{cfg, space.model, gen_samples(space.model, cfg, cfg.n_samples)};
  FinetuneConfig fc;
  fc.trials = std::max(fc.trials, kFinetuneTrials);
  const auto t0 = std::chrono::steady_clock::now();
  const BenchmarkResult r = run_finetune_benchmark(ds, fc);
  const double elapsed = seconds_since(t0);
  const bool ok = r.win_rate >= kWinRateNeeded && r.mean_add_after < r.mean_add_before && elapsed < kFinetuneSeconds;
  return {ok, fmt::format("trials={}, win rate={:.2f}, mean ADD {:.4f} -> {:.4f} mm, aborted={}, time={:.1f}s",
                          r.trials.size(), r.win_rate, r.mean_add_before, r.mean_add_after, r.aborted, elapsed)};
}

Outcome metric_checks() {
  Random rng(9);
  double worst = 0.0;
  const CanonicalMesh mesh = testing::random_points(rng, 500);
  for (int i = 0; i < 100; ++i) {
    const RigidPose gt = testing::random_pose(rng);
    const Eigen::Vector3d d(rng.normal(), rng.normal(), rng.normal());
    const RigidPose pred(gt.rotation(), gt.translation() + d);
    worst = std::max(worst, std::abs(add(pred, gt, mesh) - d.norm()));

    const RigidPose a = testing::random_pose(rng);
    const RigidPose b = testing::random_pose(rng);
    worst = std::max(worst, std::abs(mae_r(a, b) - mae_r(b, a)));
    worst = std::max(worst, std::abs(mae_r(a, a)));

    CanonicalMesh shifted = mesh;
    shifted.rowwise() += d.transpose();
    const VertexErrorStats v = vertex_error_stats(shifted, mesh);
    worst = std::max({worst, std::abs(v.median - d.norm()), std::abs(v.mean - d.norm())});
  }
  worst = std::max(worst, std::abs(mae_r(RigidPose::identity(), RigidPose::identity())));
  return {worst <= kMetricTol, fmt::format("max deviation={:.2e}", worst)};
}

int run(const std::string& cmd) {
  const int rc = std::system((cmd + " > /dev/null").c_str());
  return rc;
}

Outcome determinism(const fs::path& cli, const fs::path& work) {
  fs::remove_all(work);
  fs::create_directories(work);
  const std::string exe = "\"" + cli.string() + "\"";
  write_file(work / "scene.json", "{\"seed\": 11, \"n_samples\": 40}\n");
  write_file(work / "finetune.json", "{\"trials\": 10, \"steps\": 20}\n");
  std::vector<std::string> mismatched;
  for (const char* run_dir : {"a", "b"}) {
    const fs::path d = work / run_dir;
    if (run(exe + " synth-gen --config " + (work / "scene.json").string() + " --out " + (d / "ds").string()) != 0 ||
        run(exe + " finetune-bench --dataset " + (d / "ds").string() + " --config " +
            (work / "finetune.json").string() + " --out " + (d / "bench.json").string()) != 0) {
      return {false, "CLI invocation failed"};
    }
  }
  for (const char* f : {"ds/manifest.json", "ds/samples.jsonl", "ds/blobs.bin", "ds/model.pca", "bench.json"}) {
    if (read_file(work / "a" / f) != read_file(work / "b" / f)) mismatched.push_back(f);
  }
  std::string detail = mismatched.empty() ? "synth-gen and finetune-bench outputs byte-identical" : "differs:";
  for (const auto& m : mismatched) detail += " " + m;
  fs::remove_all(work);
  return {mismatched.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: acceptance <facerecon_cli> <work_dir>\n";
    return 2;
  }
  const fs::path cli = argv[1];
  const fs::path work = argv[2];

  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> fn;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient audit", gradient_audit},
      {2, "pnp exactness", pnp_exactness},
      {3, "brute-force grid oracle", grid_oracle},
      {4, "softargmin limit", softargmin_limit},
      {5, "pca identities", pca_identities},
      {6, "gnll specialization", gnll_specialization},
      {7, "uncertainty weighting trend", weighting_trend},
      {8, "finetune trend", finetune_trend},
      {9, "metric definitions", metric_checks},
      {10, "determinism", [&] { return determinism(cli, work); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << fmt::format("{} {:>2} {}: {}", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail) << std::endl;
  }
  std::cout << fmt::format("{} of {} criteria passed", criteria.size() - failed, criteria.size()) << std::endl;
  return failed == 0 ? 0 : 1;
}
