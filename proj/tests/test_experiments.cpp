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


#include <cmath>
#include <functional>

#include <doctest.h>

#include "facerecon/error.hpp"
#include "facerecon/experiments.hpp"
#include "facerecon/synth.hpp"

namespace facerecon {
namespace {

Dataset small_dataset(std::uint64_t seed, Eigen::Index n_samples, double base_sigma = 1.0) {
  SceneConfig cfg;
  cfg.seed = seed;
  cfg.n_vertices = 300;
  cfg.n_shapes = 41;
  cfg.k = 40;
  cfg.n_samples = n_samples;
  cfg.noise.base_sigma = base_sigma;
  const ShapeSpace space = gen_shape_space(cfg);
  return {cfg, space.model, gen_samples(space.model, cfg, n_samples)};
}

TEST_CASE("relative error and central differences") {
  const Eigen::Vector3d a(1.0, 2.0, 3.0);
  const Eigen::Vector3d b(1.0, 2.5, 3.0);
  CHECK(relative_error(a, b) == doctest::Approx(0.5 / 3.0).epsilon(1e-15));
  CHECK(relative_error(a, a) == 0.0);
  CHECK(relative_error(Eigen::Vector2d(1e-13, 0.0), Eigen::Vector2d::Zero()) == doctest::Approx(0.1));
  CHECK_THROWS_AS(relative_error(a, Eigen::Vector2d::Zero()), Error);

  auto f = [](const Eigen::VectorXd& x) { return x(0) * x(0) * x(1) + 3.0 * x(1); };
  const Eigen::VectorXd x = Eigen::Vector2d(2.0, -1.0);
  const Eigen::VectorXd g = central_difference(f, x, 1e-4);
  CHECK(g(0) == doctest::Approx(-4.0).epsilon(1e-9));
  CHECK(g(1) == doctest::Approx(7.0).epsilon(1e-9));
}

TEST_CASE("pose eval recovers noise-free poses") {
  const Dataset ds = small_dataset(2, 20, 0.0);
  const PoseEvalResult r = run_pose_eval(ds, WeightMode::kUnweighted);
  CHECK(r.summary.failure_count == 0);
  CHECK(r.summary.sample_count == 20);
  for (const auto& s : r.per_sample) {
    REQUIRE(s.has_value());
    CHECK(s->add < 1e-3);
  }
  CHECK(r.median_add < 1e-3);
}

TEST_CASE("pose eval: sigma weighting helps on heteroscedastic noise") {
  const Dataset ds = small_dataset(3, 100);
  const PoseEvalResult w = run_pose_eval(ds, WeightMode::kWeighted);
  const PoseEvalResult u = run_pose_eval(ds, WeightMode::kUnweighted);
  CHECK(w.summary.failure_count == 0);
  CHECK(w.median_add <= u.median_add);
}

TEST_CASE("pose eval is independent of the worker count") {
  const Dataset ds = small_dataset(4, 16);
  const PoseEvalResult a = run_pose_eval(ds, WeightMode::kWeighted, 1);
  const PoseEvalResult b = run_pose_eval(ds, WeightMode::kWeighted, 3);
  CHECK(to_json(a.summary) == to_json(b.summary));
  for (std::size_t i = 0; i < a.poses.size(); ++i) {
    CHECK(a.poses[i].translation() == b.poses[i].translation());
  }
}

TEST_CASE("finetune config round trip and validation") {
  FinetuneConfig cfg;
  cfg.steps = 17;
  cfg.loss.lambda = {1.0, 2.0, 3.0, 0.0};
  cfg.phase2_active = {true, false, true, true};
  const FinetuneConfig back = finetune_config_from_json(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));
  CHECK(to_json(finetune_config_from_json(nlohmann::json::object())) == to_json(FinetuneConfig{}));

  FinetuneConfig bad;
  bad.label_draws = 1;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = FinetuneConfig{};
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = FinetuneConfig{};
  bad.loss.lambda[1] = -2.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("phase-1 optimum is stationary") {
  const Dataset ds = small_dataset(5, 3);
  const FinetuneConfig cfg;
  const TrialLabels labels = draw_trial_labels(ds.samples[0], ds.model, cfg, 0);
  CHECK(labels.landmarks.size() == 3);
  const StudentState s = phase1_optimum(labels, ds.model);
  const LossValue v = finetune_objective(s, labels, ds.samples[0], ds.model, cfg.loss, cfg.phase1_active);
  CHECK(v.grad.d_mu.cwiseAbs().maxCoeff() < 1e-9);
  CHECK(v.grad.d_log_sigma.cwiseAbs().maxCoeff() < 1e-9);
  CHECK(v.grad.d_coeffs.cwiseAbs().maxCoeff() < 1e-9);

  // Perturbing any block raises the phase-1 objective.
  StudentState t = s;
  t.coeffs(0) += 0.1;
  CHECK(finetune_objective(t, labels, ds.samples[0], ds.model, cfg.loss, cfg.phase1_active).value > v.value);
  t = s;
  t.landmarks.mu(2, 1) += 0.1;
  CHECK(finetune_objective(t, labels, ds.samples[0], ds.model, cfg.loss, cfg.phase1_active).value > v.value);
}

TEST_CASE("finetune without the pnp term is a no-op") {
  const Dataset ds = small_dataset(6, 10);
  FinetuneConfig cfg;
  cfg.trials = 10;
  cfg.steps = 20;
  cfg.phase2_active = {true, true, true, false};
  const BenchmarkResult r = run_finetune_benchmark(ds, cfg);
  CHECK(r.aborted == 0);
  CHECK(std::abs(r.mean_add_delta) < 1e-9);
  for (const auto& t : r.trials) CHECK(std::abs(t.after.add - t.before.add) < 1e-9);

  FinetuneConfig zero_lambda;
  zero_lambda.trials = 5;
  zero_lambda.steps = 10;
  zero_lambda.loss.lambda[3] = 0.0;
  CHECK(std::abs(run_finetune_benchmark(ds, zero_lambda).mean_add_delta) < 1e-9);
}

TEST_CASE("finetune improves ADD and is deterministic") {
  const Dataset ds = small_dataset(7, 20);
  FinetuneConfig cfg;
  cfg.trials = 20;
  cfg.threads = 1;
  const BenchmarkResult a = run_finetune_benchmark(ds, cfg);
  cfg.threads = 4;
  const BenchmarkResult b = run_finetune_benchmark(ds, cfg);
  CHECK(to_json(a).dump() == to_json(b).dump());
  CHECK(a.mean_add_after < a.mean_add_before);
  CHECK(a.win_rate >= 0.7);
  for (const auto& t : a.trials) CHECK(t.loss_after <= t.loss_before);
}

TEST_CASE("finetune divergence guard aborts and records the trial") {
  const Dataset ds = small_dataset(8, 4);
  FinetuneConfig cfg;
  cfg.trials = 4;
  cfg.steps = 10;
  cfg.learning_rate = 1e4;
  const BenchmarkResult r = run_finetune_benchmark(ds, cfg);
  CHECK(r.aborted > 0);
  for (const auto& t : r.trials) {
    if (!t.aborted) continue;
    CHECK_FALSE(t.abort_reason.empty());
    CHECK(t.after.add == t.before.add);
  }
}

TEST_CASE("gradient audit") {
  CHECK(run_grad_audit(1, 0).empty());
  const auto rows = run_grad_audit(3, 3);
  REQUIRE(rows.size() == 7);
  for (const auto& r : rows) {
    CHECK_MESSAGE(r.pass, r.op << " " << r.max_rel_error);
    CHECK(r.instances == 3);
  }
  CHECK(to_json(run_grad_audit(3, 3)).dump() == to_json(rows).dump());
}

TEST_CASE("random pnp problems are reproducible") {
  RigidPose a_pose, b_pose;
  const PnPProblem a = random_pnp_problem(9, 20, 1.0, &a_pose);
  const PnPProblem b = random_pnp_problem(9, 20, 1.0, &b_pose);
  CHECK(a.points2 == b.points2);
  CHECK(a.points3 == b.points3);
  CHECK(*a.sigmas == *b.sigmas);
  CHECK(a.sigmas->minCoeff() >= 0.5);
  CHECK(a.sigmas->maxCoeff() <= 3.0);
}

}  // namespace
}  // namespace facerecon
