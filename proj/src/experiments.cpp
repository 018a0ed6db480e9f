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

#include "facerecon/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/QR>

#include "facerecon/error.hpp"
#include "facerecon/parallel.hpp"
#include "facerecon/random.hpp"
#include "facerecon/serialization.hpp"

namespace facerecon {
namespace {

constexpr std::uint64_t kLabelStream = 0x4c4142454cULL;  // "LABEL"

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

RigidPose solve_student_pose(const LandmarkSet& landmarks, const CanonicalMesh& mesh,
                             const CameraIntrinsics& cam) {
  PnPProblem p;
  p.points3 = mesh;
  p.points2 = landmarks.mu;
  p.sigmas = landmarks.sigma();
  p.cam = cam;
  return pnp_forward(p).pose;
}

}  // namespace

// ---------------------------------------------------------------------------
// Pose evaluation

PoseEvalResult run_pose_eval(const Dataset& dataset, WeightMode mode, int threads) {
  const auto n = static_cast<std::int64_t>(dataset.samples.size());
  PoseEvalResult out;
  out.per_sample.resize(dataset.samples.size());
  out.poses.resize(dataset.samples.size());
  parallel_for(n, threads, [&](std::int64_t i) {
    const SyntheticSample& s = dataset.samples[i];
    PnPProblem p;
    p.points3 = s.mesh;
    p.points2 = unwarp(s.warp, apply_warp(s.warp, s.noisy));
    if (mode == WeightMode::kWeighted) p.sigmas = s.sigma;
    p.cam = s.cam;
    try {
      const PnPSolution sol = pnp_forward(p);
      out.poses[i] = sol.pose;
      out.per_sample[i] = evaluate_sample(sol.pose, s.pose, s.mesh, s.mesh);
    } catch (const Error&) {
      out.per_sample[i].reset();
    }
  });

  std::vector<EvalReport> ok;
  std::vector<double> adds;
  for (const auto& r : out.per_sample) {
    if (!r) continue;
    ok.push_back(*r);
    adds.push_back(r->add);
  }
  const long failures = static_cast<long>(out.per_sample.size() - ok.size());
  if (ok.empty()) {
    out.summary = EvalReport{};
    out.summary.sample_count = 0;
  } else {
    out.summary = aggregate(ok);
  }
  out.summary.failure_count = failures;
  out.median_add = median(adds);
  return out;
}

// ---------------------------------------------------------------------------
// Finetuning benchmark

void FinetuneConfig::validate() const {
  if (steps < 1) throw Error(ErrorCode::kInvalidArgument, "steps must be >= 1");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::kInvalidArgument, "learning rate must be positive");
  if (trials < 1) throw Error(ErrorCode::kInvalidArgument, "trials must be >= 1");
  if (label_draws < 2) throw Error(ErrorCode::kInvalidArgument, "label_draws must be >= 2");
  if (!(mesh_label_noise >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "mesh label noise must be >= 0");
  if (!(divergence_factor > 0.0)) throw Error(ErrorCode::kInvalidArgument, "divergence factor must be positive");
  loss.validate();
}

nlohmann::json to_json(const FinetuneConfig& c) {
  return {
      {"steps", c.steps},
      {"learning_rate", c.learning_rate},
      {"lambda", c.loss.lambda},
      {"phase1_active", c.phase1_active},
      {"phase2_active", c.phase2_active},
      {"trials", c.trials},
      {"seed", c.seed},
      {"label_draws", c.label_draws},
      {"mesh_label_noise", c.mesh_label_noise},
      {"divergence_factor", c.divergence_factor},
  };
}

FinetuneConfig finetune_config_from_json(const nlohmann::json& j) {
  FinetuneConfig c;
  try {
    c.steps = j.value("steps", c.steps);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.loss.lambda = j.value("lambda", c.loss.lambda);
    c.phase1_active = j.value("phase1_active", c.phase1_active);
    c.phase2_active = j.value("phase2_active", c.phase2_active);
    c.trials = j.value("trials", c.trials);
    c.seed = j.value("seed", c.seed);
    c.label_draws = j.value("label_draws", c.label_draws);
    c.mesh_label_noise = j.value("mesh_label_noise", c.mesh_label_noise);
    c.divergence_factor = j.value("divergence_factor", c.divergence_factor);
    c.threads = j.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("bad finetune config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const BenchmarkResult& r) {
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& t : r.trials) {
    trials.push_back({
        {"trial", t.trial},
        {"sample_id", t.sample_id},
        {"before", to_json(t.before)},
        {"after", to_json(t.after)},
        {"loss_before", t.loss_before},
        {"loss_after", t.loss_after},
        {"steps_run", t.steps_run},
        {"aborted", t.aborted},
        {"abort_reason", t.abort_reason},
    });
  }
  return {
      {"trials", trials},
      {"win_rate", r.win_rate},
      {"mean_add_before", r.mean_add_before},
      {"mean_add_after", r.mean_add_after},
      {"mean_add_delta", r.mean_add_delta},
      {"aborted", r.aborted},
  };
}

TrialLabels draw_trial_labels(const SyntheticSample& sample, const PcaModel& model,
                              const FinetuneConfig& cfg, int trial) {
  Random rng(mix_seed(cfg.seed, kLabelStream), static_cast<std::uint64_t>(trial));
  const Eigen::Index n = sample.mesh.rows();
  TrialLabels labels;
  for (int r = 0; r < cfg.label_draws; ++r) {
    PointSet2 lm = sample.clean;
    for (Eigen::Index i = 0; i < n; ++i) {
      lm(i, 0) += sample.sigma(i) * rng.normal();
      lm(i, 1) += sample.sigma(i) * rng.normal();
    }
    CanonicalMesh mesh = sample.mesh;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int a = 0; a < 3; ++a) mesh(i, a) += cfg.mesh_label_noise * rng.normal();
    }
    labels.coeffs.push_back(fit_coeffs(model, mesh));
    labels.landmarks.push_back(std::move(lm));
    labels.meshes.push_back(std::move(mesh));
  }
  return labels;
}

StudentState phase1_optimum(const TrialLabels& labels, const PcaModel& model) {
  const auto draws = static_cast<double>(labels.landmarks.size());
  const Eigen::Index n = labels.landmarks.front().rows();
  StudentState s;
  // gnll averaged over draws is stationary at the label mean with
  // sigma^2 = mean squared deviation / 2.
  s.landmarks.mu = PointSet2::Zero(n, 2);
  for (const auto& lm : labels.landmarks) s.landmarks.mu += lm;
  s.landmarks.mu /= draws;
  Eigen::VectorXd spread = Eigen::VectorXd::Zero(n);
  for (const auto& lm : labels.landmarks) spread += (lm - s.landmarks.mu).rowwise().squaredNorm();
  spread /= draws;
  s.landmarks.log_sigma = (0.5 * (spread.array() / 2.0).max(1e-300).log()).matrix();
  // With an orthonormal basis both vdc and wpdc are minimized by the mean of
  // the per-draw projections.
  s.coeffs = Eigen::VectorXd::Zero(model.n_components());
  for (const auto& c : labels.coeffs) s.coeffs += c;
  s.coeffs /= draws;
  return s;
}

LossValue finetune_objective(const StudentState& state, const TrialLabels& labels,
                             const SyntheticSample& sample, const PcaModel& model,
                             const TotalLossConfig& loss, const std::array<bool, 4>& active,
                             std::optional<RigidPose>* pnp_pose, bool sigma_through_pnp) {
  const auto draws = static_cast<double>(labels.landmarks.size());
  const CanonicalMesh mesh = reconstruct(model, state.coeffs);
  LossParts parts;
  TotalLossConfig weights = loss;
  for (int k = 0; k < 4; ++k) {
    if (!active[k]) weights.lambda[k] = 0.0;
  }

  auto average_into = [draws](LossValue& acc, const LossValue& v) {
    const double w = 1.0 / draws;
    acc.value += w * v.value;
    auto add = [w](auto& dst, const auto& src) {
      if (src.size() == 0) return;
      if (dst.size() == 0) dst = w * src;
      else dst += w * src;
    };
    add(acc.grad.d_mu, v.grad.d_mu);
    add(acc.grad.d_log_sigma, v.grad.d_log_sigma);
    add(acc.grad.d_mesh, v.grad.d_mesh);
    add(acc.grad.d_coeffs, v.grad.d_coeffs);
  };

  if (weights.lambda[0] > 0.0) {
    for (const auto& lm : labels.landmarks) average_into(parts.gnll, gnll(state.landmarks, lm));
  }
  if (weights.lambda[1] > 0.0) {
    for (const auto& m : labels.meshes) average_into(parts.vdc, vdc(mesh, m));
  }
  if (weights.lambda[2] > 0.0) {
    const WpdcWeights w = wpdc_weights_from_model(model);
    for (const auto& c : labels.coeffs) average_into(parts.wpdc, wpdc(state.coeffs, c, w));
  }
  if (weights.lambda[3] > 0.0) {
    PnpLossOptions opts;
    opts.sigma_gradients = sigma_through_pnp;
    if (pnp_pose && pnp_pose->has_value()) opts.forward.warm_start = **pnp_pose;
    const PnpLossResult r = pnp_loss(state.landmarks, mesh, sample.mesh, sample.pose, sample.cam, opts);
    parts.pnp.value = r.value;
    parts.pnp.grad = r.grad;
    if (pnp_pose) *pnp_pose = r.solution.pose;
  }

  LossValue total = total_loss(parts, weights);
  chain_mesh_to_coeffs(model, total.grad);
  const Eigen::Index n = state.landmarks.size();
  if (total.grad.d_mu.size() == 0) total.grad.d_mu = PointSet2::Zero(n, 2);
  if (total.grad.d_log_sigma.size() == 0) total.grad.d_log_sigma = Eigen::VectorXd::Zero(n);
  if (total.grad.d_coeffs.size() == 0) total.grad.d_coeffs = Eigen::VectorXd::Zero(model.n_components());
  return total;
}

constexpr int kMaxHalvings = 8;

TrialResult run_finetune_trial(const Dataset& dataset, const FinetuneConfig& cfg, int trial) {
  if (dataset.samples.empty()) throw Error(ErrorCode::kInvalidArgument, "empty dataset");
  const SyntheticSample& sample = dataset.samples[static_cast<std::size_t>(trial) % dataset.samples.size()];
  const PcaModel& model = dataset.model;
  const TrialLabels labels = draw_trial_labels(sample, model, cfg, trial);
  StudentState state = phase1_optimum(labels, model);

  TrialResult out;
  out.trial = trial;
  out.sample_id = sample.id;

  auto evaluate = [&](const StudentState& s) {
    const CanonicalMesh mesh = reconstruct(model, s.coeffs);
    const RigidPose pose = solve_student_pose(s.landmarks, mesh, sample.cam);
    return evaluate_sample(pose, sample.pose, mesh, sample.mesh);
  };
  out.before = evaluate(state);

  // Diagonal curvature of the phase-2 anchoring terms at the phase-1 optimum.
  const auto& lam = cfg.loss.lambda;
  const auto& act = cfg.phase2_active;
  const double l_gnll = act[0] ? lam[0] : 0.0;
  const double l_vdc = act[1] ? lam[1] : 0.0;
  const double l_wpdc = act[2] ? lam[2] : 0.0;
  const Eigen::VectorXd sigma = state.landmarks.sigma();
  const WpdcWeights w = wpdc_weights_from_model(model);
  auto positive_or_one = [](double d) { return d > 0.0 ? d : 1.0; };
  Eigen::VectorXd d_mu(sigma.size());
  for (Eigen::Index i = 0; i < sigma.size(); ++i) d_mu(i) = positive_or_one(l_gnll / (sigma(i) * sigma(i)));
  const double d_sigma = positive_or_one(4.0 * l_gnll);
  Eigen::VectorXd d_coeffs(model.n_components());
  const double inv_n = 1.0 / static_cast<double>(model.n_vertices());
  for (Eigen::Index k = 0; k < d_coeffs.size(); ++k) {
    d_coeffs(k) = positive_or_one(2.0 * l_vdc * inv_n + 2.0 * l_wpdc * w.w(k) * w.w(k));
  }

  std::optional<RigidPose> warm;
  try {
    LossValue current = finetune_objective(state, labels, sample, model, cfg.loss, act, &warm);
    out.loss_before = current.value;
    const double limit = out.loss_before + cfg.divergence_factor * std::max(std::abs(out.loss_before), 1e-12);
    double rate = cfg.learning_rate;
    for (int step = 0; step < cfg.steps && !out.aborted; ++step) {
      // Halve the rate until the step stops increasing the loss; a candidate
      // beyond the divergence limit aborts the trial outright.
      bool moved = false;
      for (int attempt = 0; attempt <= kMaxHalvings && !moved; ++attempt) {
        StudentState next = state;
        next.landmarks.mu -= rate * (d_mu.cwiseInverse().asDiagonal() * current.grad.d_mu);
        next.landmarks.log_sigma -= (rate / d_sigma) * current.grad.d_log_sigma;
        next.coeffs -= rate * current.grad.d_coeffs.cwiseQuotient(d_coeffs);
        std::optional<RigidPose> next_warm = warm;
        LossValue candidate = finetune_objective(next, labels, sample, model, cfg.loss, act, &next_warm);
        if (!std::isfinite(candidate.value) || candidate.value > limit) {
          out.aborted = true;
          out.abort_reason = "loss diverged";
          break;
        }
        if (candidate.value <= current.value) {
          state = std::move(next);
          current = std::move(candidate);
          warm = next_warm;
          moved = true;
        } else {
          rate *= 0.5;
        }
      }
      if (!moved) break;
      out.steps_run = step + 1;
    }
    out.loss_after = current.value;
  } catch (const Error& e) {
    out.aborted = true;
    out.abort_reason = e.what();
  }
  out.after = out.aborted ? out.before : evaluate(state);
  return out;
}

BenchmarkResult run_finetune_benchmark(const Dataset& dataset, const FinetuneConfig& cfg) {
  cfg.validate();
  BenchmarkResult out;
  out.trials.resize(static_cast<std::size_t>(cfg.trials));
  parallel_for(cfg.trials, cfg.threads, [&](std::int64_t t) {
    out.trials[t] = run_finetune_trial(dataset, cfg, static_cast<int>(t));
  });
  int wins = 0;
  for (const auto& t : out.trials) {
    if (t.after.add < t.before.add) ++wins;
    if (t.aborted) ++out.aborted;
    out.mean_add_before += t.before.add;
    out.mean_add_after += t.after.add;
  }
  const double n = static_cast<double>(out.trials.size());
  out.win_rate = wins / n;
  out.mean_add_before /= n;
  out.mean_add_after /= n;
  out.mean_add_delta = out.mean_add_after - out.mean_add_before;
  return out;
}

// ---------------------------------------------------------------------------
// Gradient audit

double relative_error(const Eigen::Ref<const Eigen::MatrixXd>& analytic,
                      const Eigen::Ref<const Eigen::MatrixXd>& numeric) {
  if (analytic.rows() != numeric.rows() || analytic.cols() != numeric.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "relative_error shape mismatch");
  }
  if (numeric.size() == 0) return 0.0;
  const double scale = std::max(numeric.cwiseAbs().maxCoeff(), 1e-12);
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double step) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp(i) = x(i) + step;
    const double fp = f(xp);
    xp(i) = x(i) - step;
    const double fm = f(xp);
    xp(i) = x(i);
    g(i) = (fp - fm) / (2.0 * step);
  }
  return g;
}

PnPProblem random_pnp_problem(std::uint64_t seed, Eigen::Index n, double noise, RigidPose* true_pose) {
  Random rng(seed, 0x504e50ULL);
  EulerAngles e;
  e.yaw = rng.uniform(-60.0, 60.0);
  e.pitch = rng.uniform(-30.0, 30.0);
  e.roll = rng.uniform(-30.0, 30.0);
  const RigidPose pose = euler_to_pose(
      e, Eigen::Vector3d(rng.uniform(-50.0, 50.0), rng.uniform(-50.0, 50.0), rng.uniform(400.0, 900.0)));
  PnPProblem p;
  p.cam.fx = p.cam.fy = rng.uniform(800.0, 1400.0);
  p.points3.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    p.points3.row(i) << rng.uniform(-80.0, 80.0), rng.uniform(-100.0, 100.0), rng.uniform(-70.0, 10.0);
  }
  p.points2 = project(p.points3, pose, p.cam);
  Eigen::VectorXd sigmas(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    sigmas(i) = rng.uniform(0.5, 3.0);
    p.points2(i, 0) += noise * rng.normal();
    p.points2(i, 1) += noise * rng.normal();
  }
  p.sigmas = sigmas;
  if (true_pose) *true_pose = pose;
  return p;
}

namespace {

Eigen::VectorXd flat2(const PointSet2& p) { return Eigen::Map<const Eigen::VectorXd>(p.data(), p.size()); }
PointSet2 unflat2(const Eigen::VectorXd& v) { return Eigen::Map<const PointSet2>(v.data(), v.size() / 2, 2); }

GradAuditRow audit_gnll(std::uint64_t seed, int n_inst) {
  GradAuditRow row{"gnll", 0.0, 1e-6, n_inst, true};
  for (int i = 0; i < n_inst; ++i) {
    Random rng(seed, 100 + i);
    const Eigen::Index n = 30;
    LandmarkSet pred;
    pred.mu.resize(n, 2);
    pred.log_sigma.resize(n);
    PointSet2 gt(n, 2);
    for (Eigen::Index k = 0; k < n; ++k) {
      gt.row(k) << rng.uniform(0, 800), rng.uniform(0, 800);
      pred.mu.row(k) = gt.row(k) + Eigen::RowVector2d(rng.normal(), rng.normal()) * 3.0;
      pred.log_sigma(k) = rng.uniform(-1.0, 1.5);
    }
    const LossValue v = gnll(pred, gt);
    Eigen::VectorXd x(3 * n);
    x << flat2(pred.mu), pred.log_sigma;
    auto f = [&](const Eigen::VectorXd& z) {
      LandmarkSet p{unflat2(z.head(2 * n)), z.tail(n)};
      return gnll(p, gt).value;
    };
    Eigen::VectorXd analytic(3 * n);
    analytic << flat2(v.grad.d_mu), v.grad.d_log_sigma;
    row.max_rel_error = std::max(row.max_rel_error, relative_error(analytic, central_difference(f, x, 1e-5)));
  }
  return row;
}

GradAuditRow audit_vdc(std::uint64_t seed, int n_inst) {
  GradAuditRow row{"vdc", 0.0, 1e-8, n_inst, true};
  for (int i = 0; i < n_inst; ++i) {
    Random rng(seed, 200 + i);
    const Eigen::Index n = 30;
    CanonicalMesh a(n, 3), b(n, 3);
    for (Eigen::Index k = 0; k < a.size(); ++k) {
      b.data()[k] = rng.uniform(-80.0, 80.0);
      a.data()[k] = b.data()[k] + 2.0 * rng.normal();
    }
    const LossValue v = vdc(a, b);
    auto f = [&](const Eigen::VectorXd& z) { return vdc(unflatten(z), b).value; };
    row.max_rel_error = std::max(row.max_rel_error,
                                 relative_error(flatten(v.grad.d_mesh), central_difference(f, flatten(a), 1e-4)));
  }
  return row;
}

GradAuditRow audit_wpdc(std::uint64_t seed, int n_inst) {
  GradAuditRow row{"wpdc", 0.0, 1e-8, n_inst, true};
  for (int i = 0; i < n_inst; ++i) {
    Random rng(seed, 300 + i);
    const Eigen::Index k = 20;
    Eigen::VectorXd a(k), b(k);
    WpdcWeights w;
    w.w.resize(k);
    for (Eigen::Index j = 0; j < k; ++j) {
      b(j) = 5.0 * rng.normal();
      a(j) = b(j) + rng.normal();
      w.w(j) = rng.uniform(0.1, 2.0);
    }
    w.w *= static_cast<double>(k) / w.w.sum();
    const LossValue v = wpdc(a, b, w);
    auto f = [&](const Eigen::VectorXd& z) { return wpdc(z, b, w).value; };
    row.max_rel_error = std::max(row.max_rel_error, relative_error(v.grad.d_coeffs, central_difference(f, a, 1e-4)));
  }
  return row;
}

GradAuditRow audit_reprojection(std::uint64_t seed, int n_inst) {
  GradAuditRow row{"reprojection_jacobian", 0.0, 1e-5, n_inst, true};
  for (int i = 0; i < n_inst; ++i) {
    RigidPose truth;
    const PnPProblem p = random_pnp_problem(mix_seed(seed, 400 + i), 40, 1.0, &truth);
    Random rng(seed, 450 + i);
    Vector6d off;
    for (int k = 0; k < 6; ++k) off(k) = (k < 3 ? 0.02 : 5.0) * rng.normal();
    const RigidPose pose = retract(truth, off);
    const ReprojectionResult r = reprojection_residuals(p, pose);
    Eigen::MatrixXd numeric(r.residuals.size(), 6);
    const double h = 1e-6;
    for (int k = 0; k < 6; ++k) {
      Vector6d d = Vector6d::Zero();
      d(k) = h;
      const Eigen::VectorXd rp = reprojection_residuals(p, retract(pose, d)).residuals;
      const Eigen::VectorXd rm = reprojection_residuals(p, retract(pose, -d)).residuals;
      numeric.col(k) = (rp - rm) / (2.0 * h);
    }
    row.max_rel_error = std::max(row.max_rel_error, relative_error(r.jacobian, numeric));
  }
  return row;
}

GradAuditRow audit_ift(std::uint64_t seed, int n_inst) {
  GradAuditRow row{"pnp_backward_ift", 0.0, 1e-4, n_inst, true};
  for (int i = 0; i < n_inst; ++i) {
    const PnPProblem p = random_pnp_problem(mix_seed(seed, 500 + i), 40, 1.0);
    const PnPSolution sol = pnp_forward(p);
    const PnPGradients g = pnp_backward_ift(p, sol);
    PnPForwardOptions warm;
    warm.warm_start = sol.pose;
    const Eigen::Index n = p.size();
    Eigen::MatrixXd num2(6, 2 * n), num3(6, 3 * n);
    for (Eigen::Index c = 0; c < 2 * n; ++c) {
      const double h = 1e-5;
      PnPProblem pp = p, pm = p;
      pp.points2.data()[c] += h;
      pm.points2.data()[c] -= h;
      num2.col(c) = (local_coordinates(sol.pose, pnp_forward(pp, warm).pose) -
                     local_coordinates(sol.pose, pnp_forward(pm, warm).pose)) / (2.0 * h);
    }
    for (Eigen::Index c = 0; c < 3 * n; ++c) {
      const double h = 1e-4;
      PnPProblem pp = p, pm = p;
      pp.points3.data()[c] += h;
      pm.points3.data()[c] -= h;
      num3.col(c) = (local_coordinates(sol.pose, pnp_forward(pp, warm).pose) -
                     local_coordinates(sol.pose, pnp_forward(pm, warm).pose)) / (2.0 * h);
    }
    row.max_rel_error = std::max({row.max_rel_error, relative_error(g.d_points2, num2),
                                  relative_error(g.d_points3, num3)});
  }
  return row;
}

GradAuditRow audit_pnp_loss(std::uint64_t seed, int n_inst) {
  GradAuditRow row{"pnp_loss", 0.0, 1e-4, n_inst, true};
  for (int i = 0; i < n_inst; ++i) {
    RigidPose truth;
    const PnPProblem p = random_pnp_problem(mix_seed(seed, 600 + i), 40, 1.0, &truth);
    Random rng(seed, 650 + i);
    LandmarkSet lm{p.points2, p.sigmas->array().log().matrix()};
    CanonicalMesh pred = p.points3;
    for (Eigen::Index k = 0; k < pred.size(); ++k) pred.data()[k] += 0.5 * rng.normal();
    const PnpLossResult base = pnp_loss(lm, pred, p.points3, truth, p.cam);
    PnpLossOptions warm;
    warm.forward.warm_start = base.solution.pose;
    auto f_mu = [&](const Eigen::VectorXd& z) {
      LandmarkSet l{unflat2(z), lm.log_sigma};
      return pnp_loss(l, pred, p.points3, truth, p.cam, warm).value;
    };
    auto f_mesh = [&](const Eigen::VectorXd& z) {
      return pnp_loss(lm, unflatten(z), p.points3, truth, p.cam, warm).value;
    };
    row.max_rel_error = std::max(
        {row.max_rel_error,
         relative_error(flat2(base.grad.d_mu), central_difference(f_mu, flat2(lm.mu), 1e-5)),
         relative_error(flatten(base.grad.d_mesh), central_difference(f_mesh, flatten(pred), 1e-4))});
  }
  return row;
}

// Small shape space around a random point cloud for end-to-end objective checks.
struct ObjectiveFixture {
  PcaModel model;
  SyntheticSample sample;
  TrialLabels labels;
  StudentState state;
};

ObjectiveFixture objective_fixture(std::uint64_t seed) {
  ObjectiveFixture fx;
  RigidPose truth;
  const Eigen::Index n = 30;
  const Eigen::Index k = 6;
  const PnPProblem p = random_pnp_problem(seed, n, 0.0, &truth);
  Random rng(seed, 0x46495854ULL);
  Eigen::MatrixXd raw(3 * n, k);
  for (Eigen::Index i = 0; i < raw.size(); ++i) raw.data()[i] = rng.normal();
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
  fx.model.basis = qr.householderQ() * Eigen::MatrixXd::Identity(3 * n, k);
  fx.model.mean = flatten(p.points3);
  fx.model.component_scales.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) fx.model.component_scales(j) = 8.0 / (1.0 + j);

  SyntheticSample& s = fx.sample;
  s.cam = p.cam;
  s.pose = truth;
  s.coeffs.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) s.coeffs(j) = fx.model.component_scales(j) * rng.normal();
  s.mesh = reconstruct(fx.model, s.coeffs);
  s.clean = project(s.mesh, truth, s.cam);
  s.sigma = Eigen::VectorXd::Constant(n, 1.0);
  for (Eigen::Index i = 0; i < n; i += 5) s.sigma(i) = 5.0;
  s.noisy = s.clean;

  FinetuneConfig cfg;
  cfg.seed = seed;
  fx.labels = draw_trial_labels(s, fx.model, cfg, 0);
  fx.state = phase1_optimum(fx.labels, fx.model);
  // Move away from the optimum so every term has a gradient.
  for (Eigen::Index i = 0; i < fx.state.landmarks.mu.size(); ++i) fx.state.landmarks.mu.data()[i] += rng.normal();
  for (Eigen::Index i = 0; i < n; ++i) fx.state.landmarks.log_sigma(i) += 0.2 * rng.normal();
  for (Eigen::Index j = 0; j < k; ++j) fx.state.coeffs(j) += rng.normal();
  return fx;
}

GradAuditRow audit_total(std::uint64_t seed, int n_inst) {
  GradAuditRow row{"total_loss", 0.0, 1e-4, n_inst, true};
  const std::array<bool, 4> all = {true, true, true, true};
  const TotalLossConfig loss;
  for (int i = 0; i < n_inst; ++i) {
    const ObjectiveFixture fx = objective_fixture(mix_seed(seed, 700 + i));
    std::optional<RigidPose> pose;
    const LossValue v = finetune_objective(fx.state, fx.labels, fx.sample, fx.model, loss, all, &pose, true);
    const Eigen::Index n = fx.state.landmarks.size();
    const Eigen::Index k = fx.state.coeffs.size();
    Eigen::VectorXd x(3 * n + k), analytic(3 * n + k);
    x << flat2(fx.state.landmarks.mu), fx.state.landmarks.log_sigma, fx.state.coeffs;
    analytic << flat2(v.grad.d_mu), v.grad.d_log_sigma, v.grad.d_coeffs;
    auto f = [&](const Eigen::VectorXd& z) {
      StudentState s{{unflat2(z.head(2 * n)), z.segment(2 * n, n)}, z.tail(k)};
      std::optional<RigidPose> warm = pose;
      return finetune_objective(s, fx.labels, fx.sample, fx.model, loss, all, &warm, true).value;
    };
    row.max_rel_error = std::max(row.max_rel_error, relative_error(analytic, central_difference(f, x, 1e-5)));
  }
  return row;
}

}  // namespace

std::vector<GradAuditRow> run_grad_audit(std::uint64_t seed, int n_instances) {
  std::vector<GradAuditRow> rows;
  if (n_instances <= 0) return rows;
  using Audit = GradAuditRow (*)(std::uint64_t, int);
  const Audit audits[] = {audit_gnll, audit_vdc, audit_wpdc, audit_reprojection,
                          audit_ift, audit_pnp_loss, audit_total};
  rows.resize(std::size(audits));
  parallel_for(static_cast<std::int64_t>(rows.size()), 0,
               [&](std::int64_t a) { rows[a] = audits[a](seed, n_instances); });
  for (auto& r : rows) r.pass = r.max_rel_error <= r.threshold;
  return rows;
}

nlohmann::json to_json(const std::vector<GradAuditRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"op", r.op},
                   {"max_rel_error", r.max_rel_error},
                   {"threshold", r.threshold},
                   {"instances", r.instances},
                   {"pass", r.pass}});
  }
  return out;
}

}  // namespace facerecon
