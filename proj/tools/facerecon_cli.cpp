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


// Command-line entry point.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 threshold failure.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "facerecon/binary_io.hpp"
#include "facerecon/error.hpp"
#include "facerecon/experiments.hpp"
#include "facerecon/serialization.hpp"
#include "facerecon/shape_pca.hpp"
#include "facerecon/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kDataError = 2;
constexpr int kThresholdFailure = 3;

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw facerecon::Error(facerecon::ErrorCode::kIo, "cannot open " + path.string());
  return json::parse(in);
}

void write_json_file(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const std::string text = j.dump(2) + "\n";
  facerecon::write_file(path, text);
}

int synth_gen(const fs::path& config, const fs::path& out) {
  const facerecon::SceneConfig cfg = facerecon::scene_config_from_json(read_json_file(config));
  cfg.validate();
  const facerecon::ShapeSpace space = facerecon::gen_shape_space(cfg);
  facerecon::Dataset ds{cfg, space.model, facerecon::gen_samples(space.model, cfg, cfg.n_samples)};
  const json manifest = facerecon::write_dataset(out, ds);
  fs::create_directories(out / "meshes");
  for (std::size_t i = 0; i < space.meshes.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "shape_%05zu.xyz", i);
    facerecon::write_mesh_xyz(out / "meshes" / name, space.meshes[i]);
  }
  std::cout << manifest.dump(2) << "\n";
  return kOk;
}

int pca_build(const fs::path& meshes, int k, const fs::path& out) {
  const auto collection = facerecon::read_mesh_directory(meshes);
  const facerecon::PcaModel model = facerecon::build_pca(collection, k);
  facerecon::save_pca(model, out);
  std::cout << json{{"n_meshes", collection.size()},
                    {"n_vertices", model.n_vertices()},
                    {"k", model.n_components()}}
                   .dump(2)
            << "\n";
  return kOk;
}

json pose_eval_json(const facerecon::Dataset& ds, bool unweighted, bool with_summary) {
  const auto mode = unweighted ? facerecon::WeightMode::kUnweighted : facerecon::WeightMode::kWeighted;
  const facerecon::PoseEvalResult r = facerecon::run_pose_eval(ds, mode);
  json samples = json::array();
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    json s{{"id", ds.samples[i].id}};
    if (r.per_sample[i]) {
      s["pose"] = facerecon::to_json(r.poses[i]);
      if (with_summary) s["report"] = facerecon::to_json(*r.per_sample[i]);
    } else {
      s["pose"] = nullptr;
    }
    samples.push_back(std::move(s));
  }
  json out{{"weighting", unweighted ? "unweighted" : "sigma"}, {"samples", samples}};
  if (with_summary) {
    out["summary"] = facerecon::to_json(r.summary);
    out["median_add"] = r.median_add;
  }
  return out;
}

int solve(const fs::path& dataset, bool unweighted) {
  const facerecon::Dataset ds = facerecon::read_dataset(dataset);
  std::cout << pose_eval_json(ds, unweighted, false).dump(2) << "\n";
  return kOk;
}

int eval(const fs::path& dataset, const fs::path& out, bool unweighted) {
  const facerecon::Dataset ds = facerecon::read_dataset(dataset);
  const json report = pose_eval_json(ds, unweighted, true);
  write_json_file(out, report);
  std::cout << report["summary"].dump(2) << "\n";
  return kOk;
}

int grad_check(std::uint64_t seed, int n, bool assert_pass) {
  const auto rows = facerecon::run_grad_audit(seed, n);
  std::cout << facerecon::to_json(rows).dump(2) << "\n";
  if (assert_pass) {
    for (const auto& r : rows) {
      if (!r.pass) return kThresholdFailure;
    }
  }
  return kOk;
}

int finetune_bench(const fs::path& dataset, const fs::path& config, const fs::path& out,
                   bool assert_pass) {
  const facerecon::Dataset ds = facerecon::read_dataset(dataset);
  const facerecon::FinetuneConfig cfg = facerecon::finetune_config_from_json(read_json_file(config));
  const facerecon::BenchmarkResult r = facerecon::run_finetune_benchmark(ds, cfg);
  const json j = facerecon::to_json(r);
  write_json_file(out, j);
  std::cout << json{{"win_rate", r.win_rate},
                    {"mean_add_before", r.mean_add_before},
                    {"mean_add_after", r.mean_add_after},
                    {"aborted", r.aborted}}
                   .dump(2)
            << "\n";
  if (assert_pass && !(r.win_rate >= 0.7 && r.mean_add_after < r.mean_add_before)) {
    return kThresholdFailure;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"facerecon: synthetic face pose and shape experiments"};
  app.require_subcommand(1);

  std::string config, out, meshes, dataset;
  int k = 0;
  int n = 20;
  std::uint64_t seed = 0;
  bool unweighted = false;
  bool assert_pass = false;

  auto* gen = app.add_subcommand("synth-gen", "Generate a synthetic dataset");
  gen->add_option("--config", config, "Scene config JSON")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out, "Output directory")->required();

  auto* pca = app.add_subcommand("pca-build", "Fit a PCA shape model to a mesh directory");
  pca->add_option("--meshes", meshes, "Directory of .xyz meshes")->required()->check(CLI::ExistingDirectory);
  pca->add_option("--k", k, "Number of components")->required()->check(CLI::PositiveNumber);
  pca->add_option("--out", out, "Output model file")->required();

  auto* slv = app.add_subcommand("solve", "Solve PnP for every sample and print the poses");
  slv->add_option("--dataset", dataset, "Dataset directory")->required();
  slv->add_flag("--unweighted", unweighted, "Ignore per-landmark sigmas");

  auto* ev = app.add_subcommand("eval", "Evaluate PnP poses against ground truth");
  ev->add_option("--dataset", dataset, "Dataset directory")->required();
  ev->add_option("--out", out, "Report JSON")->required();
  ev->add_flag("--unweighted", unweighted, "Ignore per-landmark sigmas");

  auto* gc = app.add_subcommand("grad-check", "Finite-difference audit of all gradients");
  gc->add_option("--seed", seed, "Seed")->required();
  gc->add_option("--n", n, "Instances per operation")->required()->check(CLI::NonNegativeNumber);
  gc->add_flag("--assert", assert_pass, "Exit 3 when any row fails");

  auto* fb = app.add_subcommand("finetune-bench", "Run the PnP finetuning benchmark");
  fb->add_option("--dataset", dataset, "Dataset directory")->required();
  fb->add_option("--config", config, "Finetune config JSON")->required()->check(CLI::ExistingFile);
  fb->add_option("--out", out, "Result JSON")->required();
  fb->add_flag("--assert", assert_pass, "Exit 3 unless the win rate reaches 0.7 and mean ADD drops");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return synth_gen(config, out);
    if (*pca) return pca_build(meshes, k, out);
    if (*slv) return solve(dataset, unweighted);
    if (*ev) return eval(dataset, out, unweighted);
    if (*gc) return grad_check(seed, n, assert_pass);
    if (*fb) return finetune_bench(dataset, config, out, assert_pass);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}
