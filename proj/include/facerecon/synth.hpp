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

#ifndef FACERECON_SYNTH_HPP_
#define FACERECON_SYNTH_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "facerecon/geometry.hpp"
#include "facerecon/shape_pca.hpp"

namespace facerecon {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct NoiseModel {
  double base_sigma = 1.0;           // px
  double occlusion_fraction = 0.2;   // share of landmarks with inflated sigma
  double occlusion_multiplier = 5.0;
};

struct SceneConfig {
  std::uint64_t seed = 7;
  Eigen::Index n_vertices = 1220;
  Eigen::Index n_shapes = 251;
  Eigen::Index k = 250;
  Eigen::Index n_samples = 100;

  Range yaw{-60.0, 60.0};      // degrees
  Range pitch{-30.0, 30.0};
  Range roll{-30.0, 30.0};
  Range tx{-60.0, 60.0};       // mm
  Range ty{-60.0, 60.0};
  Range tz{300.0, 1200.0};
  Range focal{600.0, 1600.0};  // px, fx = fy
  int image_size = 800;
  int crop_size = 256;

  NoiseModel noise;

  // Shape deformation: amplitude of the leading mode (mm) and power-law decay
  // of the mode amplitudes.
  double deformation_amplitude = 4.0;
  double spectrum_decay = 0.5;

  void validate() const;
};

nlohmann::json to_json(const SceneConfig& cfg);
SceneConfig scene_config_from_json(const nlohmann::json& j);

struct ShapeSpace {
  PcaModel model;
  std::vector<CanonicalMesh> meshes;
};

// Vertex indices of the two eye corners on every synthetic mesh; the
// frontalization warp anchors on them.
inline constexpr Eigen::Index kFirstEyeVertex = 0;
inline constexpr Eigen::Index kSecondEyeVertex = 1;

// Half-ellipsoid face proxy (front towards -z, y down) with the eye corners at
// vertices 0 and 1 and the rest on a Fibonacci lattice.
CanonicalMesh base_face_mesh(Eigen::Index n_vertices);

// Random smooth deformations of the base mesh with a power-law spectrum and
// the PCA model fitted to them. Retries up to 5 sub-seeds on rank deficiency.
ShapeSpace gen_shape_space(const SceneConfig& cfg);

struct SyntheticSample {
  std::int64_t id = 0;
  RigidPose pose;
  PcaCoeffs coeffs;
  CanonicalMesh mesh;
  PointSet2 clean;       // project(mesh, pose, cam), image frame
  PointSet2 noisy;       // clean + N(0, sigma_i^2) per axis
  Eigen::VectorXd sigma;  // generating noise level per landmark
  Similarity2D warp;     // image frame -> crop frame
  CameraIntrinsics cam;
};

// Deterministic in (cfg.seed, index). Throws kUnprojectableScene when 100 pose
// draws all leave the frame.
SyntheticSample gen_sample(const PcaModel& model, const SceneConfig& cfg, std::int64_t index);

std::vector<SyntheticSample> gen_samples(const PcaModel& model, const SceneConfig& cfg,
                                         std::int64_t count, int threads = 0);

struct Dataset {
  SceneConfig cfg;
  PcaModel model;
  std::vector<SyntheticSample> samples;
};

inline constexpr int kDatasetVersion = 1;

// Directory layout: manifest.json, samples.jsonl, blobs.bin, model.pca.
// Returns the manifest JSON written to disk.
nlohmann::json write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
// Throws kIo, kFormatVersionMismatch or kChecksumMismatch.
Dataset read_dataset(const std::filesystem::path& dir);

// Plain-text vertex lists ("x y z" per line, 17 significant digits).
void write_mesh_xyz(const std::filesystem::path& path, const CanonicalMesh& mesh);
CanonicalMesh read_mesh_xyz(const std::filesystem::path& path);
// All *.xyz files of a directory in lexicographic order.
std::vector<CanonicalMesh> read_mesh_directory(const std::filesystem::path& dir);

}  // namespace facerecon

#endif  // FACERECON_SYNTH_HPP_
