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

#ifndef FACERECON_SHAPE_PCA_HPP_
#define FACERECON_SHAPE_PCA_HPP_

#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "facerecon/geometry.hpp"

namespace facerecon {

using PcaCoeffs = Eigen::VectorXd;

// Linear shape space: mesh = mean + basis * coeffs, vectors flattened as
// (x0, y0, z0, x1, ...). Columns of `basis` are orthonormal, so coefficients
// carry the data scale in mm.
struct PcaModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd basis;
  // Singular values / sqrt(count - 1): per-component standard deviation.
  Eigen::VectorXd component_scales;

  Eigen::Index n_vertices() const { return mean.size() / 3; }
  Eigen::Index n_components() const { return basis.cols(); }
};

Eigen::VectorXd flatten(const CanonicalMesh& mesh);
CanonicalMesh unflatten(const Eigen::VectorXd& flat);

// Top-k principal directions of the centred meshes. Each basis column is
// sign-normalized so its largest-magnitude entry is positive.
// Throws kInconsistentVertexCount, kInvalidArgument (k out of range) or
// kRankDeficient with detail() = detected rank.
PcaModel build_pca(const std::vector<CanonicalMesh>& meshes, Eigen::Index k);

// Orthogonal projection c = basis^T (mesh - mean).
PcaCoeffs fit_coeffs(const PcaModel& model, const CanonicalMesh& mesh);
CanonicalMesh reconstruct(const PcaModel& model, const PcaCoeffs& coeffs);

// Binary model file: one JSON header line (format, version, N, K, endianness,
// sha256 of the payload) followed by little-endian float64 payload holding
// mean, basis (column-major) and component scales.
void save_pca(const PcaModel& model, const std::filesystem::path& path);
PcaModel load_pca(const std::filesystem::path& path);

}  // namespace facerecon

#endif  // FACERECON_SHAPE_PCA_HPP_
