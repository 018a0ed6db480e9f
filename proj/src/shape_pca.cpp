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

#include "facerecon/shape_pca.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/SVD>
#include <json.hpp>

#include "facerecon/binary_io.hpp"
#include "facerecon/error.hpp"

namespace facerecon {
namespace {

constexpr const char* kPcaFormat = "facerecon-pca";
constexpr int kPcaVersion = 1;

void check_vertex_count(const PcaModel& model, Eigen::Index rows) {
  if (rows != model.n_vertices()) {
    throw Error(ErrorCode::kInconsistentVertexCount,
                "mesh has " + std::to_string(rows) + " vertices, model expects " +
                    std::to_string(model.n_vertices()));
  }
}

}  // namespace

Eigen::VectorXd flatten(const CanonicalMesh& mesh) {
  return Eigen::Map<const Eigen::VectorXd>(mesh.data(), mesh.size());
}

CanonicalMesh unflatten(const Eigen::VectorXd& flat) {
  if (flat.size() % 3 != 0) {
    throw Error(ErrorCode::kDimensionMismatch, "flattened mesh length not divisible by 3");
  }
  return Eigen::Map<const CanonicalMesh>(flat.data(), flat.size() / 3, 3);
}

PcaModel build_pca(const std::vector<CanonicalMesh>& meshes, Eigen::Index k) {
  if (meshes.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "need at least 2 meshes");
  }
  const Eigen::Index count = static_cast<Eigen::Index>(meshes.size());
  const Eigen::Index n = meshes.front().rows();
  for (const auto& m : meshes) {
    if (m.rows() != n) {
      throw Error(ErrorCode::kInconsistentVertexCount, "meshes differ in vertex count");
    }
  }
  if (k < 1 || k > count - 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "k must lie in [1, count - 1], got " + std::to_string(k));
  }

  Eigen::MatrixXd data(3 * n, count);
  for (Eigen::Index j = 0; j < count; ++j) data.col(j) = flatten(meshes[j]);
  PcaModel model;
  model.mean = data.rowwise().mean();
  data.colwise() -= model.mean;

  const Eigen::BDCSVD<Eigen::MatrixXd> svd(data, Eigen::ComputeThinU);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double tol = std::max(sv(0) * static_cast<double>(std::max(3 * n, count)) *
                                  std::numeric_limits<double>::epsilon(),
                              1e-12);
  Eigen::Index rank = 0;
  while (rank < sv.size() && sv(rank) > tol) ++rank;
  if (rank < k) {
    throw Error(ErrorCode::kRankDeficient,
                "data rank " + std::to_string(rank) + " below requested " + std::to_string(k), rank);
  }

  model.basis = svd.matrixU().leftCols(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::Index arg = 0;
    model.basis.col(c).cwiseAbs().maxCoeff(&arg);
    if (model.basis(arg, c) < 0.0) model.basis.col(c) = -model.basis.col(c);
  }
  model.component_scales = sv.head(k) / std::sqrt(static_cast<double>(count - 1));
  return model;
}

PcaCoeffs fit_coeffs(const PcaModel& model, const CanonicalMesh& mesh) {
  check_vertex_count(model, mesh.rows());
  return model.basis.transpose() * (flatten(mesh) - model.mean);
}

CanonicalMesh reconstruct(const PcaModel& model, const PcaCoeffs& coeffs) {
  if (coeffs.size() != model.n_components()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "expected " + std::to_string(model.n_components()) + " coefficients, got " +
                    std::to_string(coeffs.size()));
  }
  return unflatten(model.mean + model.basis * coeffs);
}

void save_pca(const PcaModel& model, const std::filesystem::path& path) {
  std::vector<std::uint8_t> payload;
  payload.reserve(8 * (model.mean.size() + model.basis.size() + model.component_scales.size()));
  append_f64_le(payload, std::span<const double>(model.mean.data(), model.mean.size()));
  append_f64_le(payload, std::span<const double>(model.basis.data(), model.basis.size()));
  append_f64_le(payload, std::span<const double>(model.component_scales.data(),
                                                 model.component_scales.size()));
  nlohmann::json header = {
      {"format", kPcaFormat},
      {"version", kPcaVersion},
      {"n_vertices", model.n_vertices()},
      {"k", model.n_components()},
      {"endianness", "little"},
      {"dtype", "float64"},
      {"payload_bytes", payload.size()},
      {"sha256", sha256_hex(payload)},
  };
  std::string contents = header.dump() + "\n";
  contents.append(reinterpret_cast<const char*>(payload.data()), payload.size());
  write_file(path, contents);
}

PcaModel load_pca(const std::filesystem::path& path) {
  const std::string contents = read_file(path);
  const auto newline = contents.find('\n');
  if (newline == std::string::npos) {
    throw Error(ErrorCode::kIo, "missing PCA header in " + path.string());
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(contents.substr(0, newline));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kIo, std::string("bad PCA header: ") + e.what());
  }
  if (header.value("format", "") != kPcaFormat) {
    throw Error(ErrorCode::kIo, "not a PCA model file: " + path.string());
  }
  if (header.value("version", -1) != kPcaVersion) {
    throw Error(ErrorCode::kFormatVersionMismatch, "unsupported PCA model version");
  }
  if (header.value("endianness", "") != "little") {
    throw Error(ErrorCode::kIo, "unsupported endianness tag");
  }
  const std::span<const std::uint8_t> payload(
      reinterpret_cast<const std::uint8_t*>(contents.data()) + newline + 1,
      contents.size() - newline - 1);
  if (sha256_hex(payload) != header.value("sha256", "")) {
    throw Error(ErrorCode::kChecksumMismatch, "PCA payload checksum mismatch");
  }
  const Eigen::Index n = header.at("n_vertices").get<Eigen::Index>();
  const Eigen::Index k = header.at("k").get<Eigen::Index>();
  const std::size_t expected = static_cast<std::size_t>(3 * n + 3 * n * k + k);
  if (payload.size() != 8 * expected) {
    throw Error(ErrorCode::kIo, "PCA payload size does not match header");
  }
  const std::vector<double> values = read_f64_le(payload, 0, expected);
  PcaModel model;
  model.mean = Eigen::Map<const Eigen::VectorXd>(values.data(), 3 * n);
  model.basis = Eigen::Map<const Eigen::MatrixXd>(values.data() + 3 * n, 3 * n, k);
  model.component_scales = Eigen::Map<const Eigen::VectorXd>(values.data() + 3 * n + 3 * n * k, k);
  return model;
}

}  // namespace facerecon
