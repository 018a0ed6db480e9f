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

#include "facerecon/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "facerecon/binary_io.hpp"
#include "facerecon/error.hpp"
#include "facerecon/parallel.hpp"
#include "facerecon/random.hpp"
#include "facerecon/serialization.hpp"

namespace facerecon {
namespace {

constexpr std::uint64_t kShapeStream = 0x5348415045ULL;   // "SHAPE"
constexpr std::uint64_t kSampleStream = 0x53414d504cULL;  // "SAMPL"
constexpr int kMaxShapeAttempts = 5;
constexpr int kMaxPoseAttempts = 100;
constexpr const char* kDatasetFormat = "facerecon-dataset";

// Face proxy semi-axes, mm.
constexpr double kSemiX = 75.0;
constexpr double kSemiY = 100.0;
constexpr double kSemiZ = 70.0;

void check_range(const Range& r, const char* name) {
  if (!(r.lo <= r.hi) || !std::isfinite(r.lo) || !std::isfinite(r.hi)) {
    throw Error(ErrorCode::kInvalidArgument, std::string("empty range: ") + name);
  }
}

nlohmann::json range_json(const Range& r) { return {r.lo, r.hi}; }

Range range_from(const nlohmann::json& j, const char* key, Range fallback) {
  if (!j.contains(key)) return fallback;
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != 2) throw Error(ErrorCode::kInvalidArgument, std::string("range needs 2 values: ") + key);
  return {v[0], v[1]};
}

Eigen::Vector3d surface_point(double x, double y) {
  const double inside = 1.0 - (x * x) / (kSemiX * kSemiX) - (y * y) / (kSemiY * kSemiY);
  return {x, y, -kSemiZ * std::sqrt(std::max(inside, 0.0))};
}

// One smooth displacement field: a few Gaussian bumps with random 3D
// directions, normalized to 1 mm RMS over the vertices.
Eigen::VectorXd random_field(const CanonicalMesh& base, Random& rng) {
  const Eigen::Index n = base.rows();
  PointSet3 field = PointSet3::Zero(n, 3);
  for (int b = 0; b < 3; ++b) {
    const Eigen::Index c = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    const double width = rng.uniform(15.0, 45.0);
    const Eigen::RowVector3d dir(rng.normal(), rng.normal(), rng.normal());
    const Eigen::RowVector3d centre = base.row(c);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d2 = (base.row(i) - centre).squaredNorm();
      field.row(i) += dir * std::exp(-d2 / (2.0 * width * width));
    }
  }
  Eigen::VectorXd flat = flatten(field);
  const double rms = std::sqrt(flat.squaredNorm() / static_cast<double>(n));
  return rms > 0.0 ? Eigen::VectorXd(flat / rms) : flat;
}

std::vector<CanonicalMesh> deformed_collection(const SceneConfig& cfg, std::uint64_t stream) {
  Random rng(cfg.seed, stream);
  const CanonicalMesh base = base_face_mesh(cfg.n_vertices);
  const Eigen::Index n_modes = cfg.n_shapes + 8;
  Eigen::MatrixXd modes(3 * cfg.n_vertices, n_modes);
  for (Eigen::Index m = 0; m < n_modes; ++m) {
    const double amp = cfg.deformation_amplitude * std::pow(1.0 + static_cast<double>(m), -cfg.spectrum_decay);
    modes.col(m) = amp * random_field(base, rng);
  }
  Eigen::MatrixXd z(n_modes, cfg.n_shapes);
  for (Eigen::Index s = 0; s < cfg.n_shapes; ++s) {
    for (Eigen::Index m = 0; m < n_modes; ++m) z(m, s) = rng.normal();
  }
  const Eigen::MatrixXd shapes = (modes * z).colwise() + flatten(base);
  std::vector<CanonicalMesh> out;
  out.reserve(cfg.n_shapes);
  for (Eigen::Index s = 0; s < cfg.n_shapes; ++s) out.push_back(unflatten(shapes.col(s)));
  return out;
}

bool inside_frame(const PointSet2& pts, int size) {
  return (pts.array() >= 0.0).all() && (pts.array() < static_cast<double>(size)).all();
}

nlohmann::json sample_record(const SyntheticSample& s) {
  return {{"id", s.id}, {"pose", to_json(s.pose)}, {"cam", to_json(s.cam)}, {"warp", to_json(s.warp)}};
}

}  // namespace

void SceneConfig::validate() const {
  if (n_vertices < 6) throw Error(ErrorCode::kInvalidArgument, "n_vertices must be >= 6");
  if (n_shapes < 2) throw Error(ErrorCode::kInvalidArgument, "n_shapes must be >= 2");
  if (k < 1 || k > n_shapes - 1) throw Error(ErrorCode::kInvalidArgument, "k must lie in [1, n_shapes - 1]");
  if (n_samples < 0) throw Error(ErrorCode::kInvalidArgument, "n_samples must be >= 0");
  check_range(yaw, "yaw");
  check_range(pitch, "pitch");
  check_range(roll, "roll");
  check_range(tx, "tx");
  check_range(ty, "ty");
  check_range(tz, "tz");
  check_range(focal, "focal");
  if (!(tz.lo > 0.0)) throw Error(ErrorCode::kInvalidArgument, "z range must be strictly positive");
  if (!(focal.lo > 0.0)) throw Error(ErrorCode::kInvalidArgument, "focal range must be positive");
  if (image_size < 2 || crop_size < 2) throw Error(ErrorCode::kInvalidArgument, "image sizes too small");
  if (!(noise.base_sigma >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "base sigma must be >= 0");
  if (!(noise.occlusion_fraction >= 0.0 && noise.occlusion_fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "occlusion fraction must lie in [0, 1]");
  }
  if (!(noise.occlusion_multiplier > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "occlusion multiplier must be positive");
  }
  if (!(deformation_amplitude > 0.0)) throw Error(ErrorCode::kInvalidArgument, "deformation amplitude must be positive");
}

nlohmann::json to_json(const SceneConfig& c) {
  return {
      {"seed", c.seed},
      {"n_vertices", c.n_vertices},
      {"n_shapes", c.n_shapes},
      {"k", c.k},
      {"n_samples", c.n_samples},
      {"yaw", range_json(c.yaw)},
      {"pitch", range_json(c.pitch)},
      {"roll", range_json(c.roll)},
      {"tx", range_json(c.tx)},
      {"ty", range_json(c.ty)},
      {"tz", range_json(c.tz)},
      {"focal", range_json(c.focal)},
      {"image_size", c.image_size},
      {"crop_size", c.crop_size},
      {"noise",
       {{"base_sigma", c.noise.base_sigma},
        {"occlusion_fraction", c.noise.occlusion_fraction},
        {"occlusion_multiplier", c.noise.occlusion_multiplier}}},
      {"deformation_amplitude", c.deformation_amplitude},
      {"spectrum_decay", c.spectrum_decay},
  };
}

SceneConfig scene_config_from_json(const nlohmann::json& j) {
  SceneConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.n_vertices = j.value("n_vertices", c.n_vertices);
    c.n_shapes = j.value("n_shapes", c.n_shapes);
    c.k = j.value("k", c.k);
    c.n_samples = j.value("n_samples", c.n_samples);
    c.yaw = range_from(j, "yaw", c.yaw);
    c.pitch = range_from(j, "pitch", c.pitch);
    c.roll = range_from(j, "roll", c.roll);
    c.tx = range_from(j, "tx", c.tx);
    c.ty = range_from(j, "ty", c.ty);
    c.tz = range_from(j, "tz", c.tz);
    c.focal = range_from(j, "focal", c.focal);
    c.image_size = j.value("image_size", c.image_size);
    c.crop_size = j.value("crop_size", c.crop_size);
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      c.noise.base_sigma = n.value("base_sigma", c.noise.base_sigma);
      c.noise.occlusion_fraction = n.value("occlusion_fraction", c.noise.occlusion_fraction);
      c.noise.occlusion_multiplier = n.value("occlusion_multiplier", c.noise.occlusion_multiplier);
    }
    c.deformation_amplitude = j.value("deformation_amplitude", c.deformation_amplitude);
    c.spectrum_decay = j.value("spectrum_decay", c.spectrum_decay);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("bad scene config: ") + e.what());
  }
  c.validate();
  return c;
}

CanonicalMesh base_face_mesh(Eigen::Index n_vertices) {
  if (n_vertices < 6) throw Error(ErrorCode::kInvalidArgument, "need at least 6 vertices");
  CanonicalMesh mesh(n_vertices, 3);
  mesh.row(kFirstEyeVertex) = surface_point(-45.0, -20.0).transpose();
  mesh.row(kSecondEyeVertex) = surface_point(45.0, -20.0).transpose();
  // Fibonacci lattice on the front hemisphere, stretched onto the ellipsoid.
  const Eigen::Index rest = n_vertices - 2;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (Eigen::Index i = 0; i < rest; ++i) {
    const double dz = -(static_cast<double>(i) + 0.5) / static_cast<double>(rest);
    const double radius = std::sqrt(1.0 - dz * dz);
    const double phi = golden * static_cast<double>(i);
    mesh.row(i + 2) << kSemiX * radius * std::cos(phi), kSemiY * radius * std::sin(phi), kSemiZ * dz;
  }
  return mesh;
}

ShapeSpace gen_shape_space(const SceneConfig& cfg) {
  cfg.validate();
  for (int attempt = 0; attempt < kMaxShapeAttempts; ++attempt) {
    ShapeSpace space;
    space.meshes = deformed_collection(cfg, kShapeStream + static_cast<std::uint64_t>(attempt));
    try {
      space.model = build_pca(space.meshes, cfg.k);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kRankDeficient) continue;
      throw;
    }
    return space;
  }
  throw Error(ErrorCode::kRankDeficient, "shape collection rank deficient after 5 attempts");
}

SyntheticSample gen_sample(const PcaModel& model, const SceneConfig& cfg, std::int64_t index) {
  Random rng(mix_seed(cfg.seed, kSampleStream), static_cast<std::uint64_t>(index));
  SyntheticSample s;
  s.id = index;
  s.coeffs.resize(model.n_components());
  for (Eigen::Index c = 0; c < model.n_components(); ++c) {
    s.coeffs(c) = model.component_scales(c) * rng.normal();
  }
  s.mesh = reconstruct(model, s.coeffs);

  bool placed = false;
  for (int attempt = 0; attempt < kMaxPoseAttempts && !placed; ++attempt) {
    CameraIntrinsics cam;
    cam.width = cam.height = cfg.image_size;
    cam.fx = cam.fy = rng.uniform(cfg.focal.lo, cfg.focal.hi);
    cam.cx = cam.cy = 0.5 * cfg.image_size;
    EulerAngles e;
    e.yaw = rng.uniform(cfg.yaw.lo, cfg.yaw.hi);
    e.pitch = rng.uniform(cfg.pitch.lo, cfg.pitch.hi);
    e.roll = rng.uniform(cfg.roll.lo, cfg.roll.hi);
    const Eigen::Vector3d t(rng.uniform(cfg.tx.lo, cfg.tx.hi), rng.uniform(cfg.ty.lo, cfg.ty.hi),
                            rng.uniform(cfg.tz.lo, cfg.tz.hi));
    const RigidPose pose = euler_to_pose(e, t);
    try {
      PointSet2 clean = project(s.mesh, pose, cam);
      if (!inside_frame(clean, cfg.image_size)) continue;
      s.clean = std::move(clean);
    } catch (const Error& err) {
      if (err.code() != ErrorCode::kNonPositiveDepth) throw;
      continue;
    }
    s.cam = cam;
    s.pose = pose;
    placed = true;
  }
  if (!placed) {
    throw Error(ErrorCode::kUnprojectableScene,
                "sample " + std::to_string(index) + " left the frame in 100 pose draws");
  }

  const Eigen::Index n = s.mesh.rows();
  s.sigma = Eigen::VectorXd::Constant(n, cfg.noise.base_sigma);
  const auto n_occluded = static_cast<Eigen::Index>(
      std::llround(cfg.noise.occlusion_fraction * static_cast<double>(n)));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  for (Eigen::Index i = 0; i < n_occluded; ++i) {
    const auto j = i + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(order[i], order[j]);
    s.sigma(order[i]) *= cfg.noise.occlusion_multiplier;
  }
  s.noisy = s.clean;
  for (Eigen::Index i = 0; i < n; ++i) {
    s.noisy(i, 0) += s.sigma(i) * rng.normal();
    s.noisy(i, 1) += s.sigma(i) * rng.normal();
  }
  FrontalizeOptions fo;
  fo.first_eye = kFirstEyeVertex;
  fo.second_eye = kSecondEyeVertex;
  s.warp = estimate_frontalize_warp(s.noisy, cfg.crop_size, fo);
  return s;
}

std::vector<SyntheticSample> gen_samples(const PcaModel& model, const SceneConfig& cfg,
                                         std::int64_t count, int threads) {
  std::vector<SyntheticSample> out(static_cast<std::size_t>(std::max<std::int64_t>(count, 0)));
  parallel_for(count, threads, [&](std::int64_t i) { out[i] = gen_sample(model, cfg, i); });
  return out;
}

nlohmann::json write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());

  std::vector<std::uint8_t> blobs;
  std::string lines;
  for (const auto& s : ds.samples) {
    std::vector<std::uint8_t> blob;
    append_f64_le(blob, std::span<const double>(s.coeffs.data(), s.coeffs.size()));
    append_f64_le(blob, std::span<const double>(s.mesh.data(), s.mesh.size()));
    append_f64_le(blob, std::span<const double>(s.clean.data(), s.clean.size()));
    append_f64_le(blob, std::span<const double>(s.noisy.data(), s.noisy.size()));
    append_f64_le(blob, std::span<const double>(s.sigma.data(), s.sigma.size()));
    nlohmann::json rec = sample_record(s);
    rec["blob_offset"] = blobs.size();
    rec["blob_bytes"] = blob.size();
    rec["sha256"] = sha256_hex(blob);
    blobs.insert(blobs.end(), blob.begin(), blob.end());
    lines += rec.dump() + "\n";
  }
  const std::string blob_str(blobs.begin(), blobs.end());
  write_file(dir / "blobs.bin", blob_str);
  write_file(dir / "samples.jsonl", lines);
  save_pca(ds.model, dir / "model.pca");

  nlohmann::json manifest = {
      {"format", kDatasetFormat},
      {"version", kDatasetVersion},
      {"config", to_json(ds.cfg)},
      {"n_samples", ds.samples.size()},
      {"n_vertices", ds.model.n_vertices()},
      {"k", ds.model.n_components()},
      {"checksums",
       {{"blobs.bin", sha256_hex(blob_str)},
        {"samples.jsonl", sha256_hex(lines)},
        {"model.pca", sha256_hex(read_file(dir / "model.pca"))}}},
  };
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

Dataset read_dataset(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kIo, std::string("bad manifest: ") + e.what());
  }
  if (manifest.value("format", "") != kDatasetFormat) {
    throw Error(ErrorCode::kIo, "not a dataset directory: " + dir.string());
  }
  if (manifest.value("version", -1) != kDatasetVersion) {
    throw Error(ErrorCode::kFormatVersionMismatch,
                "dataset version " + manifest.value("version", nlohmann::json(-1)).dump() +
                    ", expected " + std::to_string(kDatasetVersion));
  }
  const std::string blob_str = read_file(dir / "blobs.bin");
  const std::string lines = read_file(dir / "samples.jsonl");
  const auto& sums = manifest.at("checksums");
  if (sha256_hex(blob_str) != sums.value("blobs.bin", "")) {
    throw Error(ErrorCode::kChecksumMismatch, "blobs.bin checksum mismatch");
  }
  if (sha256_hex(lines) != sums.value("samples.jsonl", "")) {
    throw Error(ErrorCode::kChecksumMismatch, "samples.jsonl checksum mismatch");
  }
  if (sha256_hex(read_file(dir / "model.pca")) != sums.value("model.pca", "")) {
    throw Error(ErrorCode::kChecksumMismatch, "model.pca checksum mismatch");
  }

  Dataset ds;
  ds.cfg = scene_config_from_json(manifest.at("config"));
  ds.model = load_pca(dir / "model.pca");
  const Eigen::Index n = ds.model.n_vertices();
  const Eigen::Index k = ds.model.n_components();
  const std::span<const std::uint8_t> blobs(reinterpret_cast<const std::uint8_t*>(blob_str.data()),
                                            blob_str.size());
  std::istringstream in(lines);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      const auto offset = rec.at("blob_offset").get<std::size_t>();
      const auto bytes = rec.at("blob_bytes").get<std::size_t>();
      if (offset > blobs.size() || bytes > blobs.size() - offset) {
        throw Error(ErrorCode::kIo, "blob range out of bounds");
      }
      if (sha256_hex(blobs.subspan(offset, bytes)) != rec.at("sha256").get<std::string>()) {
        throw Error(ErrorCode::kChecksumMismatch, "sample blob checksum mismatch");
      }
      const std::size_t count = static_cast<std::size_t>(k + 3 * n + 2 * n + 2 * n + n);
      if (bytes != 8 * count) throw Error(ErrorCode::kIo, "sample blob size mismatch");
      const std::vector<double> v = read_f64_le(blobs, offset, count);
      SyntheticSample s;
      s.id = rec.at("id").get<std::int64_t>();
      s.pose = pose_from_json(rec.at("pose"));
      s.cam = intrinsics_from_json(rec.at("cam"));
      s.warp = warp_from_json(rec.at("warp"));
      const double* p = v.data();
      s.coeffs = Eigen::Map<const Eigen::VectorXd>(p, k);
      p += k;
      s.mesh = Eigen::Map<const CanonicalMesh>(p, n, 3);
      p += 3 * n;
      s.clean = Eigen::Map<const PointSet2>(p, n, 2);
      p += 2 * n;
      s.noisy = Eigen::Map<const PointSet2>(p, n, 2);
      p += 2 * n;
      s.sigma = Eigen::Map<const Eigen::VectorXd>(p, n);
      ds.samples.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kIo, std::string("bad sample record: ") + e.what());
    }
  }
  if (ds.samples.size() != manifest.at("n_samples").get<std::size_t>()) {
    throw Error(ErrorCode::kIo, "sample count differs from manifest");
  }
  return ds;
}

void write_mesh_xyz(const std::filesystem::path& path, const CanonicalMesh& mesh) {
  std::string out;
  for (Eigen::Index i = 0; i < mesh.rows(); ++i) {
    out += fmt::format("{:.17g} {:.17g} {:.17g}\n", mesh(i, 0), mesh(i, 1), mesh(i, 2));
  }
  write_file(path, out);
}

CanonicalMesh read_mesh_xyz(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<double> values;
  std::string tok;
  while (in >> tok) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') {
      throw Error(ErrorCode::kIo, "bad number '" + tok + "' in " + path.string());
    }
    values.push_back(v);
  }
  if (values.empty() || values.size() % 3 != 0) {
    throw Error(ErrorCode::kIo, "vertex list length not divisible by 3 in " + path.string());
  }
  return Eigen::Map<const CanonicalMesh>(values.data(), static_cast<Eigen::Index>(values.size() / 3), 3);
}

std::vector<CanonicalMesh> read_mesh_directory(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".xyz") files.push_back(entry.path());
  }
  if (ec) throw Error(ErrorCode::kIo, "cannot list " + dir.string() + ": " + ec.message());
  std::sort(files.begin(), files.end());
  std::vector<CanonicalMesh> meshes;
  meshes.reserve(files.size());
  for (const auto& f : files) meshes.push_back(read_mesh_xyz(f));
  return meshes;
}

}  // namespace facerecon
