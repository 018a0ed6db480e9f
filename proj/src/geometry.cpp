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

#include "facerecon/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "facerecon/error.hpp"

namespace facerecon {
namespace {

constexpr double kDeg = 180.0 / std::numbers::pi;

Eigen::Quaterniond canonical(Eigen::Quaterniond q) {
  // Leave already-unit quaternions untouched so serialization round trips are
  // bit exact.
  if (std::abs(q.squaredNorm() - 1.0) > 4.0 * std::numeric_limits<double>::epsilon()) q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

// Maps an angle in degrees to [-180, 180).
double wrap_degrees(double a) {
  double w = std::fmod(a + 180.0, 360.0);
  if (w < 0.0) w += 360.0;
  return w - 180.0;
}

}  // namespace

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Eigen::Quaterniond exp_so3(const Eigen::Vector3d& omega) {
  const double theta = omega.norm();
  if (theta < 1e-12) {
    Eigen::Quaterniond q(1.0, 0.5 * omega.x(), 0.5 * omega.y(), 0.5 * omega.z());
    return q.normalized();
  }
  return Eigen::Quaterniond(Eigen::AngleAxisd(theta, omega / theta));
}

Eigen::Vector3d log_so3(const Eigen::Quaterniond& q_in) {
  const Eigen::Quaterniond q = canonical(q_in);
  const double vn = q.vec().norm();
  if (vn < 1e-15) return 2.0 * q.vec();
  const double angle = 2.0 * std::atan2(vn, q.w());
  return q.vec() * (angle / vn);
}

RigidPose::RigidPose(const Eigen::Quaterniond& rotation, const Eigen::Vector3d& translation)
    : rotation_(canonical(rotation)), translation_(translation) {}

RigidPose::RigidPose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
    : rotation_(canonical(Eigen::Quaterniond(rotation))), translation_(translation) {}

PointSet3 RigidPose::transform(const PointSet3& points) const {
  const Eigen::Matrix3d r = rotation_matrix();
  PointSet3 out = points * r.transpose();
  out.rowwise() += translation_.transpose();
  return out;
}

RigidPose compose(const RigidPose& a, const RigidPose& b) {
  return RigidPose(a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation());
}

RigidPose invert(const RigidPose& a) {
  const Eigen::Quaterniond qi = a.rotation().conjugate();
  return RigidPose(qi, -(qi * a.translation()));
}

RigidPose retract(const RigidPose& base, const Vector6d& delta) {
  return RigidPose(exp_so3(delta.head<3>()) * base.rotation(), base.translation() + delta.tail<3>());
}

Vector6d local_coordinates(const RigidPose& base, const RigidPose& other) {
  Vector6d d;
  d.head<3>() = log_so3(other.rotation() * base.rotation().conjugate());
  d.tail<3>() = other.translation() - base.translation();
  return d;
}

EulerAngles pose_to_euler(const RigidPose& pose) {
  // R = Ry(a) Rx(b) Rz(c):
  //   R(1,2) = -sin b, R(0,2) = sin a cos b, R(2,2) = cos a cos b,
  //   R(1,0) = cos b sin c, R(1,1) = cos b cos c.
  const Eigen::Matrix3d r = pose.rotation_matrix();
  EulerAngles e;
  const double sb = std::clamp(-r(1, 2), -1.0, 1.0);
  const double pitch = std::asin(sb);
  e.pitch = pitch * kDeg;
  if (std::abs(std::abs(pitch) - std::numbers::pi / 2.0) < 1e-6) {
    e.gimbal_lock = true;
    // With roll fixed at 0: R(0,0) = cos a, R(2,0) = -sin a.
    e.yaw = wrap_degrees(std::atan2(-r(2, 0), r(0, 0)) * kDeg);
    e.roll = 0.0;
    return e;
  }
  e.yaw = wrap_degrees(std::atan2(r(0, 2), r(2, 2)) * kDeg);
  e.roll = wrap_degrees(std::atan2(r(1, 0), r(1, 1)) * kDeg);
  return e;
}

RigidPose euler_to_pose(const EulerAngles& angles, const Eigen::Vector3d& translation) {
  const Eigen::Quaterniond q = Eigen::AngleAxisd(angles.yaw / kDeg, Eigen::Vector3d::UnitY()) *
                               Eigen::AngleAxisd(angles.pitch / kDeg, Eigen::Vector3d::UnitX()) *
                               Eigen::AngleAxisd(angles.roll / kDeg, Eigen::Vector3d::UnitZ());
  return RigidPose(q, translation);
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "focal lengths must be positive");
  }
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw Error(ErrorCode::kInvalidArgument, "principal point outside the image");
  }
}

Eigen::Matrix3d CameraIntrinsics::matrix() const {
  Eigen::Matrix3d k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

PointSet2 project(const PointSet3& points, const RigidPose& pose, const CameraIntrinsics& cam) {
  const Eigen::Matrix3d r = pose.rotation_matrix();
  PointSet2 out(points.rows(), 2);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const Eigen::Vector3d p = r * points.row(i).transpose() + pose.translation();
    if (!(p.z() > 0.0)) {
      throw Error(ErrorCode::kNonPositiveDepth, "point " + std::to_string(i) + " behind camera", i);
    }
    out(i, 0) = cam.fx * p.x() / p.z() + cam.cx;
    out(i, 1) = cam.fy * p.y() / p.z() + cam.cy;
  }
  return out;
}

Similarity2D::Similarity2D(double scale, double angle, const Eigen::Vector2d& translation)
    : scale_(scale), angle_(angle), translation_(translation) {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw Error(ErrorCode::kInvalidArgument, "similarity scale must be positive");
  }
}

Eigen::Matrix<double, 2, 3> Similarity2D::matrix() const {
  Eigen::Matrix<double, 2, 3> m;
  m.leftCols<2>() = scale_ * Eigen::Rotation2Dd(angle_).toRotationMatrix();
  m.col(2) = translation_;
  return m;
}

Eigen::Vector2d Similarity2D::operator*(const Eigen::Vector2d& p) const {
  return scale_ * (Eigen::Rotation2Dd(angle_) * p) + translation_;
}

Similarity2D Similarity2D::inverse() const {
  const Eigen::Rotation2Dd inv_rot(-angle_);
  return Similarity2D(1.0 / scale_, -angle_, -(inv_rot * translation_) / scale_);
}

Similarity2D Similarity2D::compose(const Similarity2D& first) const {
  return Similarity2D(scale_ * first.scale_, angle_ + first.angle_, (*this) * first.translation_);
}

PointSet2 apply_warp(const Similarity2D& warp, const PointSet2& points) {
  const Eigen::Matrix<double, 2, 3> m = warp.matrix();
  PointSet2 out = points * m.leftCols<2>().transpose();
  out.rowwise() += m.col(2).transpose();
  return out;
}

PointSet2 unwarp(const Similarity2D& warp, const PointSet2& points) {
  // Solve the forward map rather than multiplying by a composed inverse
  // matrix; keeps the round trip at the 1e-12 level.
  const Eigen::Matrix2d rt = Eigen::Rotation2Dd(warp.angle()).toRotationMatrix().transpose();
  PointSet2 out = points;
  out.rowwise() -= warp.translation().transpose();
  out = (out * rt.transpose()) / warp.scale();
  return out;
}

Similarity2D estimate_frontalize_warp(const PointSet2& landmarks, double target_size,
                                      const FrontalizeOptions& options) {
  const Eigen::Index n = landmarks.rows();
  if (options.first_eye < 0 || options.first_eye >= n || options.second_eye < 0 ||
      options.second_eye >= n) {
    throw Error(ErrorCode::kInvalidArgument, "eye landmark index out of range");
  }
  if (!(target_size > 0.0) || !(options.fill_fraction > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "target size and fill fraction must be positive");
  }
  const Eigen::Vector2d eye_vec =
      (landmarks.row(options.second_eye) - landmarks.row(options.first_eye)).transpose();
  if (eye_vec.norm() < 1e-12) {
    throw Error(ErrorCode::kDegenerateLandmarks, "eye landmarks coincide");
  }
  const double angle = -std::atan2(eye_vec.y(), eye_vec.x());

  const PointSet2 rotated = apply_warp(Similarity2D(1.0, angle, Eigen::Vector2d::Zero()), landmarks);
  const Eigen::Vector2d lo = rotated.colwise().minCoeff().transpose();
  const Eigen::Vector2d hi = rotated.colwise().maxCoeff().transpose();
  const double extent = (hi - lo).maxCoeff();
  if (extent < 1e-12) {
    throw Error(ErrorCode::kDegenerateLandmarks, "landmarks have zero extent");
  }
  const double scale = options.fill_fraction * target_size / extent;
  const Eigen::Vector2d centre = 0.5 * (lo + hi);
  const Eigen::Vector2d translation = Eigen::Vector2d::Constant(0.5 * target_size) - scale * centre;
  return Similarity2D(scale, angle, translation);
}

}  // namespace facerecon
