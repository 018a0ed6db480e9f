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

#ifndef FACERECON_GEOMETRY_HPP_
#define FACERECON_GEOMETRY_HPP_

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace facerecon {

// Point sets store one point per row. Row-major storage makes the flattened
// buffer interleaved (x0, y0, z0, x1, ...), which is the layout PCA vectors
// and serialized blobs use.
using PointSet2 = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;
using PointSet3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using CanonicalMesh = PointSet3;

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

Eigen::Matrix3d skew(const Eigen::Vector3d& v);
Eigen::Quaterniond exp_so3(const Eigen::Vector3d& omega);
Eigen::Vector3d log_so3(const Eigen::Quaterniond& q);

// Object-to-camera rigid transform: x_cam = R * x + t, translation in mm.
// The quaternion is kept unit-norm with a non-negative scalar part.
class RigidPose {
 public:
  RigidPose() = default;
  RigidPose(const Eigen::Quaterniond& rotation, const Eigen::Vector3d& translation);
  RigidPose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation);

  static RigidPose identity() { return {}; }

  const Eigen::Quaterniond& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }
  Eigen::Matrix3d rotation_matrix() const { return rotation_.toRotationMatrix(); }

  Eigen::Vector3d operator*(const Eigen::Vector3d& x) const { return rotation_ * x + translation_; }
  PointSet3 transform(const PointSet3& points) const;

 private:
  Eigen::Quaterniond rotation_ = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation_ = Eigen::Vector3d::Zero();
};

// compose(a, b) applies b first, then a.
RigidPose compose(const RigidPose& a, const RigidPose& b);
RigidPose invert(const RigidPose& a);

// Local 6-DoF chart used by the solvers: delta = (omega, tau) maps a pose to
// (exp(omega) * R, t + tau). Rotation increments act on the left, i.e. about
// the camera origin.
RigidPose retract(const RigidPose& base, const Vector6d& delta);
Vector6d local_coordinates(const RigidPose& base, const RigidPose& other);

// Euler angles in degrees. Convention: R = Ry(yaw) * Rx(pitch) * Rz(roll)
// (intrinsic yaw about Y, then pitch about X, then roll about Z) with the
// camera looking down +Z and image y pointing down. yaw and roll lie in
// [-180, 180), pitch in [-90, 90]. MAE_r values depend on this convention.
struct EulerAngles {
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
  // Set when |pitch| is within 1e-6 rad of 90 degrees; yaw and roll are then
  // not separable and roll is reported as 0.
  bool gimbal_lock = false;
};

EulerAngles pose_to_euler(const RigidPose& pose);
RigidPose euler_to_pose(const EulerAngles& angles,
                        const Eigen::Vector3d& translation = Eigen::Vector3d::Zero());

// Pinhole camera without distortion, pixels.
struct CameraIntrinsics {
  double fx = 1000.0;
  double fy = 1000.0;
  double cx = 400.0;
  double cy = 400.0;
  int width = 800;
  int height = 800;

  // Throws Error(kInvalidArgument) when fx, fy <= 0 or the principal point
  // falls outside the image.
  void validate() const;
  Eigen::Matrix3d matrix() const;
};

// u = fx * x / z + cx, v = fy * y / z + cy for the camera-frame point.
// Throws Error(kNonPositiveDepth, detail = index) on z <= 0.
PointSet2 project(const PointSet3& points, const RigidPose& pose, const CameraIntrinsics& cam);

// 2D similarity p -> scale * Rot(angle) * p + translation.
class Similarity2D {
 public:
  Similarity2D() = default;
  Similarity2D(double scale, double angle, const Eigen::Vector2d& translation);

  double scale() const { return scale_; }
  double angle() const { return angle_; }
  const Eigen::Vector2d& translation() const { return translation_; }

  // The 2x3 warp matrix [sR | t].
  Eigen::Matrix<double, 2, 3> matrix() const;
  Eigen::Vector2d operator*(const Eigen::Vector2d& p) const;
  Similarity2D inverse() const;
  // (*this) after `first`.
  Similarity2D compose(const Similarity2D& first) const;

 private:
  double scale_ = 1.0;
  double angle_ = 0.0;
  Eigen::Vector2d translation_ = Eigen::Vector2d::Zero();
};

PointSet2 apply_warp(const Similarity2D& warp, const PointSet2& points);
PointSet2 unwarp(const Similarity2D& warp, const PointSet2& points);

struct FrontalizeOptions {
  Eigen::Index first_eye = 0;
  Eigen::Index second_eye = 1;
  double fill_fraction = 0.8;
};

// Rotates the landmarks so the segment first_eye -> second_eye points along +x,
// then centres the landmark bounding box in a target_size x target_size crop
// with its longer side filling `fill_fraction` of the crop.
Similarity2D estimate_frontalize_warp(const PointSet2& landmarks, double target_size,
                                      const FrontalizeOptions& options = {});

}  // namespace facerecon

#endif  // FACERECON_GEOMETRY_HPP_
