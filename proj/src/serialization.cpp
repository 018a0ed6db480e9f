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

#include "facerecon/serialization.hpp"

#include "facerecon/error.hpp"

namespace facerecon {

nlohmann::json to_json(const RigidPose& pose) {
  const auto& q = pose.rotation();
  const auto& t = pose.translation();
  return {{"rotation", {q.w(), q.x(), q.y(), q.z()}}, {"translation", {t.x(), t.y(), t.z()}}};
}

RigidPose pose_from_json(const nlohmann::json& j) {
  const auto q = j.at("rotation").get<std::vector<double>>();
  const auto t = j.at("translation").get<std::vector<double>>();
  if (q.size() != 4 || t.size() != 3) {
    throw Error(ErrorCode::kIo, "malformed pose record");
  }
  return RigidPose(Eigen::Quaterniond(q[0], q[1], q[2], q[3]), Eigen::Vector3d(t[0], t[1], t[2]));
}

nlohmann::json to_json(const CameraIntrinsics& cam) {
  return {{"fx", cam.fx}, {"fy", cam.fy}, {"cx", cam.cx},
          {"cy", cam.cy}, {"width", cam.width}, {"height", cam.height}};
}

CameraIntrinsics intrinsics_from_json(const nlohmann::json& j) {
  CameraIntrinsics cam;
  cam.fx = j.at("fx").get<double>();
  cam.fy = j.at("fy").get<double>();
  cam.cx = j.at("cx").get<double>();
  cam.cy = j.at("cy").get<double>();
  cam.width = j.at("width").get<int>();
  cam.height = j.at("height").get<int>();
  cam.validate();
  return cam;
}

nlohmann::json to_json(const Similarity2D& warp) {
  return {{"scale", warp.scale()},
          {"angle", warp.angle()},
          {"translation", {warp.translation().x(), warp.translation().y()}}};
}

Similarity2D warp_from_json(const nlohmann::json& j) {
  const auto t = j.at("translation").get<std::vector<double>>();
  if (t.size() != 2) throw Error(ErrorCode::kIo, "malformed warp record");
  return Similarity2D(j.at("scale").get<double>(), j.at("angle").get<double>(),
                      Eigen::Vector2d(t[0], t[1]));
}

}  // namespace facerecon
