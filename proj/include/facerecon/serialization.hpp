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

#ifndef FACERECON_SERIALIZATION_HPP_
#define FACERECON_SERIALIZATION_HPP_

#include <json.hpp>

#include "facerecon/geometry.hpp"

namespace facerecon {

// {"rotation": [w, x, y, z], "translation": [x, y, z]}
nlohmann::json to_json(const RigidPose& pose);
RigidPose pose_from_json(const nlohmann::json& j);

nlohmann::json to_json(const CameraIntrinsics& cam);
CameraIntrinsics intrinsics_from_json(const nlohmann::json& j);

// {"scale": s, "angle": rad, "translation": [x, y]}
nlohmann::json to_json(const Similarity2D& warp);
Similarity2D warp_from_json(const nlohmann::json& j);

}  // namespace facerecon

#endif  // FACERECON_SERIALIZATION_HPP_
