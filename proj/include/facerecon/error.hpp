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

#ifndef FACERECON_ERROR_HPP_
#define FACERECON_ERROR_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace facerecon {

enum class ErrorCode {
  kInvalidArgument,
  kNonPositiveDepth,
  kDegenerateLandmarks,
  kDegenerateConfiguration,
  kSingularHessian,
  kNotConverged,
  kDegenerateWeights,
  kInconsistentVertexCount,
  kRankDeficient,
  kDimensionMismatch,
  kUnprojectableScene,
  kIo,
  kFormatVersionMismatch,
  kChecksumMismatch,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library. `detail()` carries the offending point
// index for kNonPositiveDepth and the detected rank for kRankDeficient; it is
// -1 otherwise.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::int64_t detail = -1)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  std::int64_t detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::int64_t detail_;
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kNonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::kDegenerateLandmarks: return "DegenerateLandmarks";
    case ErrorCode::kDegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::kSingularHessian: return "SingularHessian";
    case ErrorCode::kNotConverged: return "NotConverged";
    case ErrorCode::kDegenerateWeights: return "DegenerateWeights";
    case ErrorCode::kInconsistentVertexCount: return "InconsistentVertexCount";
    case ErrorCode::kRankDeficient: return "RankDeficient";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kUnprojectableScene: return "UnprojectableScene";
    case ErrorCode::kIo: return "IO";
    case ErrorCode::kFormatVersionMismatch: return "FormatVersionMismatch";
    case ErrorCode::kChecksumMismatch: return "ChecksumMismatch";
  }
  return "Unknown";
}

}  // namespace facerecon

#endif  // FACERECON_ERROR_HPP_
