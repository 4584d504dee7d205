/* Copyright 2026 The PEN Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef PEN_ERROR_HPP_
#define PEN_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace pen {

// Every failure raised by the library carries one of these codes. The C API
// maps them onto pen_status values one-to-one.
enum class ErrorCode {
  kInvalidArgument = 1,
  kFileNotFound,
  kDecodeError,
  kIoError,
  kEmptyDataset,
  kMismatchedPair,
  kInvalidSize,
  kInvalidFactor,
  kShapeMismatch,
  kGlyphOverflow,
  kEmptyText,
  kBadShape,
  kLengthMismatch,
  kNonFiniteTerm,
  kTooSmall,
  kNoDetector,
  kConfigError,
  kCheckpointError,
  kMissingStrokeInit,
  kStageOrder,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace pen

#endif  // PEN_ERROR_HPP_
