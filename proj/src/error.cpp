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

#include "pen/error.hpp"

namespace pen {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kFileNotFound: return "FileNotFound";
    case ErrorCode::kDecodeError: return "DecodeError";
    case ErrorCode::kIoError: return "IOError";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kMismatchedPair: return "MismatchedPair";
    case ErrorCode::kInvalidSize: return "InvalidSize";
    case ErrorCode::kInvalidFactor: return "InvalidFactor";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kGlyphOverflow: return "GlyphOverflow";
    case ErrorCode::kEmptyText: return "EmptyText";
    case ErrorCode::kBadShape: return "BadShape";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kNonFiniteTerm: return "NonFiniteTerm";
    case ErrorCode::kTooSmall: return "TooSmall";
    case ErrorCode::kNoDetector: return "NoDetector";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kCheckpointError: return "CheckpointError";
    case ErrorCode::kMissingStrokeInit: return "MissingStrokeInit";
    case ErrorCode::kStageOrder: return "StageOrder";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
      code_(code) {}

void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace pen
