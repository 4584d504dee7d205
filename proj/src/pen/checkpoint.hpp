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

#ifndef PEN_CHECKPOINT_HPP_
#define PEN_CHECKPOINT_HPP_

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

namespace pen {

inline constexpr std::uint32_t kContainerFormatVersion = 1;

// Single-file container: 8-byte magic "PENCKPT1", u32 format version, u64
// header length, a JSON header, then the raw little-endian payload of every
// tensor and blob at the offsets the header lists. Tensors are float32,
// float64 or int64, stored contiguously in row-major order.
struct TensorContainer {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, torch::Tensor>> tensors;
  std::vector<std::pair<std::string, std::string>> blobs;

  const torch::Tensor* find(const std::string& name) const;
  const std::string* find_blob(const std::string& name) const;
};

// Writes through a temporary file and renames it into place.
void write_container(const std::filesystem::path& path, const TensorContainer& container);
TensorContainer read_container(const std::filesystem::path& path);

}  // namespace pen

#endif  // PEN_CHECKPOINT_HPP_
