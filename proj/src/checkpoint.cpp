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

#include "pen/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "pen/error.hpp"

namespace fs = std::filesystem;

namespace pen {

namespace {

constexpr char kMagic[8] = {'P', 'E', 'N', 'C', 'K', 'P', 'T', '1'};

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "float32";
    case torch::kFloat64: return "float64";
    case torch::kInt64: return "int64";
    default: fail(ErrorCode::kCheckpointError, "unsupported tensor dtype in container");
  }
}

torch::ScalarType dtype_from_name(const std::string& s) {
  if (s == "float32") return torch::kFloat32;
  if (s == "float64") return torch::kFloat64;
  if (s == "int64") return torch::kInt64;
  fail(ErrorCode::kCheckpointError, "unknown dtype '" + s + "'");
}

template <typename T>
void write_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) fail(ErrorCode::kCheckpointError, "truncated container header");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

const torch::Tensor* TensorContainer::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

const std::string* TensorContainer::find_blob(const std::string& name) const {
  for (const auto& [n, b] : blobs) {
    if (n == name) return &b;
  }
  return nullptr;
}

void write_container(const fs::path& path, const TensorContainer& c) {
  nlohmann::json header;
  header["meta"] = c.meta;
  header["tensors"] = nlohmann::json::array();
  header["blobs"] = nlohmann::json::array();
  std::vector<torch::Tensor> payload;
  std::uint64_t offset = 0;
  for (const auto& [name, t] : c.tensors) {
    auto ct = t.detach().cpu().contiguous();
    const std::uint64_t nbytes = static_cast<std::uint64_t>(ct.numel()) * ct.element_size();
    header["tensors"].push_back({{"name", name},
                                 {"dtype", dtype_name(ct.scalar_type())},
                                 {"shape", ct.sizes().vec()},
                                 {"offset", offset},
                                 {"nbytes", nbytes}});
    offset += nbytes;
    payload.push_back(ct);
  }
  for (const auto& [name, b] : c.blobs) {
    header["blobs"].push_back({{"name", name}, {"offset", offset}, {"nbytes", b.size()}});
    offset += b.size();
  }
  const std::string text = header.dump();

  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorCode::kCheckpointError, "cannot open " + tmp.string() + " for writing");
    os.write(kMagic, sizeof(kMagic));
    write_le<std::uint32_t>(os, kContainerFormatVersion);
    write_le<std::uint64_t>(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : payload) {
      os.write(static_cast<const char*>(t.data_ptr()),
               static_cast<std::streamsize>(t.numel() * t.element_size()));
    }
    for (const auto& [name, b] : c.blobs) os.write(b.data(), static_cast<std::streamsize>(b.size()));
    if (!os) fail(ErrorCode::kCheckpointError, "failed writing " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::kCheckpointError, "cannot move checkpoint into place: " + ec.message());
}

TensorContainer read_container(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::kCheckpointError, "cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    fail(ErrorCode::kCheckpointError, path.string() + " is not a PEN container");
  }
  const auto version = read_le<std::uint32_t>(is);
  if (version != kContainerFormatVersion) {
    fail(ErrorCode::kCheckpointError, "unsupported container version " + std::to_string(version));
  }
  const auto header_len = read_le<std::uint64_t>(is);
  std::string text(header_len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!is) fail(ErrorCode::kCheckpointError, "truncated container header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kCheckpointError, std::string("corrupt container header: ") + e.what());
  }
  const auto data_start = is.tellg();

  TensorContainer c;
  c.meta = header.value("meta", nlohmann::json::object());
  try {
    for (const auto& rec : header.at("tensors")) {
      const auto dtype = dtype_from_name(rec.at("dtype").get<std::string>());
      const auto shape = rec.at("shape").get<std::vector<std::int64_t>>();
      const auto offset = rec.at("offset").get<std::uint64_t>();
      const auto nbytes = rec.at("nbytes").get<std::uint64_t>();
      auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
      if (static_cast<std::uint64_t>(t.numel()) * t.element_size() != nbytes) {
        fail(ErrorCode::kCheckpointError, "size mismatch for tensor " + rec.at("name").get<std::string>());
      }
      is.seekg(data_start + static_cast<std::streamoff>(offset));
      is.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(nbytes));
      if (!is) fail(ErrorCode::kCheckpointError, "truncated tensor payload");
      c.tensors.emplace_back(rec.at("name").get<std::string>(), t);
    }
    for (const auto& rec : header.at("blobs")) {
      const auto offset = rec.at("offset").get<std::uint64_t>();
      const auto nbytes = rec.at("nbytes").get<std::uint64_t>();
      std::string b(nbytes, '\0');
      is.seekg(data_start + static_cast<std::streamoff>(offset));
      is.read(b.data(), static_cast<std::streamsize>(nbytes));
      if (!is) fail(ErrorCode::kCheckpointError, "truncated blob payload");
      c.blobs.emplace_back(rec.at("name").get<std::string>(), std::move(b));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kCheckpointError, std::string("malformed container header: ") + e.what());
  }
  return c;
}

}  // namespace pen
