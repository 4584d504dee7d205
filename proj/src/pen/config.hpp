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

#ifndef PEN_CONFIG_HPP_
#define PEN_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace pen {

// Flat "key = value" settings. Lines starting with '#' are comments. Only
// registered keys are accepted; every key has a default, so an empty file is
// a complete configuration.
class Config {
 public:
  Config();

  static Config from_file(const std::filesystem::path& path);
  // Parses file text; source names the origin in error messages.
  static Config from_string(const std::string& text, const std::string& source = "<string>");

  void set(const std::string& key, const std::string& value);
  // "key=value", as given to --set.
  void apply_override(const std::string& assignment);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  // Comma-separated integers.
  std::vector<int> get_int_list(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  // Canonical text form, one sorted "key = value" per line.
  std::string dump() const;

  // Registered keys with their defaults and one-line descriptions.
  struct KeyInfo {
    std::string default_value;
    std::string help;
  };
  static const std::map<std::string, KeyInfo>& registry();

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace pen

#endif  // PEN_CONFIG_HPP_
