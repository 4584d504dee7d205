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

#include "pen/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "pen/error.hpp"

namespace pen {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::map<std::string, Config::KeyInfo>& Config::registry() {
  static const std::map<std::string, KeyInfo> kKeys = {
      {"train.lr_gen", {"1e-4", "generator Adam learning rate"}},
      {"train.beta1_gen", {"0.5", "generator Adam beta1"}},
      {"train.beta2_gen", {"0.9", "generator Adam beta2"}},
      {"train.lr_disc", {"1e-5", "discriminator Adam learning rate"}},
      {"train.beta1_disc", {"0.0", "discriminator Adam beta1"}},
      {"train.beta2_disc", {"0.9", "discriminator Adam beta2"}},
      {"train.batch_size", {"2", "samples per step"}},
      {"train.steps", {"200", "steps in the stage"}},
      {"train.seed", {"0", "seed for initialization and sampling"}},
      {"train.input_size", {"64", "square training resolution, multiple of 16"}},
      {"train.deterministic", {"false", "single thread, deterministic kernels"}},
      {"train.checkpoint_every", {"0", "write the checkpoint every N steps (0: only at the end)"}},
      {"train.augment", {"true", "random flip and rotation of training pairs"}},
      {"net.base_channels", {"32", "generator width"}},
      {"net.iterations", {"3", "erasing passes"}},
      {"net.dilation_rates", {"2,4,8,16", "bottleneck dilations"}},
      {"net.stroke_blocks", {"2", "residual blocks per stroke-encoder stage"}},
      {"net.repredict_stroke", {"false", "predict a new stroke mask before every pass"}},
      {"disc.base_channels", {"64", "discriminator width"}},
      {"disc.warmup_power_iterations", {"50", "spectral-norm power iterations at construction"}},
      {"loss.lambda_r1", {"10", "reconstruction weight inside the stroke mask"}},
      {"loss.lambda_r2", {"2", "reconstruction weight outside the stroke mask"}},
      {"loss.lambda_c", {"0.1", "content weight"}},
      {"loss.lambda_s", {"150", "style weight"}},
      {"loss.lambda_a", {"0.1", "adversarial weight"}},
      {"loss.lambda_stroke", {"1.0", "auxiliary stroke BCE weight in fine-tuning"}},
      {"features.pretrained", {"auto", "auto | required | random"}},
      {"features.weights", {"", "tensor container with VGG-16 weights"}},
      {"features.layers", {"1,2,3", "pooling stages used by content and style"}},
      {"features.width_div", {"1", "divide VGG widths by this"}},
      {"features.seed", {"1234", "seed for random feature weights"}},
      {"augment.factor_min", {"0.5", "lowest photometric factor"}},
      {"augment.factor_max", {"1.5", "highest photometric factor"}},
      {"augment.rotation_deg", {"10", "max training rotation in degrees"}},
      {"augment.flip_prob", {"0.5", "horizontal flip probability"}},
      {"metrics.error_threshold", {"20", "gray-level error threshold"}},
      {"metrics.connectivity", {"4", "4 or 8"}},
      {"synth.size", {"64", "generated image side"}},
      {"synth.max_texts", {"2", "text instances per generated image"}},
      {"synth.tau", {"0.09803921568627451", "stroke threshold (25/255)"}},
      {"synth.max_rotation_deg", {"15", "max text rotation"}},
  };
  return kKeys;
}

Config::Config() {
  for (const auto& [key, info] : registry()) values_[key] = info.default_value;
}

Config Config::from_string(const std::string& text, const std::string& source) {
  Config cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      fail(ErrorCode::kConfigError, source + ":" + std::to_string(lineno) + ": expected key = value");
    }
    try {
      cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    } catch (const Error& e) {
      fail(ErrorCode::kConfigError, source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

Config Config::from_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::kConfigError, "cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return from_string(ss.str(), path.string());
}

void Config::set(const std::string& key, const std::string& value) {
  if (!registry().count(key)) fail(ErrorCode::kConfigError, "unknown config key '" + key + "'");
  values_[key] = value;
}

void Config::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) fail(ErrorCode::kConfigError, "--set expects key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

bool Config::has(const std::string& key) const { return values_.count(key) != 0; }

const std::string& Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) fail(ErrorCode::kConfigError, "unknown config key '" + key + "'");
  return it->second;
}

double Config::get_double(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    fail(ErrorCode::kConfigError, key + ": '" + v + "' is not a number");
  }
}

std::int64_t Config::get_int(const std::string& key) const {
  const std::string& v = get(key);
  std::int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    fail(ErrorCode::kConfigError, key + ": '" + v + "' is not an integer");
  }
  return out;
}

bool Config::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(ErrorCode::kConfigError, key + ": '" + v + "' is not a boolean");
}

std::vector<int> Config::get_int_list(const std::string& key) const {
  const std::string& v = get(key);
  std::vector<int> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    int x = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), x);
    if (tok.empty() || ec != std::errc() || ptr != tok.data() + tok.size()) {
      fail(ErrorCode::kConfigError, key + ": '" + v + "' is not a list of integers");
    }
    out.push_back(x);
  }
  return out;
}

std::string Config::dump() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
  return os.str();
}

}  // namespace pen
