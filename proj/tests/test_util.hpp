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

// Helpers and independent reference implementations shared by the tests.

#ifndef PEN_TESTS_TEST_UTIL_HPP_
#define PEN_TESTS_TEST_UTIL_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "pen/imagecore.hpp"
#include "pen/pipeline.hpp"

namespace pen {

// Lets assertion failures print loss histories.
inline std::ostream& operator<<(std::ostream& os, const LossRecord& r) {
  return os << r.step << ',' << r.name << ',' << r.value;
}

}  // namespace pen

namespace pen::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("pen_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline Image random_image(int h, int w, int c, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Image img(h, w, c);
  for (double& v : img.mutable_data()) v = dist(gen);
  return img;
}

inline Image constant_image(int h, int w, int c, double v) { return Image(h, w, c, v); }

inline std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline std::uint64_t fnv(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Hash of every regular file below root, keyed by relative path.
inline std::uint64_t tree_hash(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string acc;
  for (const auto& f : files) {
    acc += std::filesystem::relative(f, root).string();
    acc += std::to_string(fnv(file_bytes(f)));
  }
  return fnv(acc);
}

// ---- reference implementations -----------------------------------------

inline double ref_luma(const Image& img, int y, int x) {
  if (img.channels() == 1) return img.at(y, x, 0);
  return 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
}

// Bilinear resampling written as a sum of separable tent weights over every
// source pixel, with half-pixel centres and edge clamping.
inline Image ref_resize(const Image& src, int h, int w) {
  Image out(h, w, src.channels());
  for (int i = 0; i < h; ++i) {
    double sy = (i + 0.5) * src.height() / h - 0.5;
    sy = std::min(std::max(sy, 0.0), src.height() - 1.0);
    for (int j = 0; j < w; ++j) {
      double sx = (j + 0.5) * src.width() / w - 0.5;
      sx = std::min(std::max(sx, 0.0), src.width() - 1.0);
      for (int c = 0; c < src.channels(); ++c) {
        double acc = 0.0;
        for (int p = 0; p < src.height(); ++p) {
          for (int q = 0; q < src.width(); ++q) {
            const double wy = std::max(0.0, 1.0 - std::abs(sy - p));
            const double wx = std::max(0.0, 1.0 - std::abs(sx - q));
            acc += wy * wx * src.at(p, q, c);
          }
        }
        out.at(i, j, c) = acc;
      }
    }
  }
  return out;
}

inline StrokeMask ref_stroke(const Image& a, const Image& b, double tau) {
  StrokeMask m(a.height(), a.width());
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      bool on = false;
      for (int c = 0; c < a.channels(); ++c) {
        if (std::fabs(a.at(y, x, c) - b.at(y, x, c)) > tau) on = true;
      }
      m.at(y, x) = on ? 1.0 : 0.0;
    }
  }
  return m;
}

inline double ref_mse(const Image& a, const Image& b) {
  double s = 0.0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x)
      for (int c = 0; c < a.channels(); ++c) s += (a.at(y, x, c) - b.at(y, x, c)) * (a.at(y, x, c) - b.at(y, x, c));
  return s / (static_cast<double>(a.height()) * a.width() * a.channels());
}

inline double ref_age(const Image& a, const Image& b) {
  double s = 0.0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) s += std::fabs(255.0 * ref_luma(a, y, x) - 255.0 * ref_luma(b, y, x));
  return s / (static_cast<double>(a.height()) * a.width());
}

inline std::vector<std::vector<int>> ref_error_map(const Image& a, const Image& b, double tau) {
  std::vector<std::vector<int>> e(a.height(), std::vector<int>(a.width(), 0));
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x)
      e[y][x] = std::fabs(255.0 * ref_luma(a, y, x) - 255.0 * ref_luma(b, y, x)) > tau ? 1 : 0;
  return e;
}

inline std::size_t ref_peps_count(const Image& a, const Image& b, double tau) {
  std::size_t n = 0;
  for (const auto& row : ref_error_map(a, b, tau))
    for (int v : row) n += v;
  return n;
}

inline std::size_t ref_pceps_count(const Image& a, const Image& b, double tau) {
  const auto e = ref_error_map(a, b, tau);
  const int h = a.height();
  const int w = a.width();
  std::size_t n = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!e[y][x]) continue;
      bool all = true;
      if (y > 0 && !e[y - 1][x]) all = false;
      if (y + 1 < h && !e[y + 1][x]) all = false;
      if (x > 0 && !e[y][x - 1]) all = false;
      if (x + 1 < w && !e[y][x + 1]) all = false;
      if (all) ++n;
    }
  }
  return n;
}

// Direct 2-D Gaussian-window SSIM on luma over all valid 11x11 windows.
inline double ref_ssim(const Image& a, const Image& b) {
  double g[11][11];
  double gs = 0.0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) {
      g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2.0 * 1.5 * 1.5));
      gs += g[i][j];
    }
  const double c1 = 0.0001, c2 = 0.0009;
  double total = 0.0;
  int count = 0;
  for (int y = 0; y + 11 <= a.height(); ++y) {
    for (int x = 0; x + 11 <= a.width(); ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double wgt = g[i][j] / gs;
          const double va = ref_luma(a, y + i, x + j);
          const double vb = ref_luma(b, y + i, x + j);
          ma += wgt * va;
          mb += wgt * vb;
          saa += wgt * va * va;
          sbb += wgt * vb * vb;
          sab += wgt * va * vb;
        }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / count;
}

// ---- gradient checking ---------------------------------------------------

// Relative error ||g_fd - g|| / max(||g_fd||, ||g||, tiny) between the
// autograd gradient of f at x and central differences with step h.
inline double gradient_rel_error(const std::function<torch::Tensor(const torch::Tensor&)>& f,
                                 const torch::Tensor& x0, double h = 1e-6) {
  auto x = x0.detach().clone().requires_grad_(true);
  auto y = f(x);
  y.backward();
  const auto analytic = x.grad().detach().clone().reshape({-1});
  auto base = x0.detach().clone().reshape({-1});
  auto numeric = torch::zeros_like(base);
  torch::NoGradGuard guard;
  for (int64_t i = 0; i < base.numel(); ++i) {
    auto xp = base.clone();
    auto xm = base.clone();
    xp[i] += h;
    xm[i] -= h;
    const double fp = f(xp.reshape(x0.sizes())).item<double>();
    const double fm = f(xm.reshape(x0.sizes())).item<double>();
    numeric[i] = (fp - fm) / (2 * h);
  }
  const double denom = std::max({numeric.norm().item<double>(), analytic.norm().item<double>(), 1e-12});
  return (numeric - analytic).norm().item<double>() / denom;
}

// Pushes elements of x away from the matching elements of ref by at least
// margin, so |x - ref| stays differentiable under finite differences.
inline torch::Tensor avoid_ties(torch::Tensor x, const torch::Tensor& ref, double margin = 1e-3) {
  auto d = x - ref;
  auto small = d.abs() < margin;
  auto sign = torch::where(d >= 0, torch::ones_like(d), -torch::ones_like(d));
  return torch::where(small, ref + sign * margin, x);
}

// ---- tiny configurations for fast pipeline tests --------------------------

inline TrainConfig tiny_train_config(Stage stage, int steps) {
  TrainConfig t;
  t.stage = stage;
  t.steps = steps;
  t.seed = 5;
  t.input_size = 32;
  t.batch_size = 2;
  t.deterministic = true;
  t.augment = true;
  t.lr_gen = 1e-3;
  t.net.base_channels = 8;
  t.net.iterations = 2;
  t.disc.base_channels = 8;
  t.disc.warmup_power_iterations = 50;
  t.features.init = FeatureInit::kRandom;
  t.features.width_div = 8;
  return t;
}

}  // namespace pen::testing

#endif  // PEN_TESTS_TEST_UTIL_HPP_
