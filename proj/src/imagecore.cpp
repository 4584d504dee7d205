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

#include "pen/imagecore.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "pen/error.hpp"

namespace fs = std::filesystem;

namespace pen {

namespace {

void check_dims(int height, int width, int channels) {
  if (height < 1 || width < 1) {
    fail(ErrorCode::kInvalidSize,
         "image dimensions must be positive, got " + std::to_string(height) + "x" +
             std::to_string(width));
  }
  if (channels != 1 && channels != 3) {
    fail(ErrorCode::kInvalidArgument,
         "image must have 1 or 3 channels, got " + std::to_string(channels));
  }
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

bool has_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::map<std::string, fs::path> files_by_name(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& p : list_images(dir)) out.emplace(p.filename().string(), p);
  return out;
}

}  // namespace

Image::Image(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  check_dims(height, width, channels);
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

Image::Image(int height, int width, int channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  check_dims(height, width, channels);
  if (data_.size() != static_cast<std::size_t>(height) * width * channels) {
    fail(ErrorCode::kInvalidArgument, "image buffer size does not match its shape");
  }
  check_range();
}

void Image::check_range() const {
  for (double v : data_) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      fail(ErrorCode::kInvalidArgument, "image value outside [0, 1]: " + std::to_string(v));
    }
  }
}

void Image::clamp01() noexcept {
  for (double& v : data_) v = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
}

StrokeMask::StrokeMask(Image image) : image_(std::move(image)) {
  if (image_.channels() != 1) {
    fail(ErrorCode::kInvalidArgument, "stroke mask must have exactly one channel");
  }
  image_.check_range();
}

bool StrokeMask::is_hard() const noexcept {
  return std::all_of(image_.data().begin(), image_.data().end(),
                     [](double v) { return v == 0.0 || v == 1.0; });
}

std::size_t StrokeMask::count_set(double threshold) const noexcept {
  return static_cast<std::size_t>(std::count_if(image_.data().begin(), image_.data().end(),
                                                [&](double v) { return v > threshold; }));
}

Image load_image(const fs::path& path) {
  if (!fs::is_regular_file(path)) {
    fail(ErrorCode::kFileNotFound, path.string());
  }
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) fail(ErrorCode::kDecodeError, "cannot decode " + path.string());
  if (mat.depth() != CV_8U) {
    fail(ErrorCode::kDecodeError, "only 8-bit images are supported: " + path.string());
  }
  const int c = mat.channels();
  cv::Mat rgb;
  int out_channels = 3;
  if (c == 1) {
    rgb = mat;
    out_channels = 1;
  } else if (c == 3) {
    cv::cvtColor(mat, rgb, cv::COLOR_BGR2RGB);
  } else if (c == 4) {
    cv::cvtColor(mat, rgb, cv::COLOR_BGRA2RGB);
  } else {
    fail(ErrorCode::kDecodeError, "unsupported channel count in " + path.string());
  }
  std::vector<double> data(static_cast<std::size_t>(rgb.rows) * rgb.cols * out_channels);
  std::size_t k = 0;
  for (int y = 0; y < rgb.rows; ++y) {
    const std::uint8_t* row = rgb.ptr<std::uint8_t>(y);
    for (int i = 0; i < rgb.cols * out_channels; ++i) data[k++] = row[i] / 255.0;
  }
  return Image(rgb.rows, rgb.cols, out_channels, std::move(data));
}

void save_image(const Image& image, const fs::path& path) {
  if (image.empty()) fail(ErrorCode::kInvalidArgument, "cannot save an empty image");
  image.check_range();
  const int c = image.channels();
  cv::Mat mat(image.height(), image.width(), c == 1 ? CV_8UC1 : CV_8UC3);
  const auto data = image.data();
  for (int y = 0; y < image.height(); ++y) {
    std::uint8_t* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < image.width(); ++x) {
      const std::size_t base = (static_cast<std::size_t>(y) * image.width() + x) * c;
      if (c == 1) {
        row[x] = to_byte(data[base]);
      } else {
        row[3 * x + 0] = to_byte(data[base + 2]);
        row[3 * x + 1] = to_byte(data[base + 1]);
        row[3 * x + 2] = to_byte(data[base + 0]);
      }
    }
  }
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), mat);
  } catch (const cv::Exception& e) {
    fail(ErrorCode::kIoError, "cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) fail(ErrorCode::kIoError, "cannot write " + path.string());
}

void save_mask(const StrokeMask& mask, const fs::path& path) { save_image(mask.image(), path); }

std::vector<fs::path> list_images(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && has_image_extension(e.path())) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end(), [](const fs::path& a, const fs::path& b) {
    return a.filename().string() < b.filename().string();
  });
  return out;
}

DatasetIndex index_dataset(const fs::path& root_in, Split split) {
  DatasetIndex index;
  fs::path root = root_in;
  const fs::path split_dir = root / (split == Split::kTrain ? "train" : "test");
  if (fs::is_directory(split_dir)) root = split_dir;
  index.root = root;
  index.split = split;

  const fs::path manifest = root / "manifest.csv";
  if (fs::is_regular_file(manifest)) {
    std::ifstream in(manifest);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      std::stringstream ss(line);
      std::string id, orig, gt;
      if (!std::getline(ss, id, ',') || !std::getline(ss, orig, ',') || !std::getline(ss, gt)) {
        fail(ErrorCode::kInvalidArgument, "malformed manifest line: " + line);
      }
      fs::path op = fs::path(orig).is_absolute() ? fs::path(orig) : root / orig;
      fs::path gp = fs::path(gt).is_absolute() ? fs::path(gt) : root / gt;
      if (fs::is_regular_file(op) && fs::is_regular_file(gp)) {
        index.entries.push_back({id, op, gp});
      } else {
        index.unmatched.push_back(id);
      }
    }
  } else {
    const auto images = files_by_name(root / "images");
    const auto gts = files_by_name(root / "gt");
    for (const auto& [name, path] : images) {
      auto it = gts.find(name);
      if (it == gts.end()) {
        index.unmatched.push_back("images/" + name);
        continue;
      }
      index.entries.push_back({fs::path(name).stem().string(), path, it->second});
    }
    for (const auto& [name, path] : gts) {
      if (!images.contains(name)) index.unmatched.push_back("gt/" + name);
    }
  }
  std::sort(index.entries.begin(), index.entries.end(),
            [](const DatasetEntry& a, const DatasetEntry& b) { return a.id < b.id; });
  if (index.entries.empty()) {
    fail(ErrorCode::kEmptyDataset, "no paired images under " + root.string());
  }
  return index;
}

Image resize_bilinear(const Image& image, int height, int width) {
  if (height < 1 || width < 1) {
    fail(ErrorCode::kInvalidSize, "resize target must be positive");
  }
  if (height == image.height() && width == image.width()) return image;
  const int c = image.channels();
  Image out(height, width, c);
  const double sy = static_cast<double>(image.height()) / height;
  const double sx = static_cast<double>(image.width()) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height() - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, image.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width() - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, image.width() - 1);
      const double wx = fx - x0;
      for (int k = 0; k < c; ++k) {
        // a + w (b - a) keeps constant regions exactly constant.
        const double a = image.at(y0, x0, k);
        const double b = image.at(y0, x1, k);
        const double c2 = image.at(y1, x0, k);
        const double d = image.at(y1, x1, k);
        const double top = a + wx * (b - a);
        const double bot = c2 + wx * (d - c2);
        out.at(y, x, k) = std::clamp(top + wy * (bot - top), 0.0, 1.0);
      }
    }
  }
  return out;
}

double luma(double r, double g, double b) noexcept { return 0.299 * r + 0.587 * g + 0.114 * b; }

Image to_gray(const Image& image) {
  if (image.channels() == 1) return image;
  Image out(image.height(), image.width(), 1);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      out.at(y, x) = std::clamp(luma(image.at(y, x, 0), image.at(y, x, 1), image.at(y, x, 2)),
                                0.0, 1.0);
    }
  }
  return out;
}

Image to_rgb(const Image& image) {
  if (image.channels() == 3) return image;
  Image out(image.height(), image.width(), 3);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const double v = image.at(y, x);
      for (int k = 0; k < 3; ++k) out.at(y, x, k) = v;
    }
  }
  return out;
}

Image flip_horizontal(const Image& image) {
  Image out(image.height(), image.width(), image.channels());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      for (int k = 0; k < image.channels(); ++k) {
        out.at(y, image.width() - 1 - x, k) = image.at(y, x, k);
      }
    }
  }
  return out;
}

Image rotate(const Image& image, double degrees, Interp interp, Border border, double fill) {
  if (degrees == 0.0) return image;
  const int h = image.height();
  const int w = image.width();
  const int c = image.channels();
  const double rad = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(rad);
  const double sn = std::sin(rad);
  const double cx = (w - 1) / 2.0;
  const double cy = (h - 1) / 2.0;
  Image out(h, w, c);

  auto sample = [&](int yy, int xx, int k) -> double {
    if (yy < 0 || yy >= h || xx < 0 || xx >= w) {
      if (border == Border::kConstant) return fill;
      yy = std::clamp(yy, 0, h - 1);
      xx = std::clamp(xx, 0, w - 1);
    }
    return image.at(yy, xx, k);
  };

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = x - cx;
      const double dy = y - cy;
      const double sx = cs * dx + sn * dy + cx;
      const double sy = -sn * dx + cs * dy + cy;
      for (int k = 0; k < c; ++k) {
        double v;
        if (interp == Interp::kNearest) {
          v = sample(static_cast<int>(std::lround(sy)), static_cast<int>(std::lround(sx)), k);
        } else {
          const int x0 = static_cast<int>(std::floor(sx));
          const int y0 = static_cast<int>(std::floor(sy));
          const double wx = sx - x0;
          const double wy = sy - y0;
          const double top = (1.0 - wx) * sample(y0, x0, k) + wx * sample(y0, x0 + 1, k);
          const double bot = (1.0 - wx) * sample(y0 + 1, x0, k) + wx * sample(y0 + 1, x0 + 1, k);
          v = (1.0 - wy) * top + wy * bot;
        }
        out.at(y, x, k) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

}  // namespace pen
