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

#ifndef PEN_IMAGECORE_HPP_
#define PEN_IMAGECORE_HPP_

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace pen {

// H x W x C image, row-major with interleaved channels, values in [0, 1].
// C is 1 (gray) or 3 (RGB). Pixel values live in [0, 1] everywhere inside the
// library; byte space only exists at file I/O and inside gray-level metrics.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, double fill = 0.0);
  // Takes ownership of `data`; throws if the size or any value is invalid.
  Image(int height, int width, int channels, std::vector<double> data);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }
  bool empty() const noexcept { return data_.empty(); }
  bool same_shape(const Image& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }

  double at(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }
  double& at(int y, int x, int c = 0) { return data_[index(y, x, c)]; }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> mutable_data() noexcept { return data_; }

  // Throws InvalidArgument when an element is non-finite or outside [0, 1].
  void check_range() const;
  void clamp01() noexcept;

  bool operator==(const Image& other) const = default;

 private:
  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) * static_cast<std::size_t>(channels_) +
           static_cast<std::size_t>(c);
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

// Single-channel soft mask in [0, 1] locating text strokes.
class StrokeMask {
 public:
  StrokeMask() = default;
  StrokeMask(int height, int width, double fill = 0.0) : image_(height, width, 1, fill) {}
  explicit StrokeMask(Image image);

  int height() const noexcept { return image_.height(); }
  int width() const noexcept { return image_.width(); }
  double at(int y, int x) const { return image_.at(y, x, 0); }
  double& at(int y, int x) { return image_.at(y, x, 0); }
  const Image& image() const noexcept { return image_; }
  Image& image() noexcept { return image_; }

  // True when every element is exactly 0 or 1.
  bool is_hard() const noexcept;
  std::size_t count_set(double threshold = 0.5) const noexcept;

  bool operator==(const StrokeMask& other) const = default;

 private:
  Image image_;
};

struct SamplePair {
  Image original;
  Image erased_gt;
  StrokeMask stroke_gt;
  std::string id;
};

enum class Split { kTrain, kTest };

struct DatasetEntry {
  std::string id;
  std::filesystem::path original_path;
  std::filesystem::path gt_path;
};

struct DatasetIndex {
  std::filesystem::path root;
  Split split = Split::kTrain;
  std::vector<DatasetEntry> entries;
  // Files present on one side only. Reported, never fatal.
  std::vector<std::string> unmatched;
};

enum class Interp { kNearest, kBilinear };
enum class Border { kReplicate, kConstant };

Image load_image(const std::filesystem::path& path);
void save_image(const Image& image, const std::filesystem::path& path);
void save_mask(const StrokeMask& mask, const std::filesystem::path& path);

// Pairs `images/` and `gt/` under root by identical filename. If
// `root/<split>` exists it is used as the root; a `manifest.csv` of
// `id,original_path,gt_path` lines overrides directory pairing.
DatasetIndex index_dataset(const std::filesystem::path& root, Split split = Split::kTrain);
// Sorted list of png/jpg/jpeg files directly inside dir.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

// Half-pixel-centre bilinear resampling (output pixel centres map to
// (i + 0.5) * in / out - 0.5, clamped to the source grid).
Image resize_bilinear(const Image& image, int height, int width);

// Luma 0.299 R + 0.587 G + 0.114 B; single-channel input is returned as is.
Image to_gray(const Image& image);
Image to_rgb(const Image& image);
double luma(double r, double g, double b) noexcept;

Image flip_horizontal(const Image& image);
// Rotation about the image centre by `degrees` (counter-clockwise).
Image rotate(const Image& image, double degrees, Interp interp, Border border,
             double fill = 0.0);

}  // namespace pen

#endif  // PEN_IMAGECORE_HPP_
