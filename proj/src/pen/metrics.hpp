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

#ifndef PEN_METRICS_HPP_
#define PEN_METRICS_HPP_

#include <array>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "pen/imagecore.hpp"

namespace pen {

struct MetricSettings {
  // Gray-level (0-255) difference above which a pixel counts as an error.
  double error_threshold = 20.0;
  // Neighbourhood for clustered error pixels: 4 or 8.
  int connectivity = 4;

  void validate() const;
  bool operator==(const MetricSettings&) const = default;
};

// MSE in the [0,1] domain over every pixel and channel.
double mse(const Image& a, const Image& b);
// 10 log10(1 / mse); +infinity for identical images.
double psnr(const Image& a, const Image& b);
// Single-scale SSIM on the luma images: 11x11 Gaussian window (sigma 1.5),
// C1 = 0.01^2, C2 = 0.03^2, averaged over all fully-inside window positions.
double ssim(const Image& a, const Image& b);
// Mean |gray255(a) - gray255(b)|.
double age(const Image& a, const Image& b);
// Fraction of pixels whose gray-level difference exceeds the threshold.
double peps(const Image& a, const Image& b, double tau_e = 20.0);
// Fraction of error pixels whose in-bounds neighbours are all error pixels.
double pceps(const Image& a, const Image& b, double tau_e = 20.0, int connectivity = 4);

struct ImageMetrics {
  double psnr = 0.0;
  double ssim = 0.0;
  double mse = 0.0;
  double age = 0.0;
  double peps = 0.0;
  double pceps = 0.0;

  bool operator==(const ImageMetrics&) const = default;
};

ImageMetrics compute_metrics(const Image& pred, const Image& gt, const MetricSettings& s = {});

struct MetricReport {
  std::map<std::string, ImageMetrics> per_image;
  // Means over per_image; psnr averages finite values only.
  ImageMetrics aggregate;
  std::size_t count = 0;
  // Images whose PSNR was infinite and therefore left out of the PSNR mean.
  std::size_t psnr_excluded = 0;
  // Pairs that could not be compared (missing partner or shape mismatch).
  std::vector<std::string> skipped;
  MetricSettings settings;

  bool operator==(const MetricReport&) const = default;
};

inline constexpr int kReportSchemaVersion = 1;

// Recomputes aggregate, count and psnr_excluded from per_image with
// compensated summation.
void finalize_report(MetricReport& report);

// Compares every prediction with the ground-truth image of the same file
// stem, at stored resolution.
MetricReport evaluate_dir(const std::filesystem::path& pred_root,
                          const std::filesystem::path& gt_root, const MetricSettings& s = {});

nlohmann::json report_to_json(const MetricReport& report);
MetricReport report_from_json(const nlohmann::json& j);
void write_report(const MetricReport& report, const std::filesystem::path& path);
MetricReport read_report(const std::filesystem::path& path);
// Plain-text table with SSIM scaled by 100.
std::string format_report_table(const MetricReport& report);

// --- detection-based protocol -------------------------------------------

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};
using Quad = std::array<Point2, 4>;

class TextDetector {
 public:
  virtual ~TextDetector() = default;
  virtual std::vector<Quad> detect(const Image& image) = 0;
};

struct DetectionScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t true_positives = 0;
  std::size_t detections = 0;
  std::size_t ground_truths = 0;
};

// Intersection over union of two convex quadrilaterals.
double quad_iou(const Quad& a, const Quad& b);
// Greedy one-to-one matching in descending IoU order at iou >= threshold.
// Empty detections give precision 0; empty ground truth gives recall 0.
DetectionScores match_detections(const std::vector<Quad>& detections,
                                 const std::vector<Quad>& ground_truth, double iou_threshold = 0.5);

// Annotation lines: "<image file stem>,x1,y1,x2,y2,x3,y3,x4,y4".
std::map<std::string, std::vector<Quad>> load_box_annotations(const std::filesystem::path& path);

// Runs the detector on every erased image and pools matches over the set.
// Throws NoDetector when det is null.
DetectionScores detection_eval(const std::filesystem::path& erased_dir,
                               const std::filesystem::path& gt_boxes, TextDetector* det,
                               double iou_threshold = 0.5);

}  // namespace pen

#endif  // PEN_METRICS_HPP_
