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

#include "pen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <opencv2/imgproc.hpp>

#include "pen/error.hpp"

namespace fs = std::filesystem;

namespace pen {

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void check_pair(const Image& a, const Image& b) {
  if (!a.same_shape(b)) {
    fail(ErrorCode::kShapeMismatch,
         "images differ in shape: " + std::to_string(a.height()) + "x" + std::to_string(a.width()) + "x" +
             std::to_string(a.channels()) + " vs " + std::to_string(b.height()) + "x" +
             std::to_string(b.width()) + "x" + std::to_string(b.channels()));
  }
}

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

std::vector<double> gray255(const Image& img) {
  const Image g = to_gray(img);
  std::vector<double> out(g.data().begin(), g.data().end());
  for (double& v : out) v *= 255.0;
  return out;
}

std::vector<bool> error_pixels(const Image& a, const Image& b, double tau_e) {
  const auto ga = gray255(a);
  const auto gb = gray255(b);
  std::vector<bool> err(ga.size());
  for (std::size_t i = 0; i < ga.size(); ++i) err[i] = std::abs(ga[i] - gb[i]) > tau_e;
  return err;
}

std::vector<double> gaussian_kernel() {
  std::vector<double> k(kSsimWindow);
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    k[static_cast<std::size_t>(i)] = std::exp(-(d * d) / (2.0 * kSsimSigma * kSsimSigma));
    sum += k[static_cast<std::size_t>(i)];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Valid-mode separable filtering of an h x w map.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w,
                                 const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int oh = h - n + 1;
  const int ow = w - n + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[static_cast<std::size_t>(i)] * src[static_cast<std::size_t>(y) * w + x + i];
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[static_cast<std::size_t>(i)] * rows[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

nlohmann::json number_or_inf(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double parse_number_or_inf(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    fail(ErrorCode::kInvalidArgument, "unexpected metric string '" + s + "'");
  }
  return j.get<double>();
}

nlohmann::json metrics_to_json(const ImageMetrics& m) {
  return {{"psnr", number_or_inf(m.psnr)}, {"ssim", m.ssim}, {"mse", m.mse},
          {"age", m.age},                  {"peps", m.peps}, {"pceps", m.pceps}};
}

ImageMetrics metrics_from_json(const nlohmann::json& j) {
  ImageMetrics m;
  m.psnr = parse_number_or_inf(j.at("psnr"));
  m.ssim = j.at("ssim").get<double>();
  m.mse = j.at("mse").get<double>();
  m.age = j.at("age").get<double>();
  m.peps = j.at("peps").get<double>();
  m.pceps = j.at("pceps").get<double>();
  return m;
}

}  // namespace

void MetricSettings::validate() const {
  if (!(error_threshold >= 0.0)) fail(ErrorCode::kConfigError, "metrics.error_threshold must be >= 0");
  if (connectivity != 4 && connectivity != 8) fail(ErrorCode::kConfigError, "metrics.connectivity must be 4 or 8");
}

double mse(const Image& a, const Image& b) {
  check_pair(a, b);
  const auto da = a.data();
  const auto db = b.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = da[i] - db[i];
    acc += d * d;
  }
  return acc / static_cast<double>(da.size());
}

double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

double ssim(const Image& a, const Image& b) {
  check_pair(a, b);
  if (std::min(a.height(), a.width()) < kSsimWindow) {
    fail(ErrorCode::kTooSmall, "SSIM needs at least 11x11 pixels");
  }
  const Image ga = to_gray(a);
  const Image gb = to_gray(b);
  const int h = a.height();
  const int w = a.width();
  const std::size_t n = ga.size();
  std::vector<double> x(ga.data().begin(), ga.data().end());
  std::vector<double> y(gb.data().begin(), gb.data().end());
  std::vector<double> xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto k = gaussian_kernel();
  const auto mu_x = filter_valid(x, h, w, k);
  const auto mu_y = filter_valid(y, h, w, k);
  const auto e_xx = filter_valid(xx, h, w, k);
  const auto e_yy = filter_valid(yy, h, w, k);
  const auto e_xy = filter_valid(xy, h, w, k);
  CompensatedSum acc;
  for (std::size_t i = 0; i < mu_x.size(); ++i) {
    const double mx = mu_x[i];
    const double my = mu_y[i];
    const double vx = e_xx[i] - mx * mx;
    const double vy = e_yy[i] - my * my;
    const double cxy = e_xy[i] - mx * my;
    acc.add(((2.0 * mx * my + kC1) * (2.0 * cxy + kC2)) /
            ((mx * mx + my * my + kC1) * (vx + vy + kC2)));
  }
  return acc.value() / static_cast<double>(mu_x.size());
}

double age(const Image& a, const Image& b) {
  check_pair(a, b);
  const auto ga = gray255(a);
  const auto gb = gray255(b);
  double acc = 0.0;
  for (std::size_t i = 0; i < ga.size(); ++i) acc += std::abs(ga[i] - gb[i]);
  return acc / static_cast<double>(ga.size());
}

double peps(const Image& a, const Image& b, double tau_e) {
  check_pair(a, b);
  const auto err = error_pixels(a, b, tau_e);
  const auto count = std::count(err.begin(), err.end(), true);
  return static_cast<double>(count) / static_cast<double>(err.size());
}

double pceps(const Image& a, const Image& b, double tau_e, int connectivity) {
  check_pair(a, b);
  if (connectivity != 4 && connectivity != 8) {
    fail(ErrorCode::kInvalidArgument, "connectivity must be 4 or 8");
  }
  const auto err = error_pixels(a, b, tau_e);
  const int h = a.height();
  const int w = a.width();
  std::size_t count = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!err[static_cast<std::size_t>(y) * w + x]) continue;
      bool clustered = true;
      for (int dy = -1; dy <= 1 && clustered; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dy == 0 && dx == 0) continue;
          if (connectivity == 4 && dy != 0 && dx != 0) continue;
          const int yy = y + dy;
          const int xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          if (!err[static_cast<std::size_t>(yy) * w + xx]) {
            clustered = false;
            break;
          }
        }
      }
      if (clustered) ++count;
    }
  }
  return static_cast<double>(count) / static_cast<double>(err.size());
}

ImageMetrics compute_metrics(const Image& pred, const Image& gt, const MetricSettings& s) {
  s.validate();
  ImageMetrics m;
  m.mse = mse(pred, gt);
  m.psnr = m.mse == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(1.0 / m.mse);
  m.ssim = ssim(pred, gt);
  m.age = age(pred, gt);
  m.peps = peps(pred, gt, s.error_threshold);
  m.pceps = pceps(pred, gt, s.error_threshold, s.connectivity);
  return m;
}

void finalize_report(MetricReport& report) {
  CompensatedSum psnr_sum, ssim_sum, mse_sum, age_sum, peps_sum, pceps_sum;
  std::size_t finite_psnr = 0;
  report.psnr_excluded = 0;
  for (const auto& [id, m] : report.per_image) {
    if (std::isfinite(m.psnr)) {
      psnr_sum.add(m.psnr);
      ++finite_psnr;
    } else {
      ++report.psnr_excluded;
    }
    ssim_sum.add(m.ssim);
    mse_sum.add(m.mse);
    age_sum.add(m.age);
    peps_sum.add(m.peps);
    pceps_sum.add(m.pceps);
  }
  report.count = report.per_image.size();
  if (report.count == 0) {
    report.aggregate = {};
    return;
  }
  const double n = static_cast<double>(report.count);
  report.aggregate.psnr = finite_psnr ? psnr_sum.value() / static_cast<double>(finite_psnr)
                                      : std::numeric_limits<double>::infinity();
  report.aggregate.ssim = ssim_sum.value() / n;
  report.aggregate.mse = mse_sum.value() / n;
  report.aggregate.age = age_sum.value() / n;
  report.aggregate.peps = peps_sum.value() / n;
  report.aggregate.pceps = pceps_sum.value() / n;
}

MetricReport evaluate_dir(const fs::path& pred_root, const fs::path& gt_root, const MetricSettings& s) {
  s.validate();
  MetricReport report;
  report.settings = s;
  std::map<std::string, fs::path> gts;
  for (const auto& p : list_images(gt_root)) gts.emplace(p.stem().string(), p);
  const auto preds = list_images(pred_root);
  if (preds.empty() || gts.empty()) {
    fail(ErrorCode::kEmptyDataset, "nothing to evaluate in " + pred_root.string() + " / " + gt_root.string());
  }
  for (const auto& p : preds) {
    const std::string id = p.stem().string();
    auto it = gts.find(id);
    if (it == gts.end()) {
      report.skipped.push_back(id + ": no ground truth");
      continue;
    }
    Image pred = load_image(p);
    Image gt = load_image(it->second);
    if (pred.channels() != gt.channels()) {
      pred = to_rgb(pred);
      gt = to_rgb(gt);
    }
    if (!pred.same_shape(gt)) {
      report.skipped.push_back(id + ": shape mismatch");
      continue;
    }
    report.per_image.emplace(id, compute_metrics(pred, gt, s));
  }
  if (report.per_image.empty()) fail(ErrorCode::kEmptyDataset, "no comparable image pairs");
  finalize_report(report);
  return report;
}

nlohmann::json report_to_json(const MetricReport& r) {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["settings"] = {{"error_threshold", r.settings.error_threshold},
                   {"connectivity", r.settings.connectivity},
                   {"mse_domain", "[0,1]"},
                   {"psnr_peak", 1.0},
                   {"age_domain", "gray levels 0-255 (luma 0.299/0.587/0.114)"},
                   {"ssim", "gray, gaussian 11x11 sigma 1.5, C1=0.01^2, C2=0.03^2"}};
  j["per_image"] = nlohmann::json::object();
  for (const auto& [id, m] : r.per_image) j["per_image"][id] = metrics_to_json(m);
  auto agg = metrics_to_json(r.aggregate);
  agg["count"] = r.count;
  agg["psnr_excluded"] = r.psnr_excluded;
  agg["psnr_all_infinite"] = r.count > 0 && r.psnr_excluded == r.count;
  j["aggregate"] = agg;
  j["skipped"] = r.skipped;
  return j;
}

MetricReport report_from_json(const nlohmann::json& j) {
  MetricReport r;
  try {
    if (j.at("schema_version").get<int>() != kReportSchemaVersion) {
      fail(ErrorCode::kInvalidArgument, "unsupported report schema version");
    }
    r.settings.error_threshold = j.at("settings").at("error_threshold").get<double>();
    r.settings.connectivity = j.at("settings").at("connectivity").get<int>();
    for (const auto& [id, m] : j.at("per_image").items()) r.per_image.emplace(id, metrics_from_json(m));
    const auto& agg = j.at("aggregate");
    r.aggregate = metrics_from_json(agg);
    r.count = agg.at("count").get<std::size_t>();
    r.psnr_excluded = agg.at("psnr_excluded").get<std::size_t>();
    r.skipped = j.value("skipped", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidArgument, std::string("malformed metric report: ") + e.what());
  }
  return r;
}

void write_report(const MetricReport& report, const fs::path& path) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(ErrorCode::kIoError, "cannot write " + path.string());
  os << report_to_json(report).dump(2) << '\n';
  if (!os) fail(ErrorCode::kIoError, "failed writing " + path.string());
}

MetricReport read_report(const fs::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::kFileNotFound, path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kDecodeError, std::string("cannot parse report: ") + e.what());
  }
  return report_from_json(j);
}

std::string format_report_table(const MetricReport& r) {
  std::ostringstream os;
  auto row = [&](const std::string& name, const ImageMetrics& m) {
    os << std::left << std::setw(20) << name << std::right << std::fixed;
    if (std::isfinite(m.psnr)) {
      os << std::setw(9) << std::setprecision(2) << m.psnr;
    } else {
      os << std::setw(9) << "inf";
    }
    os << std::setw(9) << std::setprecision(2) << m.ssim * 100.0 << std::setw(10) << std::setprecision(4)
       << m.mse << std::setw(8) << std::setprecision(2) << m.age << std::setw(9) << std::setprecision(4)
       << m.peps << std::setw(9) << std::setprecision(4) << m.pceps << '\n';
  };
  os << std::left << std::setw(20) << "image" << std::right << std::setw(9) << "PSNR" << std::setw(9)
     << "SSIM" << std::setw(10) << "MSE" << std::setw(8) << "AGE" << std::setw(9) << "pEPs" << std::setw(9)
     << "pCEPS" << '\n';
  for (const auto& [id, m] : r.per_image) row(id, m);
  row("mean (n=" + std::to_string(r.count) + ")", r.aggregate);
  if (r.psnr_excluded) os << r.psnr_excluded << " identical image(s) left out of the PSNR mean\n";
  return os.str();
}

double quad_iou(const Quad& a, const Quad& b) {
  auto to_cv = [](const Quad& q) {
    std::vector<cv::Point2f> pts;
    for (const auto& p : q) pts.emplace_back(static_cast<float>(p.x), static_cast<float>(p.y));
    std::vector<cv::Point2f> hull;
    cv::convexHull(pts, hull);
    return hull;
  };
  const auto pa = to_cv(a);
  const auto pb = to_cv(b);
  const double area_a = cv::contourArea(pa);
  const double area_b = cv::contourArea(pb);
  if (area_a <= 0.0 || area_b <= 0.0) return 0.0;
  std::vector<cv::Point2f> inter;
  const double ia = cv::intersectConvexConvex(pa, pb, inter, true);
  const double inter_area = ia > 0.0 ? ia : 0.0;
  const double uni = area_a + area_b - inter_area;
  return uni > 0.0 ? inter_area / uni : 0.0;
}

DetectionScores match_detections(const std::vector<Quad>& detections, const std::vector<Quad>& ground_truth,
                                 double iou_threshold) {
  DetectionScores s;
  s.detections = detections.size();
  s.ground_truths = ground_truth.size();
  struct Candidate {
    double iou;
    std::size_t d, g;
  };
  std::vector<Candidate> cands;
  for (std::size_t d = 0; d < detections.size(); ++d) {
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
      const double iou = quad_iou(detections[d], ground_truth[g]);
      if (iou >= iou_threshold) cands.push_back({iou, d, g});
    }
  }
  std::stable_sort(cands.begin(), cands.end(),
                   [](const Candidate& x, const Candidate& y) { return x.iou > y.iou; });
  std::vector<bool> used_d(detections.size()), used_g(ground_truth.size());
  for (const auto& c : cands) {
    if (used_d[c.d] || used_g[c.g]) continue;
    used_d[c.d] = used_g[c.g] = true;
    ++s.true_positives;
  }
  s.precision = s.detections ? static_cast<double>(s.true_positives) / s.detections : 0.0;
  s.recall = s.ground_truths ? static_cast<double>(s.true_positives) / s.ground_truths : 0.0;
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

std::map<std::string, std::vector<Quad>> load_box_annotations(const fs::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::kFileNotFound, path.string());
  std::map<std::string, std::vector<Quad>> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string id, tok;
    std::getline(ss, id, ',');
    std::vector<double> v;
    while (std::getline(ss, tok, ',')) v.push_back(std::stod(tok));
    if (v.size() != 8) fail(ErrorCode::kDecodeError, "annotation line needs 8 coordinates: " + line);
    Quad q;
    for (std::size_t i = 0; i < 4; ++i) q[i] = {v[2 * i], v[2 * i + 1]};
    out[id].push_back(q);
  }
  return out;
}

DetectionScores detection_eval(const fs::path& erased_dir, const fs::path& gt_boxes, TextDetector* det,
                               double iou_threshold) {
  if (!det) fail(ErrorCode::kNoDetector, "no text detector injected");
  const auto annotations = load_box_annotations(gt_boxes);
  DetectionScores total;
  for (const auto& p : list_images(erased_dir)) {
    const auto it = annotations.find(p.stem().string());
    static const std::vector<Quad> kNone;
    const auto& gt = it == annotations.end() ? kNone : it->second;
    const auto s = match_detections(det->detect(load_image(p)), gt, iou_threshold);
    total.true_positives += s.true_positives;
    total.detections += s.detections;
    total.ground_truths += s.ground_truths;
  }
  total.precision = total.detections ? static_cast<double>(total.true_positives) / total.detections : 0.0;
  total.recall = total.ground_truths ? static_cast<double>(total.true_positives) / total.ground_truths : 0.0;
  total.f1 = total.precision + total.recall > 0.0
                 ? 2.0 * total.precision * total.recall / (total.precision + total.recall)
                 : 0.0;
  return total;
}

}  // namespace pen
