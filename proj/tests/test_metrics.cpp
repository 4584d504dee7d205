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

#include "doctest_torch.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "pen/error.hpp"
#include "pen/metrics.hpp"
#include "test_util.hpp"

using namespace pen;
using pen::testing::random_image;
using pen::testing::TempDir;

namespace {

Image offset_gray(const Image& base, double levels) {
  Image out = base;
  for (double& v : out.mutable_data()) v += levels / 255.0;
  return out;
}

Quad box(double x0, double y0, double x1, double y1) {
  return Quad{Point2{x0, y0}, Point2{x1, y0}, Point2{x1, y1}, Point2{x0, y1}};
}

class FixedDetector : public TextDetector {
 public:
  explicit FixedDetector(std::vector<Quad> boxes) : boxes_(std::move(boxes)) {}
  std::vector<Quad> detect(const Image&) override { return boxes_; }

 private:
  std::vector<Quad> boxes_;
};

}  // namespace

TEST_CASE("mse and psnr") {
  const Image a = random_image(12, 12, 3, 1);
  CHECK(mse(a, a) == 0.0);
  CHECK(std::isinf(psnr(a, a)));
  CHECK(mse(Image(4, 4, 3, 0.0), Image(4, 4, 3, 1.0)) == 1.0);
  CHECK(psnr(Image(4, 4, 3, 0.0), Image(4, 4, 3, 1.0)) == 0.0);
  CHECK(psnr(Image(4, 4, 3, 0.2), Image(4, 4, 3, 0.3)) == doctest::Approx(20.0).epsilon(1e-9));
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Image x = random_image(9, 13, 3, 10 + s);
    const Image y = random_image(9, 13, 3, 50 + s);
    CHECK(std::fabs(mse(x, y) - pen::testing::ref_mse(x, y)) <= 1e-12);
    CHECK(mse(x, y) == mse(y, x));
    CHECK(psnr(x, y) == doctest::Approx(10.0 * std::log10(1.0 / mse(x, y))).epsilon(1e-14));
  }
}

TEST_CASE("ssim") {
  const Image a = random_image(24, 20, 3, 2);
  const Image b = random_image(24, 20, 3, 3);
  CHECK(std::fabs(ssim(a, a) - 1.0) <= 1e-9);
  CHECK(std::fabs(ssim(a, b) - ssim(b, a)) <= 1e-12);
  const double c1 = 1e-4;
  const double closed = (2 * 0.5 * 0.6 + c1) / (0.25 + 0.36 + c1);
  CHECK(std::fabs(ssim(Image(16, 16, 3, 0.5), Image(16, 16, 3, 0.6)) - closed) <= 1e-9);
  for (std::uint64_t s = 0; s < 4; ++s) {
    const Image x = random_image(15, 18, 3, 70 + s);
    const Image y = random_image(15, 18, 3, 90 + s);
    CHECK(std::fabs(ssim(x, y) - pen::testing::ref_ssim(x, y)) <= 1e-9);
  }
  try {
    ssim(Image(10, 30, 3), Image(10, 30, 3));
    FAIL("expected TooSmall");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kTooSmall);
  }
}

TEST_CASE("age, peps and pceps") {
  const Image base(11, 11, 3, 0.3);
  CHECK(age(base, base) == 0.0);
  CHECK(std::fabs(age(base, offset_gray(base, 10.0)) - 10.0) <= 1e-9);
  CHECK(peps(base, base) == 0.0);
  CHECK(peps(base, offset_gray(base, 30.0)) == 1.0);
  CHECK(peps(base, offset_gray(base, 10.0)) == 0.0);
  CHECK(pceps(base, base) == 0.0);

  Image one = base;
  for (int c = 0; c < 3; ++c) one.at(5, 5, c) = 0.9;
  CHECK(peps(base, one) == 1.0 / 121.0);
  CHECK(pceps(base, one) == 0.0);

  Image block = base;
  for (int y = 3; y < 8; ++y)
    for (int x = 3; x < 8; ++x)
      for (int c = 0; c < 3; ++c) block.at(y, x, c) = 0.9;
  CHECK(peps(base, block) == 25.0 / 121.0);
  CHECK(pceps(base, block) == 9.0 / 121.0);

  for (std::uint64_t s = 0; s < 10; ++s) {
    const Image x = random_image(14, 17, 3, 200 + s);
    const Image y = random_image(14, 17, 3, 300 + s, 0.2, 0.6);
    CHECK(std::fabs(age(x, y) - pen::testing::ref_age(x, y)) <= 1e-9);
    CHECK(age(x, y) == doctest::Approx(age(y, x)).epsilon(1e-14));
    for (double tau : {5.0, 20.0, 60.0}) {
      const double n = static_cast<double>(x.pixel_count());
      CHECK(peps(x, y, tau) == static_cast<double>(pen::testing::ref_peps_count(x, y, tau)) / n);
      CHECK(pceps(x, y, tau) == static_cast<double>(pen::testing::ref_pceps_count(x, y, tau)) / n);
      CHECK(pceps(x, y, tau) <= peps(x, y, tau));
      CHECK(peps(x, y, tau) == peps(y, x, tau));
    }
    CHECK(peps(x, y, 10.0) >= peps(x, y, 30.0));
  }
}

TEST_CASE("shape mismatch is reported by every metric") {
  const Image a(12, 12, 3), b(12, 13, 3);
  for (const auto& fn : std::vector<std::function<void()>>{
           [&] { mse(a, b); }, [&] { psnr(a, b); }, [&] { ssim(a, b); }, [&] { age(a, b); },
           [&] { peps(a, b); }, [&] { pceps(a, b); }}) {
    try {
      fn();
      FAIL("expected ShapeMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kShapeMismatch);
    }
  }
}

TEST_CASE("evaluate_dir on identical directories") {
  TempDir d("evalsame");
  for (int i = 0; i < 3; ++i) save_image(random_image(16, 16, 3, i), d / ("gt/" + std::to_string(i) + ".png"));
  const MetricReport r = evaluate_dir(d / "gt", d / "gt");
  CHECK(r.count == 3);
  CHECK(r.psnr_excluded == 3);
  CHECK(std::fabs(r.aggregate.ssim - 1.0) <= 1e-9);
  CHECK(r.aggregate.mse == 0.0);
  CHECK(r.aggregate.age == 0.0);
  CHECK(r.aggregate.peps == 0.0);
  CHECK(r.aggregate.pceps == 0.0);
  CHECK(std::isinf(r.aggregate.psnr));
  const auto j = report_to_json(r);
  CHECK(j["aggregate"]["psnr"] == "inf");
}

TEST_CASE("aggregate is the per-image mean and the report round trips") {
  TempDir d("evalmean");
  for (int i = 0; i < 2; ++i) {
    const Image gt = random_image(16, 16, 3, 10 + i);
    save_image(gt, d / ("gt/" + std::to_string(i) + ".png"));
    save_image(random_image(16, 16, 3, 20 + i), d / ("pred/" + std::to_string(i) + ".png"));
  }
  const MetricReport r = evaluate_dir(d / "pred", d / "gt");
  REQUIRE(r.count == 2);
  const auto& a = r.per_image.at("0");
  const auto& b = r.per_image.at("1");
  CHECK(r.aggregate.psnr == doctest::Approx((a.psnr + b.psnr) / 2).epsilon(1e-14));
  CHECK(r.aggregate.ssim == doctest::Approx((a.ssim + b.ssim) / 2).epsilon(1e-14));
  CHECK(r.aggregate.mse == doctest::Approx((a.mse + b.mse) / 2).epsilon(1e-14));
  CHECK(r.aggregate.age == doctest::Approx((a.age + b.age) / 2).epsilon(1e-14));
  CHECK(r.aggregate.peps == doctest::Approx((a.peps + b.peps) / 2).epsilon(1e-14));
  CHECK(r.aggregate.pceps == doctest::Approx((a.pceps + b.pceps) / 2).epsilon(1e-14));

  write_report(r, d / "report.json");
  CHECK(read_report(d / "report.json") == r);
  CHECK(format_report_table(r).find("SSIM") != std::string::npos);
}

TEST_CASE("evaluate_dir records unusable pairs") {
  TempDir d("evalskip");
  save_image(random_image(16, 16, 3, 1), d / "gt/a.png");
  save_image(random_image(16, 16, 3, 2), d / "pred/a.png");
  save_image(random_image(16, 16, 3, 3), d / "gt/b.png");
  save_image(random_image(16, 20, 3, 4), d / "pred/b.png");
  save_image(random_image(16, 16, 3, 5), d / "pred/c.png");
  const MetricReport r = evaluate_dir(d / "pred", d / "gt");
  CHECK(r.count == 1);
  CHECK(r.skipped.size() == 2);

  TempDir e("evalempty");
  save_image(random_image(16, 16, 3, 3), e / "gt/x.png");
  save_image(random_image(16, 20, 3, 4), e / "pred/x.png");
  try {
    evaluate_dir(e / "pred", e / "gt");
    FAIL("expected EmptyDataset");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::kEmptyDataset);
  }
}

TEST_CASE("detection matching arithmetic") {
  const std::vector<Quad> gt{box(0, 0, 10, 10), box(20, 0, 30, 10), box(0, 20, 10, 30), box(20, 20, 30, 30)};
  const DetectionScores none = match_detections({}, gt);
  CHECK(none.precision == 0.0);
  CHECK(none.recall == 0.0);
  CHECK(none.f1 == 0.0);
  const DetectionScores all = match_detections(gt, gt);
  CHECK(all.precision == 1.0);
  CHECK(all.recall == 1.0);
  CHECK(all.f1 == 1.0);
  const DetectionScores half = match_detections({gt[0], gt[2]}, gt);
  CHECK(half.precision == 1.0);
  CHECK(half.recall == 0.5);
  CHECK(half.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-14));

  CHECK(quad_iou(box(0, 0, 10, 10), box(0, 0, 10, 10)) == doctest::Approx(1.0));
  CHECK(quad_iou(box(0, 0, 10, 10), box(5, 0, 15, 10)) == doctest::Approx(50.0 / 150.0));
  CHECK(quad_iou(box(0, 0, 10, 10), box(50, 50, 60, 60)) == 0.0);
  // One detection cannot match two ground-truth boxes.
  CHECK(match_detections({gt[0]}, {gt[0], gt[0]}).true_positives == 1);
}

TEST_CASE("detection_eval pools over a directory") {
  TempDir d("det");
  save_image(Image(16, 16, 3, 0.5), d / "erased/im1.png");
  save_image(Image(16, 16, 3, 0.5), d / "erased/im2.png");
  std::ofstream(d / "boxes.txt") << "# stem,x1,y1,...\n"
                                 << "im1,0,0,10,0,10,10,0,10\n"
                                 << "im2,0,0,10,0,10,10,0,10\n"
                                 << "im2,20,20,30,20,30,30,20,30\n";
  FixedDetector det({box(0, 0, 10, 10)});
  const DetectionScores s = detection_eval(d / "erased", d / "boxes.txt", &det);
  CHECK(s.ground_truths == 3);
  CHECK(s.true_positives == 2);
  CHECK(s.precision == 1.0);
  CHECK(s.recall == doctest::Approx(2.0 / 3.0));
  try {
    detection_eval(d / "erased", d / "boxes.txt", nullptr);
    FAIL("expected NoDetector");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNoDetector);
  }
}
