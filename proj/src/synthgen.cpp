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

#include "pen/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>
#include <opencv2/imgproc.hpp>

#include "pen/error.hpp"

namespace fs = std::filesystem;

namespace pen {

namespace {

constexpr std::array<int, kFontCount> kFaces = {
    cv::FONT_HERSHEY_SIMPLEX,       cv::FONT_HERSHEY_PLAIN,
    cv::FONT_HERSHEY_DUPLEX,        cv::FONT_HERSHEY_COMPLEX,
    cv::FONT_HERSHEY_TRIPLEX,       cv::FONT_HERSHEY_COMPLEX_SMALL,
    cv::FONT_HERSHEY_SCRIPT_SIMPLEX, cv::FONT_HERSHEY_SCRIPT_COMPLEX,
};

constexpr double kMinContrast = 0.3;

std::array<double, 3> mean_color(const Image& img, int row, int col, int h, int w) {
  std::array<double, 3> acc{0.0, 0.0, 0.0};
  const int c = img.channels();
  for (int y = row; y < row + h; ++y) {
    for (int x = col; x < col + w; ++x) {
      for (int k = 0; k < 3; ++k) acc[k] += img.at(y, x, c == 1 ? 0 : k);
    }
  }
  const double n = static_cast<double>(h) * w;
  for (double& v : acc) v /= n;
  return acc;
}

std::array<double, 3> sample_contrasting_color(const std::array<double, 3>& mean, Rng& rng) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    std::array<double, 3> c{rng.uniform(), rng.uniform(), rng.uniform()};
    double d = 0.0;
    for (int k = 0; k < 3; ++k) d = std::max(d, std::abs(c[k] - mean[k]));
    if (d >= kMinContrast) return c;
  }
  std::array<double, 3> c{};
  for (int k = 0; k < 3; ++k) c[k] = mean[k] > 0.5 ? 0.0 : 1.0;
  return c;
}

std::string random_word(Rng& rng) {
  static constexpr std::string_view kChars =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";
  const int len = 2 + static_cast<int>(rng.uniform_int(5));
  std::string s;
  for (int i = 0; i < len; ++i) s.push_back(kChars[rng.uniform_int(kChars.size())]);
  return s;
}

Image crop_or_resize(const Image& bg, int size, Rng& rng) {
  Image src = to_rgb(bg);
  if (src.height() >= size && src.width() >= size) {
    const int y0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(src.height() - size + 1)));
    const int x0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(src.width() - size + 1)));
    Image out(size, size, 3);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        for (int k = 0; k < 3; ++k) out.at(y, x, k) = src.at(y0 + y, x0 + x, k);
      }
    }
    return out;
  }
  return resize_bilinear(src, size, size);
}

nlohmann::json spec_to_json(const RenderSpec& s) {
  nlohmann::json j;
  j["text"] = s.text;
  j["font_id"] = s.font_id;
  j["size_px"] = s.size_px;
  if (s.color) j["color"] = *s.color;
  j["position"] = {s.row, s.col};
  j["rotation_deg"] = s.rotation_deg;
  j["antialias"] = s.antialias;
  return j;
}

}  // namespace

StrokeThreshold::StrokeThreshold(double tau) : tau_(tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    fail(ErrorCode::kInvalidArgument, "stroke threshold must lie in (0, 1)");
  }
}

Image render_glyph_box(const RenderSpec& spec) {
  if (spec.text.empty()) fail(ErrorCode::kEmptyText, "render spec has no text");
  if (spec.font_id < 0 || spec.font_id >= kFontCount) {
    fail(ErrorCode::kInvalidArgument, "font_id out of range: " + std::to_string(spec.font_id));
  }
  if (spec.size_px < 4) fail(ErrorCode::kInvalidArgument, "size_px must be >= 4");
  const int face = kFaces[static_cast<std::size_t>(spec.font_id)];
  const int thickness = std::max(1, spec.size_px / 8);
  int baseline = 0;
  const cv::Size unit = cv::getTextSize("H", face, 1.0, thickness, &baseline);
  const double scale = static_cast<double>(spec.size_px) / std::max(1, unit.height);
  const cv::Size ts = cv::getTextSize(spec.text, face, scale, thickness, &baseline);
  const int pad = thickness + 2;
  cv::Mat canvas = cv::Mat::zeros(ts.height + baseline + 2 * pad, ts.width + 2 * pad, CV_8UC1);
  cv::putText(canvas, spec.text, cv::Point(pad, pad + ts.height), face, scale, cv::Scalar(255),
              thickness, spec.antialias ? cv::LINE_AA : cv::LINE_8);

  if (spec.rotation_deg != 0.0) {
    const cv::Point2f centre((canvas.cols - 1) / 2.0F, (canvas.rows - 1) / 2.0F);
    cv::Mat m = cv::getRotationMatrix2D(centre, spec.rotation_deg, 1.0);
    const cv::Rect2f box =
        cv::RotatedRect(centre, cv::Size2f(canvas.size()), static_cast<float>(spec.rotation_deg))
            .boundingRect2f();
    m.at<double>(0, 2) += box.width / 2.0 - centre.x;
    m.at<double>(1, 2) += box.height / 2.0 - centre.y;
    cv::Mat rotated;
    cv::warpAffine(canvas, rotated, m,
                   cv::Size(static_cast<int>(std::ceil(box.width)), static_cast<int>(std::ceil(box.height))),
                   spec.antialias ? cv::INTER_LINEAR : cv::INTER_NEAREST, cv::BORDER_CONSTANT,
                   cv::Scalar(0));
    canvas = rotated;
  }

  std::vector<cv::Point> nz;
  cv::findNonZero(canvas, nz);
  if (nz.empty()) fail(ErrorCode::kEmptyText, "text renders to no visible pixels");
  const cv::Rect tight = cv::boundingRect(nz);
  const cv::Mat cropped = canvas(tight);
  Image alpha(cropped.rows, cropped.cols, 1);
  for (int y = 0; y < cropped.rows; ++y) {
    const std::uint8_t* row = cropped.ptr<std::uint8_t>(y);
    for (int x = 0; x < cropped.cols; ++x) alpha.at(y, x) = row[x] / 255.0;
  }
  return alpha;
}

GlyphAlpha render_glyph_alpha(const RenderSpec& spec, int height, int width) {
  GlyphAlpha g{render_glyph_box(spec), spec.row, spec.col};
  if (spec.row < 0 || spec.col < 0 || spec.row + g.alpha.height() > height ||
      spec.col + g.alpha.width() > width) {
    fail(ErrorCode::kGlyphOverflow,
         "glyph box " + std::to_string(g.alpha.height()) + "x" + std::to_string(g.alpha.width()) +
             " at (" + std::to_string(spec.row) + "," + std::to_string(spec.col) +
             ") does not fit a " + std::to_string(height) + "x" + std::to_string(width) + " image");
  }
  return g;
}

StrokeMask derive_stroke_target(const Image& original, const Image& gt, StrokeThreshold tau) {
  if (!original.same_shape(gt)) {
    fail(ErrorCode::kShapeMismatch, "original and ground truth differ in shape");
  }
  StrokeMask mask(original.height(), original.width());
  const int c = original.channels();
  const auto a = original.data();
  const auto b = gt.data();
  auto m = mask.image().mutable_data();
  for (std::size_t p = 0; p < original.pixel_count(); ++p) {
    double d = 0.0;
    for (int k = 0; k < c; ++k) d = std::max(d, std::abs(a[p * c + k] - b[p * c + k]));
    m[p] = d > tau.value() ? 1.0 : 0.0;
  }
  return mask;
}

SamplePair render_text_pair(const Image& background, std::span<const RenderSpec> specs, Rng& rng,
                            StrokeThreshold tau, std::vector<RenderSpec>* resolved) {
  if (specs.empty()) fail(ErrorCode::kEmptyText, "no render specs given");
  if (background.height() < 64 || background.width() < 64) {
    fail(ErrorCode::kInvalidSize, "background must be at least 64x64");
  }
  SamplePair pair;
  pair.erased_gt = background;
  pair.original = background;
  if (resolved) resolved->clear();
  const int c = background.channels();
  for (const RenderSpec& spec : specs) {
    const GlyphAlpha g = render_glyph_alpha(spec, background.height(), background.width());
    RenderSpec r = spec;
    if (!r.color) {
      r.color = sample_contrasting_color(
          mean_color(background, g.row, g.col, g.alpha.height(), g.alpha.width()), rng);
    }
    const auto& col = *r.color;
    const double gray = luma(col[0], col[1], col[2]);
    for (int y = 0; y < g.alpha.height(); ++y) {
      for (int x = 0; x < g.alpha.width(); ++x) {
        const double a = g.alpha.at(y, x);
        if (a == 0.0) continue;
        for (int k = 0; k < c; ++k) {
          double& v = pair.original.at(g.row + y, g.col + x, k);
          v = (1.0 - a) * v + a * (c == 1 ? gray : col[static_cast<std::size_t>(k)]);
        }
      }
    }
    if (resolved) resolved->push_back(std::move(r));
  }
  pair.original.clamp01();
  pair.stroke_gt = derive_stroke_target(pair.original, pair.erased_gt, tau);
  return pair;
}

Image procedural_background(int height, int width, Rng& rng) {
  Image img(height, width, 3);
  std::array<double, 3> c0{}, c1{};
  for (int k = 0; k < 3; ++k) {
    c0[k] = rng.uniform(0.1, 0.9);
    c1[k] = std::clamp(c0[k] + rng.uniform(-0.3, 0.3), 0.0, 1.0);
  }
  const double angle = rng.uniform(0.0, 6.283185307179586);
  const double ux = std::cos(angle);
  const double uy = std::sin(angle);
  const double norm = std::abs(ux) * width + std::abs(uy) * height;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double t = std::clamp(0.5 + (ux * (x - width / 2.0) + uy * (y - height / 2.0)) / norm, 0.0, 1.0);
      for (int k = 0; k < 3; ++k) img.at(y, x, k) = (1.0 - t) * c0[k] + t * c1[k];
    }
  }
  const int blobs = 2 + static_cast<int>(rng.uniform_int(3));
  for (int b = 0; b < blobs; ++b) {
    const int h = 4 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(std::max(1, height / 2))));
    const int w = 4 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(std::max(1, width / 2))));
    const int y0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(height)));
    const int x0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(width)));
    std::array<double, 3> shift{};
    for (double& s : shift) s = rng.uniform(-0.12, 0.12);
    for (int y = y0; y < std::min(height, y0 + h); ++y) {
      for (int x = x0; x < std::min(width, x0 + w); ++x) {
        for (int k = 0; k < 3; ++k) img.at(y, x, k) += shift[static_cast<std::size_t>(k)];
      }
    }
  }
  for (double& v : img.mutable_data()) v += 0.02 * rng.normal();
  img.clamp01();
  return img;
}

DatasetIndex generate_toy_dataset(std::span<const Image> backgrounds, int n, const fs::path& out_root,
                                  std::uint64_t seed, const SynthOptions& options) {
  if (backgrounds.empty()) fail(ErrorCode::kInvalidArgument, "at least one background is required");
  if (n < 1) fail(ErrorCode::kInvalidArgument, "sample count must be >= 1");
  if (options.size < 64) fail(ErrorCode::kInvalidSize, "synthetic samples must be at least 64x64");
  const StrokeThreshold tau(options.tau);
  std::error_code ec;
  for (const char* sub : {"images", "gt", "stroke"}) {
    fs::create_directories(out_root / sub, ec);
    if (ec) fail(ErrorCode::kIoError, "cannot create " + (out_root / sub).string());
  }
  std::ofstream meta(out_root / "meta.jsonl", std::ios::trunc);
  if (!meta) fail(ErrorCode::kIoError, "cannot write meta.jsonl");

  const int width = std::max(3, static_cast<int>(std::to_string(n - 1).size()));
  for (int i = 0; i < n; ++i) {
    Rng rng = Rng::derive(seed, {static_cast<std::uint64_t>(i)});
    const Image& src = backgrounds[rng.uniform_int(backgrounds.size())];
    const Image bg = crop_or_resize(src, options.size, rng);

    SamplePair pair;
    std::vector<RenderSpec> resolved;
    bool ok = false;
    for (int attempt = 0; attempt < 32 && !ok; ++attempt) {
      std::vector<RenderSpec> specs;
      const int count = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(options.max_texts)));
      for (int t = 0; t < count; ++t) {
        RenderSpec s;
        s.text = random_word(rng);
        s.font_id = static_cast<int>(rng.uniform_int(kFontCount));
        s.size_px = static_cast<int>(rng.uniform(options.size / 8.0, options.size / 4.0));
        s.rotation_deg = rng.uniform(-options.max_rotation_deg, options.max_rotation_deg);
        Image box = render_glyph_box(s);
        while ((box.width() > options.size || box.height() > options.size) && s.text.size() > 1) {
          s.text.pop_back();
          box = render_glyph_box(s);
        }
        if (box.width() > options.size || box.height() > options.size) continue;
        s.row = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(options.size - box.height() + 1)));
        s.col = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(options.size - box.width() + 1)));
        specs.push_back(std::move(s));
      }
      if (specs.empty()) continue;
      pair = render_text_pair(bg, specs, rng, tau, &resolved);
      ok = pair.stroke_gt.count_set() >= 10;
    }
    if (!ok) fail(ErrorCode::kInvalidArgument, "could not render a visible text sample");

    std::string id = std::to_string(i);
    id.insert(0, static_cast<std::size_t>(std::max(0, width - static_cast<int>(id.size()))), '0');
    pair.id = id;
    save_image(pair.original, out_root / "images" / (id + ".png"));
    save_image(pair.erased_gt, out_root / "gt" / (id + ".png"));
    save_mask(pair.stroke_gt, out_root / "stroke" / (id + ".png"));

    nlohmann::json rec;
    rec["id"] = id;
    rec["specs"] = nlohmann::json::array();
    for (const auto& r : resolved) rec["specs"].push_back(spec_to_json(r));
    meta << rec.dump() << '\n';
  }
  meta.close();
  if (!meta) fail(ErrorCode::kIoError, "failed writing meta.jsonl");
  return index_dataset(out_root);
}

}  // namespace pen
