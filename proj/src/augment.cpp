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

#include "pen/augment.hpp"

#include <algorithm>

#include "pen/error.hpp"

namespace pen {

namespace {

double lerp(double from, double to, double f) { return (1.0 - f) * from + f * to; }

}  // namespace

std::string_view variant_kind_name(VariantKind kind) {
  switch (kind) {
    case VariantKind::kBrightness: return "brightness";
    case VariantKind::kSaturation: return "saturation";
    case VariantKind::kContrast: return "contrast";
    case VariantKind::kSharpness: return "sharpness";
  }
  return "unknown";
}

Image blur3x3(const Image& image) {
  const int h = image.height();
  const int w = image.width();
  const int c = image.channels();
  Image out(h, w, c);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int k = 0; k < c; ++k) {
        double acc = 0.0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = std::clamp(y + dy, 0, h - 1);
            const int xx = std::clamp(x + dx, 0, w - 1);
            acc += (dy == 0 && dx == 0 ? 5.0 : 1.0) * image.at(yy, xx, k);
          }
        }
        out.at(y, x, k) = acc / 13.0;
      }
    }
  }
  return out;
}

Image apply_variant(const Image& image, const VariantSpec& spec) {
  if (!(spec.factor > 0.0)) {
    fail(ErrorCode::kInvalidFactor, "variant factor must be > 0, got " + std::to_string(spec.factor));
  }
  const double f = spec.factor;
  const int c = image.channels();
  Image out = image;
  auto data = out.mutable_data();
  switch (spec.kind) {
    case VariantKind::kBrightness:
      for (double& v : data) v *= f;
      break;
    case VariantKind::kSaturation: {
      if (c == 1) break;
      for (std::size_t p = 0; p < image.pixel_count(); ++p) {
        const double g = luma(data[3 * p], data[3 * p + 1], data[3 * p + 2]);
        for (int k = 0; k < 3; ++k) data[3 * p + k] = lerp(g, data[3 * p + k], f);
      }
      break;
    }
    case VariantKind::kContrast: {
      const Image gray = to_gray(image);
      double mean = 0.0;
      for (double v : gray.data()) mean += v;
      mean /= static_cast<double>(gray.size());
      for (double& v : data) v = lerp(mean, v, f);
      break;
    }
    case VariantKind::kSharpness: {
      const Image blurred = blur3x3(image);
      const auto b = blurred.data();
      for (std::size_t i = 0; i < data.size(); ++i) data[i] = lerp(b[i], data[i], f);
      break;
    }
  }
  out.clamp01();
  return out;
}

VariantSpec sample_variant_spec(Rng& rng, const AugmentConfig& cfg) {
  VariantSpec spec;
  spec.kind = static_cast<VariantKind>(rng.uniform_int(4));
  spec.factor = rng.uniform(cfg.factor_min, cfg.factor_max);
  return spec;
}

VariantPair sample_variant_pair(const Image& image, Rng& rng, const AugmentConfig& cfg,
                                std::string source_id) {
  VariantPair pair;
  pair.spec_a = sample_variant_spec(rng, cfg);
  pair.spec_b = sample_variant_spec(rng, cfg);
  pair.a = apply_variant(image, pair.spec_a);
  pair.b = apply_variant(image, pair.spec_b);
  pair.source_id = std::move(source_id);
  return pair;
}

GeometricParams sample_geometric(Rng& rng, const AugmentConfig& cfg) {
  GeometricParams p;
  p.flip = rng.bernoulli(cfg.flip_prob);
  p.angle_deg = cfg.rotation_deg > 0.0 ? rng.uniform(-cfg.rotation_deg, cfg.rotation_deg) : 0.0;
  return p;
}

SamplePair apply_geometric(const SamplePair& pair, const GeometricParams& params) {
  SamplePair out = pair;
  if (params.flip) {
    out.original = flip_horizontal(out.original);
    out.erased_gt = flip_horizontal(out.erased_gt);
    out.stroke_gt = StrokeMask(flip_horizontal(out.stroke_gt.image()));
  }
  if (params.angle_deg != 0.0) {
    out.original = rotate(out.original, params.angle_deg, Interp::kBilinear, Border::kReplicate);
    out.erased_gt = rotate(out.erased_gt, params.angle_deg, Interp::kBilinear, Border::kReplicate);
    out.stroke_gt = StrokeMask(
        rotate(out.stroke_gt.image(), params.angle_deg, Interp::kNearest, Border::kConstant, 0.0));
  }
  return out;
}

SamplePair train_augment(const SamplePair& pair, Rng& rng, const AugmentConfig& cfg) {
  return apply_geometric(pair, sample_geometric(rng, cfg));
}

}  // namespace pen
