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

#ifndef PEN_AUGMENT_HPP_
#define PEN_AUGMENT_HPP_

#include <string>
#include <string_view>

#include "pen/imagecore.hpp"
#include "pen/rng.hpp"

namespace pen {

enum class VariantKind { kBrightness = 0, kSaturation = 1, kContrast = 2, kSharpness = 3 };

std::string_view variant_kind_name(VariantKind kind);

struct VariantSpec {
  VariantKind kind = VariantKind::kBrightness;
  double factor = 1.0;

  bool operator==(const VariantSpec&) const = default;
};

struct VariantPair {
  Image a;
  Image b;
  std::string source_id;
  VariantSpec spec_a;
  VariantSpec spec_b;
};

struct AugmentConfig {
  double factor_min = 0.5;
  double factor_max = 1.5;
  double rotation_deg = 10.0;
  double flip_prob = 0.5;
};

// Photometric variant, clamped to [0, 1]. Every kind blends the input with a
// degenerate version of itself:
//   brightness  x * f
//   saturation  lerp(gray(x), x, f)
//   contrast    lerp(mean gray, x, f)
//   sharpness   lerp(blur3x3(x), x, f)
// A factor of exactly 1 returns the input unchanged.
Image apply_variant(const Image& image, const VariantSpec& spec);

// PIL-style smoothing filter (centre weight 5, neighbours 1, /13) with
// replicated borders.
Image blur3x3(const Image& image);

VariantSpec sample_variant_spec(Rng& rng, const AugmentConfig& cfg = {});

// Two independently sampled photometric variants of the same image. Geometry
// is never touched.
VariantPair sample_variant_pair(const Image& image, Rng& rng, const AugmentConfig& cfg = {},
                                std::string source_id = {});

struct GeometricParams {
  bool flip = false;
  double angle_deg = 0.0;
};

GeometricParams sample_geometric(Rng& rng, const AugmentConfig& cfg = {});
SamplePair apply_geometric(const SamplePair& pair, const GeometricParams& params);

// Random horizontal flip and small rotation, identical for the image, the
// erased target and the stroke mask. Images use bilinear sampling with edge
// replication, masks nearest-neighbour with zero fill.
SamplePair train_augment(const SamplePair& pair, Rng& rng, const AugmentConfig& cfg = {});

}  // namespace pen

#endif  // PEN_AUGMENT_HPP_
