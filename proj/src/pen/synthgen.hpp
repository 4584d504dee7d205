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

#ifndef PEN_SYNTHGEN_HPP_
#define PEN_SYNTHGEN_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pen/imagecore.hpp"
#include "pen/rng.hpp"

namespace pen {

inline constexpr double kDefaultStrokeTau = 25.0 / 255.0;

// Gray-level threshold strictly inside (0, 1).
class StrokeThreshold {
 public:
  explicit StrokeThreshold(double tau = kDefaultStrokeTau);
  double value() const noexcept { return tau_; }

 private:
  double tau_;
};

// Number of bundled faces (OpenCV Hershey vector fonts).
inline constexpr int kFontCount = 8;

struct RenderSpec {
  std::string text;
  int font_id = 0;
  // Height of a capital letter in pixels.
  int size_px = 16;
  // Sampled against the local background when absent.
  std::optional<std::array<double, 3>> color;
  // Top-left corner of the (rotated) glyph box.
  int row = 0;
  int col = 0;
  double rotation_deg = 0.0;
  bool antialias = true;
};

// Coverage map of one rendered spec, sized to its own rotated bounding box.
struct GlyphAlpha {
  Image alpha;  // single channel
  int row = 0;
  int col = 0;
};

// Rasterizes spec into its bounding box without placing it.
Image render_glyph_box(const RenderSpec& spec);
// Rasterizes and places the spec; throws GlyphOverflow when the box leaves a
// height x width image and EmptyText for an empty string.
GlyphAlpha render_glyph_alpha(const RenderSpec& spec, int height, int width);

// mask = 1 where max over channels |original - gt| > tau, else 0.
StrokeMask derive_stroke_target(const Image& original, const Image& gt,
                                StrokeThreshold tau = StrokeThreshold());

// Alpha-composites every spec onto a copy of background. erased_gt is the
// untouched background. Specs without a colour get one sampled from rng with
// contrast >= 0.3 against the mean background under the glyph box; the
// resolved specs are written to `resolved` when given.
SamplePair render_text_pair(const Image& background, std::span<const RenderSpec> specs, Rng& rng,
                            StrokeThreshold tau = StrokeThreshold(),
                            std::vector<RenderSpec>* resolved = nullptr);

// Smooth gradient with soft rectangles and mild noise; stands in for natural
// scene backgrounds when none are supplied.
Image procedural_background(int height, int width, Rng& rng);

struct SynthOptions {
  int size = 64;
  int max_texts = 2;
  double tau = kDefaultStrokeTau;
  double max_rotation_deg = 15.0;
};

// Writes n pairs as out_root/{images,gt,stroke}/<id>.png plus meta.jsonl. Each
// sample i draws from Rng::derive(seed, {i}), so output does not depend on
// generation order.
DatasetIndex generate_toy_dataset(std::span<const Image> backgrounds, int n,
                                  const std::filesystem::path& out_root, std::uint64_t seed,
                                  const SynthOptions& options = {});

}  // namespace pen

#endif  // PEN_SYNTHGEN_HPP_
