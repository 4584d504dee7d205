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

#include <fstream>

#include <json.hpp>

#include "pen/error.hpp"
#include "pen/rng.hpp"
#include "pen/synthgen.hpp"
#include "test_util.hpp"

using namespace pen;
using pen::testing::random_image;
using pen::testing::TempDir;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST_CASE("threshold must lie strictly inside (0, 1)") {
  CHECK(StrokeThreshold().value() == doctest::Approx(25.0 / 255.0));
  CHECK(code_of([] { StrokeThreshold(0.0); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([] { StrokeThreshold(1.0); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("stroke target basics") {
  const Image a = random_image(10, 10, 3, 1);
  for (double tau : {0.01, 0.1, 0.5, 0.99}) CHECK(derive_stroke_target(a, a, StrokeThreshold(tau)).count_set() == 0);

  Image b(5, 5, 3, 0.0);
  Image c = b;
  c.at(2, 3, 1) = 1.0;
  const StrokeMask m = derive_stroke_target(c, b, StrokeThreshold(0.1));
  CHECK(m.count_set() == 1);
  CHECK(m.at(2, 3) == 1.0);
  CHECK(code_of([&] { derive_stroke_target(a, b); }) == ErrorCode::kShapeMismatch);
}

TEST_CASE("stroke target matches the loop oracle and is monotone in tau") {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const Image a = random_image(16, 16, 3, 2 * s);
    const Image b = random_image(16, 16, 3, 2 * s + 1);
    CHECK(derive_stroke_target(a, b) == pen::testing::ref_stroke(a, b, 25.0 / 255.0));
    const StrokeMask lo = derive_stroke_target(a, b, StrokeThreshold(0.2));
    const StrokeMask hi = derive_stroke_target(a, b, StrokeThreshold(0.6));
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) CHECK(hi.at(y, x) <= lo.at(y, x));
  }
}

TEST_CASE("render errors") {
  Rng rng(0);
  const Image bg(64, 64, 3, 0.5);
  CHECK(code_of([&] { render_text_pair(bg, {}, rng); }) == ErrorCode::kEmptyText);
  RenderSpec empty;
  CHECK(code_of([&] { render_text_pair(bg, std::span<const RenderSpec>(&empty, 1), rng); }) ==
        ErrorCode::kEmptyText);
  RenderSpec big;
  big.text = "OVERFLOWING";
  big.size_px = 30;
  CHECK(code_of([&] { render_text_pair(bg, std::span<const RenderSpec>(&big, 1), rng); }) ==
        ErrorCode::kGlyphOverflow);
  RenderSpec off;
  off.text = "A";
  off.row = 60;
  CHECK(code_of([&] { render_text_pair(bg, std::span<const RenderSpec>(&off, 1), rng); }) ==
        ErrorCode::kGlyphOverflow);
}

TEST_CASE("hard glyph support equals the stroke target") {
  Rng rng(5);
  const Image bg(64, 64, 3, 0.1);
  const Image before = bg;
  RenderSpec spec;
  spec.text = "Hi";
  spec.size_px = 16;
  spec.row = 10;
  spec.col = 12;
  spec.antialias = false;
  spec.color = std::array<double, 3>{0.9, 0.9, 0.9};
  const SamplePair pair = render_text_pair(bg, std::span<const RenderSpec>(&spec, 1), rng);
  CHECK(bg == before);
  CHECK(pair.erased_gt == bg);
  const GlyphAlpha g = render_glyph_alpha(spec, 64, 64);
  StrokeMask support(64, 64);
  for (int y = 0; y < g.alpha.height(); ++y)
    for (int x = 0; x < g.alpha.width(); ++x) support.at(g.row + y, g.col + x) = g.alpha.at(y, x) > 0.0 ? 1.0 : 0.0;
  CHECK(pair.stroke_gt == support);
  CHECK(support.count_set() > 10);
}

TEST_CASE("sampled colours contrast with the background") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng rng(s);
    const Image bg = procedural_background(64, 64, rng);
    RenderSpec spec;
    spec.text = "abc";
    spec.size_px = 12;
    spec.row = 20;
    spec.col = 10;
    std::vector<RenderSpec> resolved;
    const SamplePair pair = render_text_pair(bg, std::span<const RenderSpec>(&spec, 1), rng, StrokeThreshold(), &resolved);
    REQUIRE(resolved.size() == 1);
    REQUIRE(resolved[0].color.has_value());
    CHECK(pair.stroke_gt.count_set() >= 10);
  }
}

TEST_CASE("toy dataset is deterministic and well formed") {
  Rng rng(1);
  std::vector<Image> bgs{procedural_background(96, 96, rng), procedural_background(80, 120, rng)};
  TempDir a("synA"), b("synB");
  const DatasetIndex ia = generate_toy_dataset(bgs, 4, a.path(), 11);
  generate_toy_dataset(bgs, 4, b.path(), 11);
  CHECK(ia.entries.size() == 4);
  CHECK(pen::testing::tree_hash(a.path()) == pen::testing::tree_hash(b.path()));

  std::ifstream meta(a / "meta.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(meta, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("id"));
    ++lines;
  }
  CHECK(lines == 4);
  for (const auto& e : ia.entries) {
    const Image orig = load_image(e.original_path);
    const Image gt = load_image(e.gt_path);
    CHECK(orig.same_shape(gt));
    CHECK(orig.height() == 64);
    const StrokeMask stroke(load_image(a / ("stroke/" + e.id + ".png")));
    CHECK(stroke.is_hard());
    CHECK(stroke.count_set() >= 10);
  }

  TempDir c("synC");
  generate_toy_dataset(bgs, 4, c.path(), 12);
  CHECK(pen::testing::tree_hash(a.path()) != pen::testing::tree_hash(c.path()));
}
