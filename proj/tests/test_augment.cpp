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

#include <array>
#include <set>

#include "pen/augment.hpp"
#include "pen/error.hpp"
#include "pen/rng.hpp"
#include "pen/synthgen.hpp"
#include "test_util.hpp"

using namespace pen;
using pen::testing::random_image;

namespace {

constexpr std::array<VariantKind, 4> kKinds{VariantKind::kBrightness, VariantKind::kSaturation,
                                            VariantKind::kContrast, VariantKind::kSharpness};

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

}  // namespace

TEST_CASE("factor one is the identity for every kind") {
  for (std::uint64_t s = 0; s < 4; ++s) {
    const Image img = random_image(9, 14, 3, s);
    for (VariantKind k : kKinds) CHECK(apply_variant(img, {k, 1.0}) == img);
  }
}

TEST_CASE("brightness doubles a constant image") {
  const Image out = apply_variant(Image(6, 6, 3, 0.25), {VariantKind::kBrightness, 2.0});
  for (double v : out.data()) CHECK(v == 0.5);
}

TEST_CASE("contrast matches the per-pixel formula") {
  for (double f : {0.5, 0.8, 1.3, 1.5, 3.0}) {
    const Image img = random_image(8, 10, 3, 11);
    double mean = 0.0;
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) mean += pen::testing::ref_luma(img, y, x);
    mean /= static_cast<double>(img.pixel_count());
    const Image out = apply_variant(img, {VariantKind::kContrast, f});
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        for (int c = 0; c < 3; ++c)
          CHECK(out.at(y, x, c) == doctest::Approx(clamp01(mean + f * (img.at(y, x, c) - mean))).epsilon(1e-12));
  }
}

TEST_CASE("saturation and sharpness follow their blend definitions") {
  const Image img = random_image(7, 7, 3, 2);
  const Image sat = apply_variant(img, {VariantKind::kSaturation, 0.0 + 1e-9});
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 7; ++x) {
      const double g = pen::testing::ref_luma(img, y, x);
      for (int c = 0; c < 3; ++c) CHECK(sat.at(y, x, c) == doctest::Approx(g).epsilon(1e-6));
    }
  // Interior pixel of the 3x3 smoothing kernel: centre 5, neighbours 1, /13.
  const Image blur = blur3x3(img);
  double acc = 0.0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) acc += (dy == 0 && dx == 0 ? 5.0 : 1.0) * img.at(3 + dy, 3 + dx, 1);
  CHECK(blur.at(3, 3, 1) == doctest::Approx(acc / 13.0).epsilon(1e-12));
  const Image sharp = apply_variant(img, {VariantKind::kSharpness, 1.5});
  CHECK(sharp.at(3, 3, 1) == doctest::Approx(clamp01(blur.at(3, 3, 1) + 1.5 * (img.at(3, 3, 1) - blur.at(3, 3, 1)))));
}

TEST_CASE("non-positive factors are rejected") {
  const Image img(4, 4, 3, 0.5);
  for (double f : {0.0, -1.0}) {
    try {
      apply_variant(img, {VariantKind::kContrast, f});
      FAIL("expected InvalidFactor");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kInvalidFactor);
    }
  }
}

TEST_CASE("variant outputs stay in range") {
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    const Image img = random_image(6, 6, 3, 100 + t);
    const VariantSpec spec{kKinds[t % 4], rng.uniform(0.1, 4.0)};
    const Image out = apply_variant(img, spec);
    for (double v : out.data()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("variant pairs are reproducible, keep geometry and cover all kinds") {
  const Image img = random_image(12, 20, 3, 9);
  Rng r1(77), r2(77);
  const VariantPair p1 = sample_variant_pair(img, r1, {}, "x");
  const VariantPair p2 = sample_variant_pair(img, r2, {}, "x");
  CHECK(p1.spec_a == p2.spec_a);
  CHECK(p1.spec_b == p2.spec_b);
  CHECK(p1.a == p2.a);
  CHECK(p1.a.same_shape(img));
  CHECK(p1.b.same_shape(img));
  CHECK(p1.source_id == "x");

  Rng rng(1);
  std::set<int> kinds;
  for (int i = 0; i < 1000; ++i) {
    const VariantSpec s = sample_variant_spec(rng);
    kinds.insert(static_cast<int>(s.kind));
    CHECK(s.factor >= 0.5);
    CHECK(s.factor <= 1.5);
  }
  CHECK(kinds.size() == 4);
}

TEST_CASE("geometric augmentation is shared by the three maps") {
  Rng rng(3);
  const Image bg = procedural_background(64, 64, rng);
  RenderSpec spec;
  spec.text = "TEXT";
  spec.size_px = 14;
  spec.row = 20;
  spec.col = 6;
  spec.antialias = false;
  const SamplePair pair = render_text_pair(bg, std::span<const RenderSpec>(&spec, 1), rng);

  const SamplePair flipped = apply_geometric(apply_geometric(pair, {true, 0.0}), {true, 0.0});
  CHECK(flipped.original == pair.original);
  CHECK(flipped.erased_gt == pair.erased_gt);
  CHECK(flipped.stroke_gt == pair.stroke_gt);
  const SamplePair same = apply_geometric(pair, {false, 0.0});
  CHECK(same.original == pair.original);
  CHECK(same.stroke_gt == pair.stroke_gt);

  for (int t = 0; t < 20; ++t) {
    Rng r = Rng::derive(42, {static_cast<std::uint64_t>(t)});
    const SamplePair aug = train_augment(pair, r);
    CHECK(aug.stroke_gt.is_hard());
    const StrokeMask redo = derive_stroke_target(aug.original, aug.erased_gt);
    std::size_t agree = 0;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) agree += redo.at(y, x) == aug.stroke_gt.at(y, x) ? 1 : 0;
    CHECK(static_cast<double>(agree) / (64.0 * 64.0) >= 0.95);
  }
}

TEST_CASE("augmentation stream is reproducible") {
  const SamplePair pair{random_image(16, 16, 3, 1), random_image(16, 16, 3, 2), StrokeMask(16, 16), "p"};
  Rng a(10), b(10);
  for (int i = 0; i < 5; ++i) {
    const SamplePair x = train_augment(pair, a);
    const SamplePair y = train_augment(pair, b);
    CHECK(x.original == y.original);
    CHECK(x.erased_gt == y.erased_gt);
  }
}
