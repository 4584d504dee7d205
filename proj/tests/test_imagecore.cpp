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

#include "pen/error.hpp"
#include "pen/imagecore.hpp"
#include "test_util.hpp"

using namespace pen;
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

void touch_pair(const TempDir& d, const std::string& name) {
  save_image(Image(8, 8, 3, 0.5), d / ("images/" + name));
  save_image(Image(8, 8, 3, 0.25), d / ("gt/" + name));
}

}  // namespace

TEST_CASE("image construction validates size and range") {
  CHECK(code_of([] { Image(0, 4, 3); }) == ErrorCode::kInvalidSize);
  CHECK(code_of([] { Image(4, 4, 2); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([] { Image(2, 2, 1, std::vector<double>{0.0, 0.5, 1.5, 0.2}); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([] { Image(2, 2, 1, std::vector<double>{0.0, NAN, 0.5, 0.2}); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("load scales bytes by 1/255") {
  TempDir d("load");
  save_image(Image(2, 2, 3, 1.0), d / "ones.png");
  save_image(Image(2, 2, 3, 0.0), d / "zeros.png");
  save_image(Image(2, 2, 3, 128.0 / 255.0), d / "mid.png");
  const Image ones = load_image(d / "ones.png");
  const Image zeros = load_image(d / "zeros.png");
  const Image mid = load_image(d / "mid.png");
  for (double v : ones.data()) CHECK(v == 1.0);
  for (double v : zeros.data()) CHECK(v == 0.0);
  for (double v : mid.data()) CHECK(v == doctest::Approx(0.50196).epsilon(1e-5));
  for (double v : mid.data()) CHECK(v == 128.0 / 255.0);
}

TEST_CASE("grayscale files stay single channel and colour files are RGB") {
  TempDir d("gray");
  Image g(4, 4, 1, 0.2);
  save_image(g, d / "g.png");
  CHECK(load_image(d / "g.png").channels() == 1);
  Image rgb(1, 1, 3);
  rgb.at(0, 0, 0) = 1.0;  // pure red must come back in channel 0
  save_image(rgb, d / "r.png");
  const Image back = load_image(d / "r.png");
  CHECK(back.at(0, 0, 0) == 1.0);
  CHECK(back.at(0, 0, 2) == 0.0);
}

TEST_CASE("load errors") {
  TempDir d("loaderr");
  CHECK(code_of([&] { load_image(d / "missing.png"); }) == ErrorCode::kFileNotFound);
  std::ofstream(d / "bad.png") << "not an image";
  CHECK(code_of([&] { load_image(d / "bad.png"); }) == ErrorCode::kDecodeError);
}

TEST_CASE("save/load round trip is within 1/255") {
  TempDir d("rt");
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Image img = pen::testing::random_image(13, 17, 3, seed);
    save_image(img, d / "x.png");
    const Image back = load_image(d / "x.png");
    REQUIRE(back.same_shape(img));
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::fabs(back.data()[i] - img.data()[i]) <= 1.0 / 255.0);
  }
  save_image(Image(5, 5, 3, 0.0), d / "z.png");
  CHECK(load_image(d / "z.png") == Image(5, 5, 3, 0.0));
  save_image(Image(5, 5, 3, 1.0), d / "o.png");
  CHECK(load_image(d / "o.png") == Image(5, 5, 3, 1.0));
}

TEST_CASE("index_dataset pairs by filename and sorts") {
  TempDir d("idx");
  touch_pair(d, "b.png");
  touch_pair(d, "a.png");
  save_image(Image(8, 8, 3, 0.5), d / "images/c.png");
  const DatasetIndex idx = index_dataset(d.path());
  REQUIRE(idx.entries.size() == 2);
  CHECK(idx.entries[0].id == "a");
  CHECK(idx.entries[1].id == "b");
  REQUIRE(idx.unmatched.size() == 1);
  CHECK(idx.unmatched[0].find("c") != std::string::npos);
  const DatasetIndex again = index_dataset(d.path());
  CHECK(again.entries.size() == idx.entries.size());
}

TEST_CASE("index_dataset errors and manifest override") {
  TempDir d("idx2");
  CHECK(code_of([&] { index_dataset(d.path()); }) == ErrorCode::kEmptyDataset);
  touch_pair(d, "q.png");
  touch_pair(d, "r.png");
  std::ofstream(d / "manifest.csv") << "only," << (d / "images/r.png").string() << "," << (d / "gt/r.png").string()
                                    << "\n";
  const DatasetIndex idx = index_dataset(d.path());
  REQUIRE(idx.entries.size() == 1);
  CHECK(idx.entries[0].id == "only");
}

TEST_CASE("resize identity, constants and bilinear oracle") {
  const Image img = pen::testing::random_image(9, 11, 3, 7);
  CHECK(resize_bilinear(img, 9, 11) == img);

  for (double v : {0.0, 0.3, 0.77, 1.0}) {
    const Image c(8, 8, 3, v);
    for (auto [h, w] : {std::pair{8, 16}, std::pair{5, 13}, std::pair{31, 9}}) {
      const Image r = resize_bilinear(c, h, w);
      for (double x : r.data()) CHECK(x == v);
    }
  }

  Image checker(2, 2, 1);
  checker.at(0, 1) = 1.0;
  checker.at(1, 0) = 1.0;
  const Image out = resize_bilinear(checker, 4, 4);
  const Image ref = pen::testing::ref_resize(checker, 4, 4);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.data()[i] == doctest::Approx(ref.data()[i]).epsilon(1e-15));
  // Corner pixels clamp onto the source corners; inner ones blend 3:1.
  CHECK(out.at(0, 0) == doctest::Approx(0.0));
  CHECK(out.at(1, 1) == doctest::Approx(0.375));

  for (std::uint64_t s = 0; s < 4; ++s) {
    const Image r = pen::testing::random_image(7, 10, 3, s);
    const Image a = resize_bilinear(r, 12, 5);
    const Image b = pen::testing::ref_resize(r, 12, 5);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-12));
  }
  CHECK(code_of([&] { resize_bilinear(img, 0, 5); }) == ErrorCode::kInvalidSize);
}

TEST_CASE("gray conversion uses luma weights") {
  Image px(1, 1, 3);
  px.at(0, 0, 0) = 1.0;
  CHECK(to_gray(px).at(0, 0) == doctest::Approx(0.299));
  px.at(0, 0, 0) = 0.0;
  px.at(0, 0, 1) = 1.0;
  CHECK(to_gray(px).at(0, 0) == doctest::Approx(0.587));
  const Image g(3, 3, 1, 0.4);
  const Image rgb = to_rgb(g);
  CHECK(rgb.channels() == 3);
  CHECK(rgb.at(2, 2, 1) == 0.4);
}

TEST_CASE("flip is an involution and zero rotation is the identity") {
  const Image img = pen::testing::random_image(10, 12, 3, 3);
  CHECK(flip_horizontal(flip_horizontal(img)) == img);
  CHECK(flip_horizontal(img).at(0, 0, 1) == img.at(0, 11, 1));
  CHECK(rotate(img, 0.0, Interp::kBilinear, Border::kReplicate) == img);
}

TEST_CASE("stroke mask hardness") {
  StrokeMask m(4, 4);
  CHECK(m.is_hard());
  m.at(1, 1) = 1.0;
  CHECK(m.is_hard());
  CHECK(m.count_set() == 1);
  m.at(2, 2) = 0.4;
  CHECK_FALSE(m.is_hard());
}
