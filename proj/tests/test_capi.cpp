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

// Exercises the shared library through its C header only.

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "pen/pen.h"

namespace fs = std::filesystem;

namespace {

struct Scratch {
  Scratch() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("pen_capi_" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& s) const { return (path / s).string(); }
  fs::path path;
};

std::vector<std::int64_t> steps_seen;

void on_loss(int64_t step, const char*, double value, void* user) {
  CHECK(std::isfinite(value));
  steps_seen.push_back(step);
  ++*static_cast<int*>(user);
}

}  // namespace

TEST_CASE("status names and version") {
  CHECK(std::string(pen_status_name(PEN_OK)) == "ok");
  CHECK(std::string(pen_version()) == "1.0.0");
}

TEST_CASE("config handle") {
  pen_config* cfg = nullptr;
  REQUIRE(pen_config_create(&cfg) == PEN_OK);
  char* v = nullptr;
  REQUIRE(pen_config_get(cfg, "net.iterations", &v) == PEN_OK);
  CHECK(std::string(v) == "3");
  pen_string_free(v);
  CHECK(pen_config_set(cfg, "net.iterations", "2") == PEN_OK);
  CHECK(pen_config_apply(cfg, "net.base_channels=8") == PEN_OK);
  CHECK(pen_config_set(cfg, "nope.key", "1") == PEN_ERR_CONFIG);
  CHECK(std::string(pen_last_error()).find("nope.key") != std::string::npos);
  CHECK(std::string(pen_last_error_kind()) == "ConfigError");
  char* text = nullptr;
  REQUIRE(pen_config_dump(cfg, &text) == PEN_OK);
  CHECK(std::string(text).find("net.iterations = 2") != std::string::npos);
  pen_string_free(text);
  CHECK(pen_config_create(nullptr) == PEN_ERR_INVALID_ARGUMENT);
  pen_config* missing = nullptr;
  CHECK(pen_config_load("/nonexistent/x.cfg", &missing) == PEN_ERR_CONFIG);
  CHECK(missing == nullptr);
  pen_config_destroy(cfg);
}

TEST_CASE("image handle and metrics") {
  Scratch s;
  std::vector<double> px(16 * 16 * 3, 0.25);
  pen_image* a = nullptr;
  pen_image* b = nullptr;
  REQUIRE(pen_image_create(16, 16, 3, px.data(), &a) == PEN_OK);
  for (double& v : px) v = 0.35;
  REQUIRE(pen_image_create(16, 16, 3, px.data(), &b) == PEN_OK);
  CHECK(pen_image_height(a) == 16);
  CHECK(pen_image_channels(a) == 3);
  CHECK(pen_image_data(a)[5] == 0.25);
  pen_metrics m{};
  REQUIRE(pen_compute_metrics(a, b, 20.0, 4, &m) == PEN_OK);
  CHECK(m.mse == doctest::Approx(0.01));
  CHECK(m.psnr == doctest::Approx(20.0));
  REQUIRE(pen_compute_metrics(a, a, 20.0, 4, &m) == PEN_OK);
  CHECK(std::isinf(m.psnr));
  CHECK(m.ssim == doctest::Approx(1.0));

  REQUIRE(pen_image_save(a, (s / "a.png").c_str()) == PEN_OK);
  pen_image* back = nullptr;
  REQUIRE(pen_image_load((s / "a.png").c_str(), &back) == PEN_OK);
  CHECK(std::fabs(pen_image_data(back)[0] - 0.25) <= 1.0 / 255.0);
  CHECK(pen_image_load((s / "none.png").c_str(), &back) == PEN_ERR_DATA);
  px[0] = 2.0;
  pen_image* bad = nullptr;
  CHECK(pen_image_create(16, 16, 3, px.data(), &bad) == PEN_ERR_INVALID_ARGUMENT);
  pen_image_destroy(back);
  pen_image_destroy(a);
  pen_image_destroy(b);
}

TEST_CASE("synth, train, erase, eval and bench through the C API") {
  Scratch s;
  pen_set_deterministic(1);
  pen_config* cfg = nullptr;
  REQUIRE(pen_config_create(&cfg) == PEN_OK);
  for (const char* kv : {"net.base_channels=8", "net.iterations=2", "disc.base_channels=8",
                         "train.input_size=32", "features.width_div=8", "features.pretrained=random",
                         "train.steps=2"}) {
    REQUIRE(pen_config_apply(cfg, kv) == PEN_OK);
  }
  size_t written = 0;
  REQUIRE(pen_synth(nullptr, 4, (s / "data").c_str(), 3, cfg, &written) == PEN_OK);
  CHECK(written == 4);

  int calls = 0;
  pen_train_options opt{};
  opt.stage = "1";
  const std::string data = (s.path / "data").string();
  opt.data_dir = data.c_str();
  const std::string ck0 = s / "s0.ckpt";
  opt.out_checkpoint = ck0.c_str();
  opt.deterministic = 1;
  opt.on_loss = on_loss;
  opt.user = &calls;
  CHECK(pen_train(cfg, &opt) == PEN_ERR_CHECKPOINT);

  opt.stage = "stroke-init";
  REQUIRE(pen_train(cfg, &opt) == PEN_OK);
  CHECK(calls == 2);
  CHECK(fs::exists(ck0 + ".losses.csv"));

  const std::string ck1 = s / "s1.ckpt";
  opt.stage = "1";
  opt.resume_path = ck0.c_str();
  opt.out_checkpoint = ck1.c_str();
  REQUIRE(pen_train(cfg, &opt) == PEN_OK);

  pen_model* model = nullptr;
  REQUIRE(pen_model_load(ck1.c_str(), &model) == PEN_OK);
  CHECK(std::string(pen_model_stage(model)) == "stage1_gan_init");
  CHECK(pen_model_iterations(model) == 2);
  CHECK(pen_model_parameter_count(model) > 0);
  CHECK(std::string(pen_model_config_hash(model)).size() == 16);

  size_t count = 0;
  REQUIRE(pen_erase_dir(model, (s / "data/images").c_str(), (s / "out").c_str(), 0, 1, &count) == PEN_OK);
  CHECK(count == 4);
  pen_eval_summary summary{};
  char* table = nullptr;
  REQUIRE(pen_eval_dir((s / "data/gt").c_str(), (s / "data/gt").c_str(), cfg, (s / "r.json").c_str(), &summary,
                       &table) == PEN_OK);
  CHECK(summary.count == 4);
  CHECK(summary.aggregate.mse == 0.0);
  CHECK(summary.aggregate.ssim == doctest::Approx(1.0));
  CHECK(fs::exists(s / "r.json"));
  pen_string_free(table);
  REQUIRE(pen_eval_dir((s / "out").c_str(), (s / "data/gt").c_str(), nullptr, nullptr, &summary, nullptr) == PEN_OK);
  CHECK(summary.skipped == 0);

  pen_image* in = nullptr;
  REQUIRE(pen_image_load((s / "data/images/000.png").c_str(), &in) == PEN_OK);
  pen_image* erased = nullptr;
  pen_image* stroke = nullptr;
  REQUIRE(pen_model_erase(model, in, 1, &erased, &stroke) == PEN_OK);
  CHECK(pen_image_height(erased) == pen_image_height(in));
  CHECK(pen_image_channels(stroke) == 1);

  const int iters[] = {1, 2};
  pen_bench_row rows[2];
  REQUIRE(pen_bench(model, (s / "data/images").c_str(), iters, 2, 1, 2, rows) == PEN_OK);
  CHECK(rows[1].iterations == 2);
  CHECK(rows[0].mean_ms > 0.0);

  REQUIRE(pen_model_save(model, (s / "infer.ckpt").c_str(), 1) == PEN_OK);
  pen_model* again = nullptr;
  REQUIRE(pen_model_load((s / "infer.ckpt").c_str(), &again) == PEN_OK);
  pen_model_destroy(again);
  CHECK(pen_model_load((s / "data/meta.jsonl").c_str(), &again) == PEN_ERR_CHECKPOINT);

  pen_image_destroy(in);
  pen_image_destroy(erased);
  pen_image_destroy(stroke);
  pen_model_destroy(model);
  pen_config_destroy(cfg);
}
