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

// Command-line front end. Everything goes through the C API in pen/pen.h.

#include <cmath>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pen/pen.h"

namespace {

constexpr int kExitFailure = 1;

int exit_code(pen_status s) {
  switch (s) {
    case PEN_OK:
      return 0;
    case PEN_ERR_CONFIG:
      return 2;
    case PEN_ERR_DATA:
      return 3;
    case PEN_ERR_CHECKPOINT:
      return 4;
    default:
      return kExitFailure;
  }
}

int report(pen_status s, const char* what) {
  if (s != PEN_OK) {
    std::fprintf(stderr, "pen %s: %s (%s): %s\n", what, pen_status_name(s), pen_last_error_kind(),
                 pen_last_error());
  }
  return exit_code(s);
}

struct ConfigDeleter {
  void operator()(pen_config* c) const { pen_config_destroy(c); }
};
struct ModelDeleter {
  void operator()(pen_model* m) const { pen_model_destroy(m); }
};
using ConfigPtr = std::unique_ptr<pen_config, ConfigDeleter>;
using ModelPtr = std::unique_ptr<pen_model, ModelDeleter>;

struct CommonConfig {
  std::string file;
  std::vector<std::string> overrides;
};

void add_config_options(CLI::App* cmd, CommonConfig& c) {
  cmd->add_option("--config", c.file, "flat key = value configuration file");
  cmd->add_option("--set", c.overrides, "override a configuration key (key=value), repeatable");
}

pen_status build_config(const CommonConfig& c, ConfigPtr& out) {
  pen_config* raw = nullptr;
  pen_status s = c.file.empty() ? pen_config_create(&raw) : pen_config_load(c.file.c_str(), &raw);
  if (s != PEN_OK) return s;
  out.reset(raw);
  for (const auto& o : c.overrides) {
    s = pen_config_apply(out.get(), o.c_str());
    if (s != PEN_OK) return s;
  }
  return PEN_OK;
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

void print_loss(int64_t step, const char* name, double value, void* user) {
  const int every = *static_cast<int*>(user);
  if (every > 0 && step % every == 0) std::printf("step %lld %s %.6g\n", static_cast<long long>(step), name, value);
}

std::string format_psnr(double v) {
  if (std::isinf(v)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Progressive text erasing: synthesis, training, inference and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(pen_version()));

  // synth
  auto* synth = app.add_subcommand("synth", "generate a paired synthetic text dataset");
  std::string synth_bg, synth_out;
  int synth_n = 16;
  std::uint64_t synth_seed = 0;
  CommonConfig synth_cfg;
  synth->add_option("--backgrounds", synth_bg, "directory of background images (default: procedural)");
  synth->add_option("--n", synth_n, "number of pairs")->check(CLI::PositiveNumber);
  synth->add_option("--out", synth_out, "output root")->required();
  synth->add_option("--seed", synth_seed, "generation seed");
  add_config_options(synth, synth_cfg);

  // train
  auto* train = app.add_subcommand("train", "run one training stage");
  std::string stage, data_dir, unlabeled_dir, resume, out_ckpt, loss_csv;
  std::optional<std::int64_t> seed;
  bool deterministic = false, force = false;
  int log_every = 10;
  CommonConfig train_cfg;
  train->add_option("--stage", stage, "stroke-init, 1, 2 or 3")
      ->required()
      ->check(CLI::IsMember({"stroke-init", "1", "2", "3"}));
  train->add_option("--data", data_dir, "paired dataset root");
  train->add_option("--unlabeled", unlabeled_dir, "unlabeled images for stage 2");
  train->add_option("--resume", resume, "checkpoint to continue from");
  train->add_option("--out", out_ckpt, "checkpoint to write")->required();
  train->add_option("--log", loss_csv, "loss history CSV (default: <out>.losses.csv)");
  train->add_option("--seed", seed, "training seed (overrides train.seed)");
  train->add_flag("--deterministic", deterministic, "single thread, deterministic kernels");
  train->add_flag("--force", force, "skip stage-order checks");
  train->add_option("--print-every", log_every, "print losses every N steps (0: quiet)");
  add_config_options(train, train_cfg);

  // erase
  auto* erase = app.add_subcommand("erase", "erase text from every image of a directory");
  std::string erase_ckpt, erase_in, erase_out;
  int erase_iters = 0;
  bool erase_inter = false, erase_det = false;
  erase->add_option("--checkpoint", erase_ckpt, "trained checkpoint")->required();
  erase->add_option("--in", erase_in, "input directory")->required();
  erase->add_option("--out", erase_out, "output directory")->required();
  erase->add_option("--iterations", erase_iters, "erasing passes (default: from checkpoint)");
  erase->add_flag("--intermediates", erase_inter, "also write every pass to iter<k>/");
  erase->add_flag("--deterministic", erase_det, "single thread, deterministic kernels");

  // eval
  auto* eval = app.add_subcommand("eval", "score erased images against ground truth");
  std::string eval_pred, eval_gt, eval_out;
  CommonConfig eval_cfg;
  eval->add_option("--pred", eval_pred, "erased images")->required();
  eval->add_option("--gt", eval_gt, "ground-truth images")->required();
  eval->add_option("--out", eval_out, "JSON report path");
  add_config_options(eval, eval_cfg);

  // bench
  auto* bench = app.add_subcommand("bench", "time erasing for several iteration counts");
  std::string bench_ckpt, bench_images;
  std::vector<int> bench_iters{1, 2, 3, 4, 6};
  int bench_repeats = 3, bench_max = 10;
  bench->add_option("--checkpoint", bench_ckpt, "trained checkpoint")->required();
  bench->add_option("--images", bench_images, "image directory")->required();
  bench->add_option("--iters", bench_iters, "iteration counts")->delimiter(',');
  bench->add_option("--repeats", bench_repeats, "timed passes per image")->check(CLI::PositiveNumber);
  bench->add_option("--max-images", bench_max, "images used (0: all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (*synth) {
    ConfigPtr cfg;
    if (pen_status s = build_config(synth_cfg, cfg); s != PEN_OK) return report(s, "synth");
    size_t written = 0;
    const pen_status s = pen_synth(opt(synth_bg), synth_n, synth_out.c_str(), synth_seed, cfg.get(), &written);
    if (s == PEN_OK) std::printf("wrote %zu pairs to %s\n", written, synth_out.c_str());
    return report(s, "synth");
  }

  if (*train) {
    ConfigPtr cfg;
    if (pen_status s = build_config(train_cfg, cfg); s != PEN_OK) return report(s, "train");
    pen_train_options o{};
    o.stage = stage.c_str();
    o.data_dir = opt(data_dir);
    o.unlabeled_dir = opt(unlabeled_dir);
    o.resume_path = opt(resume);
    o.out_checkpoint = out_ckpt.c_str();
    o.loss_csv = opt(loss_csv);
    o.has_seed = seed.has_value();
    o.seed = seed.value_or(0);
    o.deterministic = deterministic;
    o.force = force;
    o.on_loss = print_loss;
    o.user = &log_every;
    const pen_status s = pen_train(cfg.get(), &o);
    if (s == PEN_OK) std::printf("checkpoint written to %s\n", out_ckpt.c_str());
    return report(s, "train");
  }

  if (*erase) {
    if (erase_det) pen_set_deterministic(1);
    pen_model* raw = nullptr;
    if (pen_status s = pen_model_load(erase_ckpt.c_str(), &raw); s != PEN_OK) return report(s, "erase");
    ModelPtr model(raw);
    size_t n = 0;
    const pen_status s = pen_erase_dir(model.get(), erase_in.c_str(), erase_out.c_str(), erase_iters, erase_inter, &n);
    if (s == PEN_OK) std::printf("erased %zu images into %s\n", n, erase_out.c_str());
    return report(s, "erase");
  }

  if (*eval) {
    ConfigPtr cfg;
    if (pen_status s = build_config(eval_cfg, cfg); s != PEN_OK) return report(s, "eval");
    pen_eval_summary summary{};
    char* table = nullptr;
    const pen_status s = pen_eval_dir(eval_pred.c_str(), eval_gt.c_str(), cfg.get(), opt(eval_out), &summary, &table);
    if (s != PEN_OK) return report(s, "eval");
    std::fputs(table, stdout);
    pen_string_free(table);
    std::printf("aggregate psnr=%s ssim=%.6f mse=%.6g age=%.4f peps=%.6f pceps=%.6f count=%zu skipped=%zu\n",
                format_psnr(summary.aggregate.psnr).c_str(), summary.aggregate.ssim, summary.aggregate.mse,
                summary.aggregate.age, summary.aggregate.peps, summary.aggregate.pceps, summary.count,
                summary.skipped);
    if (summary.skipped > 0) {
      std::fprintf(stderr, "pen eval: %zu pair(s) skipped (missing partner or shape mismatch)\n", summary.skipped);
      return 3;
    }
    return 0;
  }

  if (*bench) {
    pen_model* raw = nullptr;
    if (pen_status s = pen_model_load(bench_ckpt.c_str(), &raw); s != PEN_OK) return report(s, "bench");
    ModelPtr model(raw);
    std::vector<pen_bench_row> rows(bench_iters.size());
    const pen_status s = pen_bench(model.get(), bench_images.c_str(), bench_iters.data(), bench_iters.size(),
                                   bench_repeats, bench_max, rows.data());
    if (s != PEN_OK) return report(s, "bench");
    std::printf("iterations,mean_ms,stddev_ms\n");
    for (const auto& r : rows) std::printf("%d,%.3f,%.3f\n", r.iterations, r.mean_ms, r.stddev_ms);
    return 0;
  }
  return kExitFailure;
}
