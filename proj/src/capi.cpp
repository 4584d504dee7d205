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

#include "pen/pen.h"

#include <cmath>
#include <cstring>
#include <string>

#include "pen/config.hpp"
#include "pen/error.hpp"
#include "pen/imagecore.hpp"
#include "pen/metrics.hpp"
#include "pen/network.hpp"
#include "pen/pipeline.hpp"
#include "pen/rng.hpp"
#include "pen/synthgen.hpp"

struct pen_config {
  pen::Config cfg;
};

struct pen_image {
  pen::Image image;
};

struct pen_model {
  pen::StageState state;
};

namespace {

thread_local std::string g_last_error;
thread_local std::string g_last_kind;

pen_status status_for(pen::ErrorCode code) {
  using pen::ErrorCode;
  switch (code) {
    case ErrorCode::kConfigError:
      return PEN_ERR_CONFIG;
    case ErrorCode::kCheckpointError:
    case ErrorCode::kMissingStrokeInit:
    case ErrorCode::kStageOrder:
      return PEN_ERR_CHECKPOINT;
    case ErrorCode::kFileNotFound:
    case ErrorCode::kDecodeError:
    case ErrorCode::kEmptyDataset:
    case ErrorCode::kMismatchedPair:
    case ErrorCode::kInvalidSize:
    case ErrorCode::kShapeMismatch:
    case ErrorCode::kBadShape:
    case ErrorCode::kTooSmall:
    case ErrorCode::kGlyphOverflow:
    case ErrorCode::kEmptyText:
      return PEN_ERR_DATA;
    case ErrorCode::kIoError:
      return PEN_ERR_IO;
    case ErrorCode::kNonFiniteTerm:
      return PEN_ERR_NUMERIC;
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kInvalidFactor:
    case ErrorCode::kLengthMismatch:
    case ErrorCode::kNoDetector:
      return PEN_ERR_INVALID_ARGUMENT;
  }
  return PEN_ERR_INTERNAL;
}

pen_status set_error(pen_status status, const std::string& kind, const std::string& message) {
  g_last_error = message;
  g_last_kind = kind;
  return status;
}

template <typename Fn>
pen_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    g_last_kind.clear();
    return PEN_OK;
  } catch (const pen::Error& e) {
    return set_error(status_for(e.code()), std::string(pen::error_code_name(e.code())), e.what());
  } catch (const c10::Error& e) {
    return set_error(PEN_ERR_INTERNAL, "TorchError", e.what_without_backtrace());
  } catch (const std::bad_alloc&) {
    return set_error(PEN_ERR_INTERNAL, "OutOfMemory", "out of memory");
  } catch (const std::exception& e) {
    return set_error(PEN_ERR_INTERNAL, "Internal", e.what());
  }
}

void require(bool ok, const char* what) {
  if (!ok) pen::fail(pen::ErrorCode::kInvalidArgument, what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

pen_metrics to_c(const pen::ImageMetrics& m) { return {m.psnr, m.ssim, m.mse, m.age, m.peps, m.pceps}; }

}  // namespace

extern "C" {

const char* pen_last_error(void) { return g_last_error.c_str(); }
const char* pen_last_error_kind(void) { return g_last_kind.c_str(); }

const char* pen_status_name(pen_status status) {
  switch (status) {
    case PEN_OK:
      return "ok";
    case PEN_ERR_INVALID_ARGUMENT:
      return "invalid argument";
    case PEN_ERR_CONFIG:
      return "config error";
    case PEN_ERR_DATA:
      return "data error";
    case PEN_ERR_CHECKPOINT:
      return "checkpoint error";
    case PEN_ERR_IO:
      return "i/o error";
    case PEN_ERR_NUMERIC:
      return "numeric error";
    case PEN_ERR_INTERNAL:
      return "internal error";
  }
  return "unknown";
}

const char* pen_version(void) { return "1.0.0"; }

void pen_string_free(char* s) { std::free(s); }

pen_status pen_set_deterministic(int on) {
  return guarded([&] { pen::set_deterministic(on != 0); });
}

pen_status pen_config_create(pen_config** out) {
  return guarded([&] {
    require(out, "out is null");
    *out = new pen_config{};
  });
}

pen_status pen_config_load(const char* path, pen_config** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new pen_config{pen::Config::from_file(path)};
  });
}

pen_status pen_config_set(pen_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    require(cfg && key && value, "null argument");
    cfg->cfg.set(key, value);
  });
}

pen_status pen_config_apply(pen_config* cfg, const char* assignment) {
  return guarded([&] {
    require(cfg && assignment, "null argument");
    cfg->cfg.apply_override(assignment);
  });
}

pen_status pen_config_get(const pen_config* cfg, const char* key, char** value) {
  return guarded([&] {
    require(cfg && key && value, "null argument");
    *value = dup_string(cfg->cfg.get(key));
  });
}

pen_status pen_config_dump(const pen_config* cfg, char** text) {
  return guarded([&] {
    require(cfg && text, "null argument");
    *text = dup_string(cfg->cfg.dump());
  });
}

void pen_config_destroy(pen_config* cfg) { delete cfg; }

pen_status pen_image_create(int height, int width, int channels, const double* data, pen_image** out) {
  return guarded([&] {
    require(out, "out is null");
    pen::Image img(height, width, channels);
    if (data) {
      std::memcpy(img.mutable_data().data(), data, img.size() * sizeof(double));
      img.check_range();
    }
    *out = new pen_image{std::move(img)};
  });
}

pen_status pen_image_load(const char* path, pen_image** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new pen_image{pen::load_image(path)};
  });
}

pen_status pen_image_save(const pen_image* image, const char* path) {
  return guarded([&] {
    require(image && path, "null argument");
    pen::save_image(image->image, path);
  });
}

int pen_image_height(const pen_image* image) { return image ? image->image.height() : 0; }
int pen_image_width(const pen_image* image) { return image ? image->image.width() : 0; }
int pen_image_channels(const pen_image* image) { return image ? image->image.channels() : 0; }
const double* pen_image_data(const pen_image* image) { return image ? image->image.data().data() : nullptr; }
void pen_image_destroy(pen_image* image) { delete image; }

pen_status pen_compute_metrics(const pen_image* pred, const pen_image* gt, double error_threshold,
                               int connectivity, pen_metrics* out) {
  return guarded([&] {
    require(pred && gt && out, "null argument");
    pen::MetricSettings s;
    s.error_threshold = error_threshold;
    s.connectivity = connectivity;
    *out = to_c(pen::compute_metrics(pred->image, gt->image, s));
  });
}

pen_status pen_eval_dir(const char* pred_dir, const char* gt_dir, const pen_config* cfg,
                        const char* report_path, pen_eval_summary* summary, char** table) {
  return guarded([&] {
    require(pred_dir && gt_dir, "null argument");
    const pen::MetricSettings s = cfg ? pen::metric_settings_from(cfg->cfg) : pen::MetricSettings{};
    const pen::MetricReport r = pen::evaluate_dir(pred_dir, gt_dir, s);
    if (report_path) pen::write_report(r, report_path);
    if (summary) *summary = {to_c(r.aggregate), r.count, r.psnr_excluded, r.skipped.size()};
    if (table) *table = dup_string(pen::format_report_table(r));
  });
}

pen_status pen_synth(const char* backgrounds_dir, int n, const char* out_dir, uint64_t seed,
                     const pen_config* cfg, size_t* written) {
  return guarded([&] {
    require(out_dir, "out_dir is null");
    const pen::SynthOptions opts = pen::synth_options_from(cfg ? cfg->cfg : pen::Config{});
    std::vector<pen::Image> backgrounds;
    if (backgrounds_dir) {
      for (const auto& p : pen::list_images(backgrounds_dir)) backgrounds.push_back(pen::load_image(p));
      if (backgrounds.empty()) {
        pen::fail(pen::ErrorCode::kEmptyDataset, std::string("no background images in ") + backgrounds_dir);
      }
    } else {
      for (std::uint64_t i = 0; i < 8; ++i) {
        pen::Rng rng = pen::Rng::derive(seed, {0xb6b6b6ULL, i});
        backgrounds.push_back(pen::procedural_background(2 * opts.size, 2 * opts.size, rng));
      }
    }
    const auto idx = pen::generate_toy_dataset(backgrounds, n, out_dir, seed, opts);
    if (written) *written = idx.entries.size();
  });
}

pen_status pen_train(const pen_config* cfg, const pen_train_options* o) {
  return guarded([&] {
    require(cfg && o && o->stage && o->out_checkpoint, "stage and out_checkpoint are required");
    pen::TrainConfig tc = pen::train_config_from(cfg->cfg, pen::parse_stage(o->stage));
    if (o->has_seed) tc.seed = static_cast<std::uint64_t>(o->seed);
    tc.deterministic = tc.deterministic || o->deterministic != 0;
    tc.force = o->force != 0;
    tc.checkpoint_path = o->out_checkpoint;
    if (tc.deterministic) pen::set_deterministic(true);

    pen::DatasetIndex data;
    if (tc.stage == pen::Stage::kStage2) {
      const char* dir = o->unlabeled_dir ? o->unlabeled_dir : o->data_dir;
      require(dir, "stage 2 needs --unlabeled or --data");
      data = pen::index_unlabeled(dir);
    } else {
      require(o->data_dir, "--data is required");
      data = pen::index_dataset(o->data_dir);
    }
    pen::StageState state = o->resume_path ? pen::load_checkpoint(o->resume_path, &tc.net) : pen::fresh_state(tc);
    pen::TrainHooks hooks;
    if (o->on_loss) {
      hooks.on_record = [o](const pen::LossRecord& r) { o->on_loss(r.step, r.name.c_str(), r.value, o->user); };
    }
    state = pen::train_stage(tc, data, std::move(state), hooks);
    const std::string csv = o->loss_csv ? std::string(o->loss_csv) : std::string(o->out_checkpoint) + ".losses.csv";
    pen::write_loss_csv(csv, state.loss_history);
  });
}

pen_status pen_model_load(const char* checkpoint, pen_model** out) {
  return guarded([&] {
    require(checkpoint && out, "null argument");
    *out = new pen_model{pen::load_checkpoint(checkpoint)};
  });
}

pen_status pen_model_init(const pen_config* cfg, uint64_t seed, pen_model** out) {
  return guarded([&] {
    require(out, "out is null");
    pen::TrainConfig tc = pen::train_config_from(cfg ? cfg->cfg : pen::Config{});
    tc.seed = seed;
    *out = new pen_model{pen::fresh_state(tc)};
  });
}

pen_status pen_model_save(const pen_model* model, const char* path, int inference_only) {
  return guarded([&] {
    require(model && path, "null argument");
    pen::save_checkpoint(path, model->state, inference_only != 0);
  });
}

int pen_model_iterations(const pen_model* model) { return model ? model->state.params.cfg.iterations : 0; }

int64_t pen_model_parameter_count(const pen_model* model) {
  return model ? model->state.params.parameter_count() : 0;
}

const char* pen_model_stage(const pen_model* model) { return model ? model->state.tag.c_str() : ""; }

const char* pen_model_config_hash(const pen_model* model) { return model ? model->state.params.hash.c_str() : ""; }

pen_status pen_model_erase(const pen_model* model, const pen_image* input, int iterations, pen_image** erased,
                           pen_image** stroke) {
  return guarded([&] {
    require(model && input && erased, "null argument");
    const int k = iterations > 0 ? iterations : model->state.params.cfg.iterations;
    auto r = pen::erase_any_size(model->state.params, input->image, k);
    auto* e = new pen_image{std::move(r.final)};
    if (stroke) *stroke = new pen_image{r.stroke.image()};
    *erased = e;
  });
}

pen_status pen_erase_dir(const pen_model* model, const char* in_dir, const char* out_dir, int iterations,
                         int intermediates, size_t* count) {
  return guarded([&] {
    require(model && in_dir && out_dir, "null argument");
    pen::InferenceOptions opts;
    opts.iterations = iterations;
    opts.intermediates = intermediates != 0;
    const auto n = pen::run_inference(model->state.params, in_dir, out_dir, opts);
    if (count) *count = n;
  });
}

void pen_model_destroy(pen_model* model) { delete model; }

pen_status pen_bench(const pen_model* model, const char* images_dir, const int* iters, size_t n_iters, int repeats,
                     int max_images, pen_bench_row* rows) {
  return guarded([&] {
    require(model && images_dir && iters && rows && n_iters > 0, "null argument");
    std::filesystem::path dir(images_dir);
    if (std::filesystem::is_directory(dir / "images")) dir /= "images";
    std::vector<pen::Image> images;
    for (const auto& p : pen::list_images(dir)) {
      if (max_images > 0 && static_cast<int>(images.size()) >= max_images) break;
      images.push_back(pen::load_image(p));
    }
    const auto out = pen::benchmark_iterations(model->state.params, images,
                                               std::vector<int>(iters, iters + n_iters), repeats);
    for (std::size_t i = 0; i < out.size(); ++i) rows[i] = {out[i].iterations, out[i].mean_ms, out[i].stddev_ms};
  });
}

}  // extern "C"
