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

#include "pen/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pen/checkpoint.hpp"
#include "pen/error.hpp"
#include "pen/rng.hpp"

namespace fs = std::filesystem;
namespace F = torch::nn::functional;

namespace pen {

namespace {

constexpr int kCheckpointFormat = 1;
const char* const kDiscPrefix = "disc/";

std::string save_optimizer(torch::optim::Optimizer& opt) {
  torch::serialize::OutputArchive archive;
  opt.save(archive);
  std::ostringstream os;
  archive.save_to(os);
  return os.str();
}

void load_optimizer(torch::optim::Optimizer& opt, const std::string& blob) {
  if (blob.empty()) return;
  torch::serialize::InputArchive archive;
  std::istringstream is(blob);
  try {
    archive.load_from(is);
    opt.load(archive);
  } catch (const c10::Error& e) {
    fail(ErrorCode::kCheckpointError, std::string("optimizer state does not fit: ") + e.what_without_backtrace());
  }
}

torch::optim::Adam make_adam(const std::vector<torch::Tensor>& params, double lr,
                             const std::array<double, 2>& betas) {
  return torch::optim::Adam(params, torch::optim::AdamOptions(lr).betas({betas[0], betas[1]}));
}

bool tag_in(const std::string& tag, std::initializer_list<Stage> stages) {
  for (Stage s : stages) {
    if (tag == stage_tag(s)) return true;
  }
  return false;
}

// Resumes an unfinished run of the same stage, otherwise checks ordering and
// resets the per-stage bookkeeping.
void begin_stage(const TrainConfig& cfg, StageState& state, Stage stage) {
  cfg.validate();
  if (!state.params.net) fail(ErrorCode::kInvalidArgument, "state has no parameters");
  if (state.params.hash != config_hash(cfg.net)) {
    fail(ErrorCode::kCheckpointError, "config_hash mismatch: parameters " + state.params.hash +
                                          ", configuration " + config_hash(cfg.net));
  }
  if (cfg.deterministic) set_deterministic(true);
  // Module holders share storage; train on private copies so the caller's
  // state stays untouched.
  state.params = state.params.clone();
  if (state.disc) state.disc = clone_discriminator(state.disc);
  const std::string tag(stage_tag(stage));
  if (state.tag == tag && !state.complete) return;
  if (!cfg.force) {
    switch (stage) {
      case Stage::kStrokeInit:
        break;
      case Stage::kStage1:
        if (!tag_in(state.tag, {Stage::kStrokeInit, Stage::kStage1})) {
          fail(ErrorCode::kMissingStrokeInit, "stage 1 needs a stroke_init checkpoint (have '" + state.tag + "')");
        }
        break;
      case Stage::kStage2:
        if (!tag_in(state.tag, {Stage::kStrokeInit, Stage::kStage1, Stage::kStage2})) {
          fail(ErrorCode::kStageOrder, "stage 2 needs a stage1 or stroke_init checkpoint (have '" + state.tag + "')");
        }
        break;
      case Stage::kStage3:
        if (!tag_in(state.tag, {Stage::kStage1, Stage::kStage2, Stage::kStage3})) {
          fail(ErrorCode::kStageOrder, "stage 3 needs a stage2 or stage1 checkpoint (have '" + state.tag + "')");
        }
        break;
    }
  }
  state.tag = tag;
  state.complete = false;
  state.step = 0;
  state.loss_history.clear();
  state.gen_optimizer.clear();
  state.disc_optimizer.clear();
}

std::int64_t last_step(const TrainConfig& cfg) {
  return cfg.stop_at > 0 ? std::min(cfg.stop_at, cfg.steps) : cfg.steps;
}

void record(StageState& state, const TrainHooks& hooks, std::int64_t step, const std::string& name,
            double value) {
  if (!std::isfinite(value)) fail(ErrorCode::kNonFiniteTerm, name + " is not finite at step " + std::to_string(step));
  state.loss_history.push_back({step, name, value});
  if (hooks.on_record) hooks.on_record(state.loss_history.back());
}

struct Batch {
  torch::Tensor original;
  torch::Tensor gt;
  torch::Tensor stroke;
};

std::vector<std::size_t> sample_indices(Rng& rng, std::size_t n, int batch) {
  std::vector<std::size_t> idx;
  for (int i = 0; i < batch; ++i) idx.push_back(static_cast<std::size_t>(rng.uniform_int(n)));
  return idx;
}

Batch make_batch(const TrainConfig& cfg, const std::vector<SamplePair>& pairs, Stage stage,
                 std::int64_t step) {
  Rng rng = Rng::derive(cfg.seed, {static_cast<std::uint64_t>(stage), static_cast<std::uint64_t>(step)});
  std::vector<torch::Tensor> o, g, s;
  for (std::size_t i : sample_indices(rng, pairs.size(), cfg.batch_size)) {
    const SamplePair p = cfg.augment ? train_augment(pairs[i], rng, cfg.aug) : pairs[i];
    o.push_back(image_to_tensor(p.original));
    g.push_back(image_to_tensor(p.erased_gt));
    s.push_back(mask_to_tensor(p.stroke_gt));
  }
  return {torch::cat(o), torch::cat(g), torch::cat(s)};
}

void maybe_checkpoint(const TrainConfig& cfg, StageState& state, torch::optim::Optimizer* gen,
                      torch::optim::Optimizer* disc, bool force_write) {
  const bool periodic = cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0;
  if (!periodic && !force_write) return;
  if (gen) state.gen_optimizer = save_optimizer(*gen);
  if (disc) state.disc_optimizer = save_optimizer(*disc);
  if (!cfg.checkpoint_path.empty()) save_checkpoint(cfg.checkpoint_path, state);
}

void finish_stage(const TrainConfig& cfg, StageState& state, torch::optim::Optimizer* gen,
                  torch::optim::Optimizer* disc) {
  if (state.step >= cfg.steps) state.complete = true;
  maybe_checkpoint(cfg, state, gen, disc, true);
}

void require_nonempty(const DatasetIndex& data) {
  if (data.entries.empty()) fail(ErrorCode::kEmptyDataset, "dataset has no entries");
}

void ensure_discriminator(const TrainConfig& cfg, StageState& state) {
  if (!state.disc) state.disc = make_discriminator(cfg.disc, splitmix64(cfg.seed ^ 0xd15c0000ULL));
}

torch::Tensor predicted_stroke_frozen(PenNet& net, const torch::Tensor& x) {
  torch::NoGradGuard guard;
  return net->predict_stroke(x);
}

Image pad_edge(const Image& img, int height, int width) {
  Image out(height, width, img.channels());
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(y, img.height() - 1);
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(x, img.width() - 1);
      for (int c = 0; c < img.channels(); ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

Image crop(const Image& img, int height, int width) {
  Image out(height, width, img.channels());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < img.channels(); ++c) out.at(y, x, c) = img.at(y, x, c);
    }
  }
  return out;
}

int round_up16(int v) { return std::max(16, (v + 15) / 16 * 16); }

nlohmann::json net_to_json(const NetConfig& c) {
  return {{"base_channels", c.base_channels},
          {"iterations", c.iterations},
          {"dilation_rates", c.dilation_rates},
          {"stroke_blocks", c.stroke_blocks},
          {"repredict_stroke", c.repredict_stroke}};
}

NetConfig net_from_json(const nlohmann::json& j) {
  NetConfig c;
  c.base_channels = j.at("base_channels").get<int>();
  c.iterations = j.at("iterations").get<int>();
  c.dilation_rates = j.at("dilation_rates").get<std::vector<int>>();
  c.stroke_blocks = j.at("stroke_blocks").get<int>();
  c.repredict_stroke = j.at("repredict_stroke").get<bool>();
  return c;
}

void copy_into(const std::string& name, torch::Tensor dst, const TensorContainer& file) {
  const torch::Tensor* src = file.find(name);
  if (!src) fail(ErrorCode::kCheckpointError, "checkpoint lacks tensor '" + name + "'");
  if (!src->sizes().equals(dst.sizes())) {
    fail(ErrorCode::kCheckpointError, "tensor '" + name + "' has the wrong shape");
  }
  dst.copy_(src->to(dst.scalar_type()));
}

}  // namespace

std::string_view stage_tag(Stage stage) {
  switch (stage) {
    case Stage::kStrokeInit:
      return "stroke_init";
    case Stage::kStage1:
      return "stage1_gan_init";
    case Stage::kStage2:
      return "stage2_selfsup";
    case Stage::kStage3:
      return "stage3_finetune";
  }
  return "unknown";
}

Stage parse_stage(std::string_view text) {
  if (text == "stroke-init" || text == "stroke_init" || text == "0") return Stage::kStrokeInit;
  if (text == "1" || text == "stage1" || text == stage_tag(Stage::kStage1)) return Stage::kStage1;
  if (text == "2" || text == "stage2" || text == stage_tag(Stage::kStage2)) return Stage::kStage2;
  if (text == "3" || text == "stage3" || text == stage_tag(Stage::kStage3)) return Stage::kStage3;
  fail(ErrorCode::kConfigError, "unknown stage '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  if (!(lr_gen > 0.0) || !(lr_disc > 0.0)) fail(ErrorCode::kConfigError, "learning rates must be > 0");
  for (double b : {betas_gen[0], betas_gen[1], betas_disc[0], betas_disc[1]}) {
    if (!(b >= 0.0 && b < 1.0)) fail(ErrorCode::kConfigError, "Adam betas must be in [0, 1)");
  }
  if (batch_size < 1) fail(ErrorCode::kConfigError, "train.batch_size must be >= 1");
  if (steps < 1) fail(ErrorCode::kConfigError, "train.steps must be >= 1");
  if (input_size < 16 || input_size % 16 != 0) {
    fail(ErrorCode::kConfigError, "train.input_size must be a positive multiple of 16");
  }
  if (checkpoint_every < 0 || stop_at < 0) fail(ErrorCode::kConfigError, "step counts must be >= 0");
  if (aug.factor_min <= 0.0 || aug.factor_max < aug.factor_min) {
    fail(ErrorCode::kConfigError, "augment factors must satisfy 0 < factor_min <= factor_max");
  }
  weights.validate();
  net.validate();
  disc.validate();
  features.validate();
  StrokeThreshold{stroke_tau};
}

TrainConfig train_config_from(const Config& c, Stage stage) {
  TrainConfig t;
  t.stage = stage;
  t.lr_gen = c.get_double("train.lr_gen");
  t.betas_gen = {c.get_double("train.beta1_gen"), c.get_double("train.beta2_gen")};
  t.lr_disc = c.get_double("train.lr_disc");
  t.betas_disc = {c.get_double("train.beta1_disc"), c.get_double("train.beta2_disc")};
  t.batch_size = static_cast<int>(c.get_int("train.batch_size"));
  t.steps = static_cast<int>(c.get_int("train.steps"));
  t.seed = static_cast<std::uint64_t>(c.get_int("train.seed"));
  t.input_size = static_cast<int>(c.get_int("train.input_size"));
  t.deterministic = c.get_bool("train.deterministic");
  t.checkpoint_every = static_cast<int>(c.get_int("train.checkpoint_every"));
  t.augment = c.get_bool("train.augment");

  t.net.base_channels = static_cast<int>(c.get_int("net.base_channels"));
  t.net.iterations = static_cast<int>(c.get_int("net.iterations"));
  t.net.dilation_rates = c.get_int_list("net.dilation_rates");
  t.net.stroke_blocks = static_cast<int>(c.get_int("net.stroke_blocks"));
  t.net.repredict_stroke = c.get_bool("net.repredict_stroke");

  t.disc.base_channels = static_cast<int>(c.get_int("disc.base_channels"));
  t.disc.warmup_power_iterations = static_cast<int>(c.get_int("disc.warmup_power_iterations"));

  t.weights.lambda_r1 = c.get_double("loss.lambda_r1");
  t.weights.lambda_r2 = c.get_double("loss.lambda_r2");
  t.weights.lambda_c = c.get_double("loss.lambda_c");
  t.weights.lambda_s = c.get_double("loss.lambda_s");
  t.weights.lambda_a = c.get_double("loss.lambda_a");
  t.weights.lambda_stroke = c.get_double("loss.lambda_stroke");

  const std::string& init = c.get("features.pretrained");
  if (init == "auto") {
    t.features.init = FeatureInit::kAuto;
  } else if (init == "required") {
    t.features.init = FeatureInit::kRequired;
  } else if (init == "random") {
    t.features.init = FeatureInit::kRandom;
  } else {
    fail(ErrorCode::kConfigError, "features.pretrained must be auto, required or random");
  }
  t.features.weights_path = c.get("features.weights");
  t.features.layers = c.get_int_list("features.layers");
  t.features.width_div = static_cast<int>(c.get_int("features.width_div"));
  t.features.seed = static_cast<std::uint64_t>(c.get_int("features.seed"));

  t.aug.factor_min = c.get_double("augment.factor_min");
  t.aug.factor_max = c.get_double("augment.factor_max");
  t.aug.rotation_deg = c.get_double("augment.rotation_deg");
  t.aug.flip_prob = c.get_double("augment.flip_prob");
  t.stroke_tau = c.get_double("synth.tau");
  t.validate();
  return t;
}

MetricSettings metric_settings_from(const Config& c) {
  MetricSettings s;
  s.error_threshold = c.get_double("metrics.error_threshold");
  s.connectivity = static_cast<int>(c.get_int("metrics.connectivity"));
  s.validate();
  return s;
}

SynthOptions synth_options_from(const Config& c) {
  SynthOptions o;
  o.size = static_cast<int>(c.get_int("synth.size"));
  o.max_texts = static_cast<int>(c.get_int("synth.max_texts"));
  o.tau = c.get_double("synth.tau");
  o.max_rotation_deg = c.get_double("synth.max_rotation_deg");
  if (o.size < 64) fail(ErrorCode::kConfigError, "synth.size must be >= 64");
  if (o.max_texts < 1) fail(ErrorCode::kConfigError, "synth.max_texts must be >= 1");
  StrokeThreshold{o.tau};
  return o;
}

StageState fresh_state(const TrainConfig& cfg) {
  StageState s;
  s.params = init_params(cfg.net, cfg.seed);
  return s;
}

DatasetIndex index_unlabeled(const fs::path& dir) {
  const fs::path root = fs::is_directory(dir / "images") ? dir / "images" : dir;
  if (!fs::is_directory(root)) fail(ErrorCode::kFileNotFound, root.string());
  DatasetIndex idx;
  idx.root = dir;
  for (const auto& p : list_images(root)) idx.entries.push_back({p.stem().string(), p, {}});
  if (idx.entries.empty()) fail(ErrorCode::kEmptyDataset, "no images in " + root.string());
  return idx;
}

std::vector<SamplePair> load_training_pairs(const DatasetIndex& data, int size, double tau,
                                            const ImageLoader& load) {
  require_nonempty(data);
  std::vector<SamplePair> out;
  for (const auto& e : data.entries) {
    Image o = load(e.original_path);
    Image g = load(e.gt_path);
    if (o.channels() == 1) o = to_rgb(o);
    if (g.channels() == 1) g = to_rgb(g);
    if (o.height() != g.height() || o.width() != g.width()) {
      fail(ErrorCode::kMismatchedPair, "pair '" + e.id + "' differs in size");
    }
    if (o.height() != size || o.width() != size) {
      o = resize_bilinear(o, size, size);
      g = resize_bilinear(g, size, size);
    }
    SamplePair p;
    p.stroke_gt = derive_stroke_target(o, g, StrokeThreshold{tau});
    p.original = std::move(o);
    p.erased_gt = std::move(g);
    p.id = e.id;
    out.push_back(std::move(p));
  }
  return out;
}

StageState train_stroke_init(const TrainConfig& cfg, const DatasetIndex& data, StageState state,
                             const TrainHooks& hooks) {
  require_nonempty(data);
  begin_stage(cfg, state, Stage::kStrokeInit);
  const auto pairs = load_training_pairs(data, cfg.input_size, cfg.stroke_tau, hooks.load);
  PenNet& net = state.params.net;
  net->train();
  auto opt = make_adam(state.params.stroke_parameters(), cfg.lr_gen, cfg.betas_gen);
  load_optimizer(opt, state.gen_optimizer);
  const auto end = last_step(cfg);
  while (state.step < end) {
    const std::int64_t step = ++state.step;
    const Batch b = make_batch(cfg, pairs, Stage::kStrokeInit, step);
    const auto pred = net->predict_stroke(b.original);
    const auto loss = F::binary_cross_entropy(pred, b.stroke);
    opt.zero_grad();
    loss.backward();
    opt.step();
    record(state, hooks, step, "stroke_bce", loss.item<double>());
    maybe_checkpoint(cfg, state, &opt, nullptr, false);
  }
  finish_stage(cfg, state, &opt, nullptr);
  return state;
}

StageState train_stage1(const TrainConfig& cfg, const DatasetIndex& data, StageState state,
                        const TrainHooks& hooks) {
  require_nonempty(data);
  begin_stage(cfg, state, Stage::kStage1);
  ensure_discriminator(cfg, state);
  const auto pairs = load_training_pairs(data, cfg.input_size, cfg.stroke_tau, hooks.load);
  PenNet& net = state.params.net;
  TwoStreamDiscriminator& disc = state.disc;
  net->train();
  auto gen_opt = make_adam(state.params.erase_parameters(), cfg.lr_gen, cfg.betas_gen);
  auto disc_opt = make_adam(disc->parameters(), cfg.lr_disc, cfg.betas_disc);
  load_optimizer(gen_opt, state.gen_optimizer);
  load_optimizer(disc_opt, state.disc_optimizer);
  const int k = cfg.net.iterations;
  const auto end = last_step(cfg);
  while (state.step < end) {
    const std::int64_t step = ++state.step;
    const Batch b = make_batch(cfg, pairs, Stage::kStage1, step);
    const auto s = predicted_stroke_frozen(net, b.original);
    if (step % 2 == 1) {
      const auto out = net->erase_progressive(b.original, k, s).final;
      const auto rec = reconstruction_loss(out, b.gt, s, cfg.weights);
      disc->eval();
      const auto adv = adversarial_loss(disc, out, b.stroke, b.gt);
      const auto total = rec + cfg.weights.lambda_a * adv;
      gen_opt.zero_grad();
      total.backward();
      gen_opt.step();
      record(state, hooks, step, "reconstruction", rec.item<double>());
      record(state, hooks, step, "adversarial", adv.item<double>());
      record(state, hooks, step, "gen_total", total.item<double>());
    } else {
      torch::Tensor fake;
      {
        torch::NoGradGuard guard;
        fake = net->erase_progressive(b.original, k, s).final;
      }
      disc->train();
      const auto ld = disc_loss(disc, b.gt, fake, b.stroke);
      disc_opt.zero_grad();
      ld.backward();
      disc_opt.step();
      record(state, hooks, step, "disc", ld.item<double>());
    }
    maybe_checkpoint(cfg, state, &gen_opt, &disc_opt, false);
  }
  finish_stage(cfg, state, &gen_opt, &disc_opt);
  return state;
}

namespace {

std::vector<Image> load_unlabeled(const TrainConfig& cfg, const DatasetIndex& unlabeled,
                                  const TrainHooks& hooks) {
  std::vector<Image> images;
  for (const auto& e : unlabeled.entries) {
    Image img = hooks.load(e.original_path);
    if (img.channels() == 1) img = to_rgb(img);
    if (img.height() != cfg.input_size || img.width() != cfg.input_size) {
      img = resize_bilinear(img, cfg.input_size, cfg.input_size);
    }
    images.push_back(std::move(img));
  }
  return images;
}

// Variant pairs of training step `step`; a pure function of (seed, step).
std::pair<std::vector<Image>, std::vector<Image>> stage2_batch(const TrainConfig& cfg,
                                                               const std::vector<Image>& images,
                                                               const DatasetIndex& unlabeled,
                                                               std::int64_t step) {
  Rng rng = Rng::derive(cfg.seed, {static_cast<std::uint64_t>(Stage::kStage2), static_cast<std::uint64_t>(step)});
  std::vector<Image> va, vb;
  for (std::size_t i : sample_indices(rng, images.size(), cfg.batch_size)) {
    VariantPair vp = sample_variant_pair(images[i], rng, cfg.aug, unlabeled.entries[i].id);
    va.push_back(std::move(vp.a));
    vb.push_back(std::move(vp.b));
  }
  return {std::move(va), std::move(vb)};
}

torch::Tensor pair_self_supervised(PenNet& net, int k, const std::vector<Image>& va,
                                   const std::vector<Image>& vb) {
  const auto xa = images_to_batch(va);
  const auto xb = images_to_batch(vb);
  const auto oa = net->erase_progressive(xa, k, predicted_stroke_frozen(net, xa)).final;
  const auto ob = net->erase_progressive(xb, k, predicted_stroke_frozen(net, xb)).final;
  return self_supervised_loss(extract_stroke(xa, oa), extract_stroke(xb, ob));
}

}  // namespace

StageState train_stage2_selfsup(const TrainConfig& cfg, const DatasetIndex& unlabeled,
                                StageState state, const TrainHooks& hooks) {
  require_nonempty(unlabeled);
  begin_stage(cfg, state, Stage::kStage2);
  const std::vector<Image> images = load_unlabeled(cfg, unlabeled, hooks);
  PenNet& net = state.params.net;
  net->train();
  auto opt = make_adam(state.params.erase_parameters(), cfg.lr_gen, cfg.betas_gen);
  load_optimizer(opt, state.gen_optimizer);
  const int k = cfg.net.iterations;
  const auto end = last_step(cfg);
  while (state.step < end) {
    const std::int64_t step = ++state.step;
    const auto [va, vb] = stage2_batch(cfg, images, unlabeled, step);
    const auto loss = pair_self_supervised(net, k, va, vb);
    opt.zero_grad();
    loss.backward();
    opt.step();
    record(state, hooks, step, "self_supervised", loss.item<double>());
    maybe_checkpoint(cfg, state, &opt, nullptr, false);
  }
  finish_stage(cfg, state, &opt, nullptr);
  return state;
}

double self_supervised_probe(const TrainConfig& cfg, const StageState& state,
                             const DatasetIndex& unlabeled, std::uint64_t probe_seed, int rounds,
                             const TrainHooks& hooks) {
  require_nonempty(unlabeled);
  if (rounds < 1) fail(ErrorCode::kInvalidArgument, "probe needs at least one round");
  if (!state.params.net) fail(ErrorCode::kInvalidArgument, "state has no parameters");
  const std::vector<Image> images = load_unlabeled(cfg, unlabeled, hooks);
  PenNet net = state.params.net;
  torch::NoGradGuard guard;
  double sum = 0.0;
  for (int r = 0; r < rounds; ++r) {
    Rng rng = Rng::derive(probe_seed, {0x9e0be, static_cast<std::uint64_t>(r)});
    std::vector<Image> va, vb;
    for (std::size_t i = 0; i < images.size(); ++i) {
      VariantPair vp = sample_variant_pair(images[i], rng, cfg.aug, unlabeled.entries[i].id);
      va.push_back(std::move(vp.a));
      vb.push_back(std::move(vp.b));
    }
    sum += pair_self_supervised(net, cfg.net.iterations, va, vb).item<double>();
  }
  return sum / rounds;
}

double self_supervised_replay(const TrainConfig& cfg, const StageState& state,
                              const DatasetIndex& unlabeled, std::int64_t first_step,
                              std::int64_t last_step, const TrainHooks& hooks) {
  require_nonempty(unlabeled);
  if (first_step < 1 || last_step < first_step) fail(ErrorCode::kInvalidArgument, "bad replay step range");
  if (!state.params.net) fail(ErrorCode::kInvalidArgument, "state has no parameters");
  const std::vector<Image> images = load_unlabeled(cfg, unlabeled, hooks);
  PenNet net = state.params.net;
  torch::NoGradGuard guard;
  double sum = 0.0;
  for (std::int64_t step = first_step; step <= last_step; ++step) {
    const auto [va, vb] = stage2_batch(cfg, images, unlabeled, step);
    sum += pair_self_supervised(net, cfg.net.iterations, va, vb).item<double>();
  }
  return sum / static_cast<double>(last_step - first_step + 1);
}

StageState train_stage3_finetune(const TrainConfig& cfg, const DatasetIndex& data, StageState state,
                                 const TrainHooks& hooks) {
  require_nonempty(data);
  begin_stage(cfg, state, Stage::kStage3);
  ensure_discriminator(cfg, state);
  const auto pairs = load_training_pairs(data, cfg.input_size, cfg.stroke_tau, hooks.load);
  auto fx = make_feature_extractor(cfg.features);
  PenNet& net = state.params.net;
  TwoStreamDiscriminator& disc = state.disc;
  net->train();
  auto gen_opt = make_adam(net->parameters(), cfg.lr_gen, cfg.betas_gen);
  auto disc_opt = make_adam(disc->parameters(), cfg.lr_disc, cfg.betas_disc);
  load_optimizer(gen_opt, state.gen_optimizer);
  load_optimizer(disc_opt, state.disc_optimizer);
  const int k = cfg.net.iterations;
  const auto end = last_step(cfg);
  while (state.step < end) {
    const std::int64_t step = ++state.step;
    const Batch b = make_batch(cfg, pairs, Stage::kStage3, step);
    if (step % 2 == 1) {
      const auto s = net->predict_stroke(b.original);
      const auto out = net->erase_progressive(b.original, k, s).final;
      // The mask weights the image terms as a constant; the stroke module is
      // supervised directly by the BCE term.
      const auto s_const = s.detach();
      const auto rec = reconstruction_loss(out, b.gt, s_const, cfg.weights);
      const auto composed = compose_image(out, b.gt, s_const);
      const auto content = content_loss(out, b.gt, composed, fx);
      const auto style = style_loss(out, b.gt, fx);
      disc->eval();
      const auto adv = adversarial_loss(disc, out, b.stroke, b.gt);
      const auto bce = F::binary_cross_entropy(s, b.stroke);
      const auto total = total_loss(rec, content, style, adv, cfg.weights) + cfg.weights.lambda_stroke * bce;
      gen_opt.zero_grad();
      total.backward();
      gen_opt.step();
      record(state, hooks, step, "reconstruction", rec.item<double>());
      record(state, hooks, step, "content", content.item<double>());
      record(state, hooks, step, "style", style.item<double>());
      record(state, hooks, step, "adversarial", adv.item<double>());
      record(state, hooks, step, "stroke_bce", bce.item<double>());
      record(state, hooks, step, "gen_total", total.item<double>());
    } else {
      torch::Tensor fake;
      {
        torch::NoGradGuard guard;
        fake = net->erase_progressive(b.original, k, net->predict_stroke(b.original)).final;
      }
      disc->train();
      const auto ld = disc_loss(disc, b.gt, fake, b.stroke);
      disc_opt.zero_grad();
      ld.backward();
      disc_opt.step();
      record(state, hooks, step, "disc", ld.item<double>());
    }
    maybe_checkpoint(cfg, state, &gen_opt, &disc_opt, false);
  }
  finish_stage(cfg, state, &gen_opt, &disc_opt);
  return state;
}

StageState train_stage(const TrainConfig& cfg, const DatasetIndex& data, StageState state,
                       const TrainHooks& hooks) {
  switch (cfg.stage) {
    case Stage::kStrokeInit:
      return train_stroke_init(cfg, data, std::move(state), hooks);
    case Stage::kStage1:
      return train_stage1(cfg, data, std::move(state), hooks);
    case Stage::kStage2:
      return train_stage2_selfsup(cfg, data, std::move(state), hooks);
    case Stage::kStage3:
      return train_stage3_finetune(cfg, data, std::move(state), hooks);
  }
  fail(ErrorCode::kConfigError, "unknown stage");
}

void save_checkpoint(const fs::path& path, const StageState& state, bool inference_only) {
  if (!state.params.net) fail(ErrorCode::kInvalidArgument, "state has no parameters");
  TensorContainer file;
  nlohmann::json history = nlohmann::json::array();
  if (!inference_only) {
    for (const auto& r : state.loss_history) history.push_back({r.step, r.name, r.value});
  }
  file.meta = {{"format_version", kCheckpointFormat},
               {"config_hash", state.params.hash},
               {"net", net_to_json(state.params.cfg)},
               {"stage_tag", state.tag},
               {"complete", state.complete},
               {"step", state.step},
               {"inference_only", inference_only},
               {"loss_history", history}};
  torch::NoGradGuard guard;
  auto& net = *state.params.net.ptr();
  for (const auto& item : net.named_parameters(true)) file.tensors.emplace_back(item.key(), item.value().detach().clone());
  for (const auto& item : net.named_buffers(true)) file.tensors.emplace_back(item.key(), item.value().detach().clone());
  if (!inference_only && state.disc) {
    auto& d = *state.disc.ptr();
    const auto& dc = d.config();
    file.meta["disc"] = {{"base_channels", dc.base_channels},
                         {"layers", dc.layers},
                         {"warmup_power_iterations", dc.warmup_power_iterations}};
    for (const auto& item : d.named_parameters(true)) {
      file.tensors.emplace_back(kDiscPrefix + item.key(), item.value().detach().clone());
    }
    for (const auto& item : d.named_buffers(true)) {
      file.tensors.emplace_back(kDiscPrefix + item.key(), item.value().detach().clone());
    }
  }
  if (!inference_only) {
    if (!state.gen_optimizer.empty()) file.blobs.emplace_back("optim/gen", state.gen_optimizer);
    if (!state.disc_optimizer.empty()) file.blobs.emplace_back("optim/disc", state.disc_optimizer);
  }
  write_container(path, file);
}

StageState load_checkpoint(const fs::path& path, const NetConfig* expected_net) {
  const TensorContainer file = read_container(path);
  StageState state;
  try {
    const auto& m = file.meta;
    if (m.at("format_version").get<int>() != kCheckpointFormat) {
      fail(ErrorCode::kCheckpointError, "unsupported checkpoint format version");
    }
    const NetConfig net_cfg = net_from_json(m.at("net"));
    const std::string stored = m.at("config_hash").get<std::string>();
    if (config_hash(net_cfg) != stored) {
      fail(ErrorCode::kCheckpointError, "config_hash mismatch: stored " + stored + ", recomputed " + config_hash(net_cfg));
    }
    if (expected_net && config_hash(*expected_net) != stored) {
      fail(ErrorCode::kCheckpointError, "config_hash mismatch: checkpoint " + stored + ", configuration " +
                                            config_hash(*expected_net));
    }
    state.params = init_params(net_cfg, 0);
    state.tag = m.at("stage_tag").get<std::string>();
    state.complete = m.at("complete").get<bool>();
    state.step = m.at("step").get<std::int64_t>();
    for (const auto& r : m.at("loss_history")) {
      state.loss_history.push_back({r.at(0).get<std::int64_t>(), r.at(1).get<std::string>(), r.at(2).get<double>()});
    }
    torch::NoGradGuard guard;
    auto& net = *state.params.net.ptr();
    for (auto& item : net.named_parameters(true)) copy_into(item.key(), item.value(), file);
    for (auto& item : net.named_buffers(true)) copy_into(item.key(), item.value(), file);
    if (m.contains("disc")) {
      DiscConfig dc;
      dc.base_channels = m["disc"].at("base_channels").get<int>();
      dc.layers = m["disc"].at("layers").get<int>();
      dc.warmup_power_iterations = m["disc"].at("warmup_power_iterations").get<int>();
      state.disc = make_discriminator(dc, 0);
      auto& d = *state.disc.ptr();
      for (auto& item : d.named_parameters(true)) copy_into(kDiscPrefix + item.key(), item.value(), file);
      for (auto& item : d.named_buffers(true)) copy_into(kDiscPrefix + item.key(), item.value(), file);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kCheckpointError, std::string("malformed checkpoint header: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kCheckpointError) throw;
    fail(ErrorCode::kCheckpointError, e.what());
  }
  if (const auto* blob = file.find_blob("optim/gen")) state.gen_optimizer = *blob;
  if (const auto* blob = file.find_blob("optim/disc")) state.disc_optimizer = *blob;
  return state;
}

void write_loss_csv(const fs::path& path, const std::vector<LossRecord>& history) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) fail(ErrorCode::kIoError, "cannot write " + path.string());
  os << "step,loss_name,value\n";
  char buf[64];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.value);
    os << r.step << ',' << r.name << ',' << buf << '\n';
  }
  if (!os) fail(ErrorCode::kIoError, "failed writing " + path.string());
}

std::vector<LossRecord> read_loss_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::kFileNotFound, path.string());
  std::vector<LossRecord> out;
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto a = line.find(',');
    const auto b = line.find(',', a + 1);
    if (a == std::string::npos || b == std::string::npos) fail(ErrorCode::kDecodeError, "bad loss line: " + line);
    out.push_back({std::stoll(line.substr(0, a)), line.substr(a + 1, b - a - 1), std::stod(line.substr(b + 1))});
  }
  return out;
}

EraseResult erase_any_size(const PenParams& params, const Image& image, int iterations) {
  const Image rgb = image.channels() == 3 ? image : to_rgb(image);
  const int h = rgb.height();
  const int w = rgb.width();
  const int ph = round_up16(h);
  const int pw = round_up16(w);
  if (ph == h && pw == w) return erase_progressive(params, rgb, iterations);
  EraseResult r = erase_progressive(params, pad_edge(rgb, ph, pw), iterations);
  r.final = crop(r.final, h, w);
  for (auto& im : r.intermediates) im = crop(im, h, w);
  r.stroke = StrokeMask(crop(r.stroke.image(), h, w));
  return r;
}

std::size_t run_inference(const PenParams& params, const fs::path& in_dir, const fs::path& out_dir,
                          const InferenceOptions& opts) {
  const fs::path src = fs::is_directory(in_dir / "images") ? in_dir / "images" : in_dir;
  const auto files = list_images(src);
  if (files.empty()) fail(ErrorCode::kEmptyDataset, "no images in " + src.string());
  const int k = opts.iterations > 0 ? opts.iterations : params.cfg.iterations;
  for (const auto& f : files) {
    const std::string name = f.stem().string() + ".png";
    const EraseResult r = erase_any_size(params, load_image(f), k);
    save_image(r.final, out_dir / name);
    save_mask(r.stroke, out_dir / "masks" / name);
    if (opts.intermediates) {
      for (std::size_t i = 0; i < r.intermediates.size(); ++i) {
        save_image(r.intermediates[i], out_dir / ("iter" + std::to_string(i + 1)) / name);
      }
    }
  }
  return files.size();
}

std::vector<BenchRow> benchmark_iterations(const PenParams& params, const std::vector<Image>& images,
                                           const std::vector<int>& iters, int repeats) {
  if (images.empty()) fail(ErrorCode::kEmptyDataset, "benchmark needs at least one image");
  if (repeats < 1) fail(ErrorCode::kInvalidArgument, "repeats must be >= 1");
  for (int k : iters) {
    if (k < 1) fail(ErrorCode::kInvalidArgument, "iteration counts must be >= 1");
  }
  // One untimed pass so allocator warm-up does not land on the first row.
  for (const auto& img : images) erase_any_size(params, img, 1);
  std::vector<std::vector<double>> samples(iters.size());
  using Clock = std::chrono::steady_clock;
  for (int r = 0; r < repeats; ++r) {
    for (const auto& img : images) {
      for (std::size_t j = 0; j < iters.size(); ++j) {
        const auto t0 = Clock::now();
        erase_any_size(params, img, iters[j]);
        const auto t1 = Clock::now();
        samples[j].push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      }
    }
  }
  std::vector<BenchRow> rows;
  for (std::size_t j = 0; j < iters.size(); ++j) {
    const auto& v = samples[j];
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
    rows.push_back({iters[j], mean, sd});
  }
  return rows;
}

double mean_pair_psnr(const PenParams& params, const std::vector<SamplePair>& pairs, int iterations) {
  if (pairs.empty()) fail(ErrorCode::kEmptyDataset, "no pairs");
  double acc = 0.0;
  for (const auto& p : pairs) {
    const Image out = erase_any_size(params, p.original, iterations).final;
    acc += std::min(100.0, psnr(out, p.erased_gt.channels() == 3 ? p.erased_gt : to_rgb(p.erased_gt)));
  }
  return acc / static_cast<double>(pairs.size());
}

}  // namespace pen
