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

#ifndef PEN_PIPELINE_HPP_
#define PEN_PIPELINE_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "pen/augment.hpp"
#include "pen/config.hpp"
#include "pen/discriminator.hpp"
#include "pen/imagecore.hpp"
#include "pen/losses.hpp"
#include "pen/metrics.hpp"
#include "pen/network.hpp"
#include "pen/synthgen.hpp"

namespace pen {

enum class Stage { kStrokeInit = 0, kStage1 = 1, kStage2 = 2, kStage3 = 3 };

// "stroke_init", "stage1_gan_init", "stage2_selfsup", "stage3_finetune".
std::string_view stage_tag(Stage stage);
// Accepts the tags above and the CLI spellings "stroke-init", "1", "2", "3".
Stage parse_stage(std::string_view text);

struct TrainConfig {
  Stage stage = Stage::kStrokeInit;
  double lr_gen = 1e-4;
  std::array<double, 2> betas_gen{0.5, 0.9};
  double lr_disc = 1e-5;
  std::array<double, 2> betas_disc{0.0, 0.9};
  int batch_size = 2;
  int steps = 200;
  std::uint64_t seed = 0;
  int input_size = 64;
  bool deterministic = false;
  bool augment = true;
  // Periodic checkpoint cadence in steps; 0 writes only at the end.
  int checkpoint_every = 0;
  std::filesystem::path checkpoint_path;
  // Stop after this many total steps of the stage without marking it done
  // (0: run to steps). Used to produce mid-run checkpoints.
  int stop_at = 0;
  // Skip stage-order checks.
  bool force = false;

  LossWeights weights;
  NetConfig net;
  DiscConfig disc;
  FeatureConfig features;
  AugmentConfig aug;
  double stroke_tau = kDefaultStrokeTau;

  void validate() const;
};

// Reads every train.*, net.*, disc.*, loss.*, features.* and augment.* key.
TrainConfig train_config_from(const Config& cfg, Stage stage = Stage::kStrokeInit);
MetricSettings metric_settings_from(const Config& cfg);
SynthOptions synth_options_from(const Config& cfg);

struct LossRecord {
  std::int64_t step = 0;
  std::string name;
  double value = 0.0;

  bool operator==(const LossRecord&) const = default;
};

struct StageState {
  PenParams params;
  // Present once a stage with adversarial training has run.
  TwoStreamDiscriminator disc{nullptr};
  // Tag of the stage that produced this state; empty for fresh parameters.
  std::string tag;
  bool complete = false;
  // Steps taken in the stage named by tag.
  std::int64_t step = 0;
  std::vector<LossRecord> loss_history;
  // torch::serialize archives of the Adam states.
  std::string gen_optimizer;
  std::string disc_optimizer;
};

StageState fresh_state(const TrainConfig& cfg);

// Image reader used for all training data; tests inject instrumented ones.
using ImageLoader = std::function<Image(const std::filesystem::path&)>;

struct TrainHooks {
  ImageLoader load = load_image;
  std::function<void(const LossRecord&)> on_record;
};

StageState train_stroke_init(const TrainConfig& cfg, const DatasetIndex& data, StageState state,
                             const TrainHooks& hooks = {});
// Alternates generator (odd steps) and discriminator (even steps) updates;
// the stroke module is frozen.
StageState train_stage1(const TrainConfig& cfg, const DatasetIndex& data, StageState state,
                        const TrainHooks& hooks = {});
// Only entries' original_path is ever read.
StageState train_stage2_selfsup(const TrainConfig& cfg, const DatasetIndex& unlabeled,
                                StageState state, const TrainHooks& hooks = {});
StageState train_stage3_finetune(const TrainConfig& cfg, const DatasetIndex& data, StageState state,
                                 const TrainHooks& hooks = {});

// Mean self-supervised loss over a fixed set of variant pairs drawn from
// probe_seed, `rounds` pairs per image. No parameter is touched.
double self_supervised_probe(const TrainConfig& cfg, const StageState& state,
                             const DatasetIndex& unlabeled, std::uint64_t probe_seed, int rounds,
                             const TrainHooks& hooks = {});
// Mean self-supervised loss of state on the exact variant batches that
// stage-2 training with cfg draws at steps first_step..last_step.
double self_supervised_replay(const TrainConfig& cfg, const StageState& state,
                              const DatasetIndex& unlabeled, std::int64_t first_step,
                              std::int64_t last_step, const TrainHooks& hooks = {});
// Dispatches on cfg.stage.
StageState train_stage(const TrainConfig& cfg, const DatasetIndex& data, StageState state,
                       const TrainHooks& hooks = {});

// Images of dir (or dir/images when present) as a label-free index.
DatasetIndex index_unlabeled(const std::filesystem::path& dir);

// Loads pairs, resizes them to size x size and derives the stroke target.
std::vector<SamplePair> load_training_pairs(const DatasetIndex& data, int size, double tau,
                                            const ImageLoader& load = load_image);

// Inference-only drops the discriminator and optimizer states.
void save_checkpoint(const std::filesystem::path& path, const StageState& state,
                     bool inference_only = false);
// Rebuilds the network from the stored config. Throws CheckpointError on a
// corrupt file or a config-hash mismatch, including against expected_net.
StageState load_checkpoint(const std::filesystem::path& path, const NetConfig* expected_net = nullptr);

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& history);
std::vector<LossRecord> read_loss_csv(const std::filesystem::path& path);

struct InferenceOptions {
  int iterations = 0;  // 0: the checkpoint's configured count
  bool intermediates = false;
};

// Writes out_dir/<stem>.png, out_dir/masks/<stem>.png and, optionally,
// out_dir/iter<k>/<stem>.png. Inputs of any size are edge-padded to a
// multiple of 16 and cropped back. Returns the number of images.
std::size_t run_inference(const PenParams& params, const std::filesystem::path& in_dir,
                          const std::filesystem::path& out_dir, const InferenceOptions& opts = {});

// Pads by edge replication to a multiple of 16, erases, crops back.
EraseResult erase_any_size(const PenParams& params, const Image& image, int iterations);

struct BenchRow {
  int iterations = 0;
  double mean_ms = 0.0;
  double stddev_ms = 0.0;
};

// Times erase_progressive for every count in iters over every image,
// interleaving the counts within each repeat.
std::vector<BenchRow> benchmark_iterations(const PenParams& params, const std::vector<Image>& images,
                                           const std::vector<int>& iters, int repeats = 3);

// Mean PSNR of erase_progressive(original) against erased_gt. Infinite
// values are capped at 100 dB.
double mean_pair_psnr(const PenParams& params, const std::vector<SamplePair>& pairs, int iterations);

}  // namespace pen

#endif  // PEN_PIPELINE_HPP_
