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

#ifndef PEN_DISCRIMINATOR_HPP_
#define PEN_DISCRIMINATOR_HPP_

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "pen/imagecore.hpp"

namespace pen {

struct DiscConfig {
  // Channel progression base, base*2, base*4, base*8, base*8, base*8.
  int base_channels = 64;
  int layers = 6;
  // Power iterations run once at construction so the first normalized
  // forward already uses a converged singular-vector estimate.
  int warmup_power_iterations = 50;

  void validate() const;
  // Input sides are zero-padded up to a multiple of this.
  int input_multiple() const { return 1 << layers; }
};

// 4x4 stride-2 convolution whose weight is divided by a running estimate of
// its largest singular value. One power iteration refines the estimate on
// every forward in training mode; eval-mode forwards leave it untouched.
class SpectralConv2dImpl : public torch::nn::Module {
 public:
  SpectralConv2dImpl(int in, int out);
  torch::Tensor forward(const torch::Tensor& x);

  torch::Tensor normalized_weight();
  void power_iterate(int steps);
  torch::Tensor weight_orig() const { return weight_orig_; }
  torch::Tensor bias() const { return bias_; }

 private:
  torch::Tensor weight_orig_, bias_, u_, v_;
};
TORCH_MODULE(SpectralConv2d);

class DiscStreamImpl : public torch::nn::Module {
 public:
  explicit DiscStreamImpl(const DiscConfig& cfg);
  // (N,3,H,W) -> (N,C) globally averaged features.
  torch::Tensor forward(const torch::Tensor& x);
  std::vector<SpectralConv2d>& convs() { return convs_; }
  int out_channels() const { return out_channels_; }

 private:
  std::vector<SpectralConv2d> convs_;
  int out_channels_ = 0;
};
TORCH_MODULE(DiscStream);

// Global stream sees the image, local stream sees the stroke-region
// composite S*img + (1-S)*gt; averaged features are concatenated and mapped
// to one unbounded score per sample.
class TwoStreamDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit TwoStreamDiscriminatorImpl(const DiscConfig& cfg);

  // image (N,3,H,W), stroke (N,1,H,W), gt (N,3,H,W) or undefined (= image).
  // Returns (N) scores.
  torch::Tensor forward(const torch::Tensor& image, const torch::Tensor& stroke,
                        const torch::Tensor& gt = {});

  DiscStream& global_stream() { return global_; }
  DiscStream& local_stream() { return local_; }
  torch::nn::Linear& fusion_head() { return fusion_; }
  std::vector<SpectralConv2d> all_convs();
  const DiscConfig& config() const { return cfg_; }

 private:
  DiscConfig cfg_;
  DiscStream global_{nullptr};
  DiscStream local_{nullptr};
  torch::nn::Linear fusion_{nullptr};
};
TORCH_MODULE(TwoStreamDiscriminator);

TwoStreamDiscriminator make_discriminator(const DiscConfig& cfg, std::uint64_t seed);
// Deep copy: parameters and power-iteration buffers.
TwoStreamDiscriminator clone_discriminator(const TwoStreamDiscriminator& disc);

// Image-level scoring; eval mode, no gradient.
double disc_forward(TwoStreamDiscriminator& disc, const Image& image, const StrokeMask& stroke_gt,
                    const Image* gt = nullptr);

// mean(relu(1 - real)) + mean(relu(1 + fake)).
torch::Tensor hinge_disc_loss(const torch::Tensor& real_scores, const torch::Tensor& fake_scores);
// -mean(fake).
torch::Tensor generator_adv_loss(const torch::Tensor& fake_scores);

// Critic objective. fake is detached; the local stream composites with gt.
torch::Tensor disc_loss(TwoStreamDiscriminator& disc, const torch::Tensor& real,
                        const torch::Tensor& fake, const torch::Tensor& stroke_gt);
// Generator-side adversarial term. Gradients reach fake; the caller steps only
// generator parameters.
torch::Tensor adversarial_loss(TwoStreamDiscriminator& disc, const torch::Tensor& fake,
                               const torch::Tensor& stroke_gt, const torch::Tensor& gt);

// Largest singular value of a (out, in*k*k)-reshaped weight via full SVD.
double top_singular_value(const torch::Tensor& weight);

}  // namespace pen

#endif  // PEN_DISCRIMINATOR_HPP_
