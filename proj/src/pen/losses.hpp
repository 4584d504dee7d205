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

#ifndef PEN_LOSSES_HPP_
#define PEN_LOSSES_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace pen {

struct LossWeights {
  double lambda_r1 = 10.0;
  double lambda_r2 = 2.0;
  double lambda_c = 0.1;
  double lambda_s = 150.0;
  double lambda_a = 0.1;
  // Auxiliary stroke BCE used while the stroke module trains jointly.
  double lambda_stroke = 1.0;

  void validate() const;
};

enum class FeatureInit { kAuto, kRequired, kRandom };

struct FeatureConfig {
  FeatureInit init = FeatureInit::kAuto;
  // 1-based pooling stages of the VGG-16 stack whose outputs are compared.
  std::vector<int> layers{1, 2, 3};
  // Tensor container with "block<i>.conv<j>.{weight,bias}" entries.
  std::string weights_path;
  // Channel widths are VGG-16's divided by this (1 = the real network).
  int width_div = 1;
  std::uint64_t seed = 1234;

  void validate() const;
};

// Frozen VGG-16-shaped convolution stack returning the requested pooling
// outputs. Its parameters never require gradients; gradients still flow to
// its inputs.
class FeatureExtractorImpl : public torch::nn::Module {
 public:
  explicit FeatureExtractorImpl(const FeatureConfig& cfg);

  // (N,3,H,W) in [0,1] -> one tensor per configured layer, in order.
  std::vector<torch::Tensor> forward(const torch::Tensor& x);
  bool pretrained() const { return pretrained_; }
  const FeatureConfig& config() const { return cfg_; }

 private:
  FeatureConfig cfg_;
  std::vector<torch::nn::Sequential> blocks_;
  bool pretrained_ = false;
};
TORCH_MODULE(FeatureExtractor);

FeatureExtractor make_feature_extractor(const FeatureConfig& cfg);

// Soft stroke map max_c |img - erased|, (N,C,H,W) -> (N,1,H,W). No threshold,
// so it stays differentiable.
torch::Tensor extract_stroke(const torch::Tensor& image, const torch::Tensor& erased);

// Mean over samples of the mean absolute difference between paired masks.
torch::Tensor self_supervised_loss(const std::vector<torch::Tensor>& strokes_a,
                                   const std::vector<torch::Tensor>& strokes_b);
// Batched form: row i of a is paired with row i of b.
torch::Tensor self_supervised_loss(const torch::Tensor& strokes_a, const torch::Tensor& strokes_b);

// lambda_r1 * mean|S*(out-gt)| + lambda_r2 * mean|(1-S)*(out-gt)|, means over
// every pixel and channel; S broadcasts over channels.
torch::Tensor reconstruction_loss(const torch::Tensor& out, const torch::Tensor& gt,
                                  const torch::Tensor& stroke, const LossWeights& w);

// gt*(1-S) + out*S.
torch::Tensor compose_image(const torch::Tensor& out, const torch::Tensor& gt,
                            const torch::Tensor& stroke);

// Sum over layers of mean|phi(out)-phi(gt)| + mean|phi(composed)-phi(gt)|.
torch::Tensor content_loss(const torch::Tensor& out, const torch::Tensor& gt,
                           const torch::Tensor& composed, FeatureExtractor& fx);

// phi flattened to (N, c, h*w); returns phi phi^T / (h*w*c), shape (N,c,c).
torch::Tensor gram_matrix(const torch::Tensor& features);

// Sum over layers of mean|Gram(phi(out)) - Gram(phi(gt))|.
torch::Tensor style_loss(const torch::Tensor& out, const torch::Tensor& gt, FeatureExtractor& fx);

struct LossTerms {
  double reconstruction = 0.0;
  double content = 0.0;
  double style = 0.0;
  double adversarial = 0.0;
};

// L_r + lambda_c L_c + lambda_s L_s + lambda_a L_a. Throws NonFiniteTerm.
double total_loss(const LossTerms& terms, const LossWeights& w);
torch::Tensor total_loss(const torch::Tensor& reconstruction, const torch::Tensor& content,
                         const torch::Tensor& style, const torch::Tensor& adversarial,
                         const LossWeights& w);

}  // namespace pen

#endif  // PEN_LOSSES_HPP_
