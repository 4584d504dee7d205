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

#ifndef PEN_NETWORK_HPP_
#define PEN_NETWORK_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "pen/imagecore.hpp"

namespace pen {

struct NetConfig {
  int base_channels = 32;
  int iterations = 3;
  std::vector<int> dilation_rates{2, 4, 8, 16};
  // Residual blocks per stroke-encoder stage.
  int stroke_blocks = 2;
  // Predict a fresh stroke mask before every erasing pass instead of once.
  bool repredict_stroke = false;

  void validate() const;
  // Fields that determine parameter shapes. Iteration count and the
  // re-prediction flag are excluded: the same weights serve any K.
  std::string architecture_string() const;
};

// 16 hex digits of FNV-1a over architecture_string().
std::string config_hash(const NetConfig& cfg);

// Deterministic mode: single-threaded intra-op execution and deterministic
// kernels only.
void set_deterministic(bool on);
bool deterministic_mode();

namespace nets {

class ConvNormReluImpl : public torch::nn::Module {
 public:
  ConvNormReluImpl(int in, int out, int stride = 1, int dilation = 1);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv_{nullptr};
  torch::nn::InstanceNorm2d norm_{nullptr};
};
TORCH_MODULE(ConvNormRelu);

// ResNet basic block with instance norm and an optional projection shortcut.
class BasicBlockImpl : public torch::nn::Module {
 public:
  BasicBlockImpl(int in, int out, int stride);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
  torch::nn::InstanceNorm2d norm1_{nullptr}, norm2_{nullptr};
  torch::nn::Sequential shortcut_{nullptr};
};
TORCH_MODULE(BasicBlock);

// Encoder (four stride-2 ResNet stages, 1/16 resolution at the bottom) and a
// decoder of four x2 upsamplings whose outputs are summed with the matching
// encoder features. Ends in a sigmoid mask head.
class StrokeModuleImpl : public torch::nn::Module {
 public:
  StrokeModuleImpl(int base_channels, int blocks_per_stage);
  torch::Tensor forward(const torch::Tensor& image);

 private:
  ConvNormRelu stem_{nullptr};
  std::vector<torch::nn::Sequential> stages_;
  std::vector<ConvNormRelu> up_;
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(StrokeModule);

// Skip transform applied to encoder features before they join the decoder:
// 1x1 reduce, two 3x3, 1x1 restore, added to the identity.
class ResidualSkipImpl : public torch::nn::Module {
 public:
  explicit ResidualSkipImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d reduce_{nullptr}, conv1_{nullptr}, conv2_{nullptr}, restore_{nullptr};
};
TORCH_MODULE(ResidualSkip);

// U-Net over concat(image, stroke): four stride-2 encoder stages, a chain of
// dilated convolutions at the deepest level, and four nearest-upsample +
// conv decoder stages that add the residual-skip-transformed encoder features.
class ErasingModuleImpl : public torch::nn::Module {
 public:
  ErasingModuleImpl(int base_channels, const std::vector<int>& dilation_rates);
  torch::Tensor forward(const torch::Tensor& image, const torch::Tensor& stroke);

 private:
  ConvNormRelu stem_{nullptr};
  std::vector<torch::nn::Sequential> down_;
  torch::nn::Sequential bottleneck_{nullptr};
  std::vector<ConvNormRelu> up_;
  std::vector<ResidualSkip> skips_;
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(ErasingModule);

}  // namespace nets

struct ProgressiveOutput {
  torch::Tensor final;
  std::vector<torch::Tensor> intermediates;
  torch::Tensor stroke;
};

// Generator: one stroke module and one erasing module whose weights are
// reused by every erasing pass.
class PenNetImpl : public torch::nn::Module {
 public:
  explicit PenNetImpl(const NetConfig& cfg);

  // (N,3,H,W) in [0,1] -> (N,1,H,W) in (0,1).
  torch::Tensor predict_stroke(const torch::Tensor& image);
  torch::Tensor erase_once(const torch::Tensor& image, const torch::Tensor& stroke);
  // Runs `iterations` erasing passes starting from image. When stroke is
  // undefined it is predicted from image first.
  ProgressiveOutput erase_progressive(const torch::Tensor& image, int iterations,
                                      torch::Tensor stroke = {});

  nets::StrokeModule& stroke_module() { return stroke_; }
  nets::ErasingModule& erasing_module() { return erase_; }
  const NetConfig& config() const { return cfg_; }

 private:
  NetConfig cfg_;
  nets::StrokeModule stroke_{nullptr};
  nets::ErasingModule erase_{nullptr};
};
TORCH_MODULE(PenNet);

// Complete learnable generator state plus the config it was built from.
// Parameter names are prefixed "stroke." and "erase.".
struct PenParams {
  NetConfig cfg;
  std::string hash;
  PenNet net{nullptr};

  std::vector<std::pair<std::string, torch::Tensor>> named_arrays() const;
  std::int64_t parameter_count() const;
  std::vector<torch::Tensor> stroke_parameters() const;
  std::vector<torch::Tensor> erase_parameters() const;
  // Deep copy of all arrays.
  PenParams clone() const;
};

struct EraseResult {
  Image final;
  std::vector<Image> intermediates;
  StrokeMask stroke;
};

PenParams init_params(const NetConfig& cfg, std::uint64_t seed);

StrokeMask forward_stroke(const PenParams& params, const Image& image);
Image erase_once(const PenParams& params, const Image& image, const StrokeMask& stroke);
// Uses cfg.iterations when iterations <= 0.
EraseResult erase_progressive(const PenParams& params, const Image& image, int iterations = 0);

// Throws BadShape unless H and W are positive multiples of 16.
void check_network_shape(int height, int width);

torch::Tensor image_to_tensor(const Image& image);
torch::Tensor mask_to_tensor(const StrokeMask& mask);
torch::Tensor images_to_batch(const std::vector<Image>& images);
// Accepts (1,C,H,W) or (C,H,W); clamps to [0,1].
Image tensor_to_image(const torch::Tensor& t);
StrokeMask tensor_to_mask(const torch::Tensor& t);

// Hex digest over the raw bytes of the given arrays, in order.
std::string tensor_digest(const std::vector<torch::Tensor>& tensors);

}  // namespace pen

#endif  // PEN_NETWORK_HPP_
