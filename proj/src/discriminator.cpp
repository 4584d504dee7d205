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

#include "pen/discriminator.hpp"

#include <mutex>

#include "pen/error.hpp"
#include "pen/network.hpp"

namespace F = torch::nn::functional;

namespace pen {

namespace {

std::mutex g_disc_seed_mutex;

torch::Tensor l2_normalize(const torch::Tensor& x) { return x / (x.norm() + 1e-12); }

torch::Tensor pad_to_multiple(const torch::Tensor& x, int multiple) {
  const auto h = x.size(2);
  const auto w = x.size(3);
  const auto ph = (multiple - h % multiple) % multiple;
  const auto pw = (multiple - w % multiple) % multiple;
  if (ph == 0 && pw == 0) return x;
  return F::pad(x, F::PadFuncOptions({0, pw, 0, ph}).mode(torch::kConstant).value(0.0));
}

}  // namespace

void DiscConfig::validate() const {
  if (base_channels < 1) fail(ErrorCode::kConfigError, "disc.base_channels must be >= 1");
  if (layers < 1 || layers > 8) fail(ErrorCode::kConfigError, "disc.layers must be in [1, 8]");
  if (warmup_power_iterations < 0) fail(ErrorCode::kConfigError, "warmup iterations must be >= 0");
}

SpectralConv2dImpl::SpectralConv2dImpl(int in, int out) {
  torch::nn::Conv2d proto(torch::nn::Conv2dOptions(in, out, 4).stride(2).padding(1));
  weight_orig_ = register_parameter("weight_orig", proto->weight.detach().clone());
  bias_ = register_parameter("bias", proto->bias.detach().clone());
  u_ = register_buffer("u", l2_normalize(torch::randn({out})));
  v_ = register_buffer("v", l2_normalize(torch::randn({in * 16})));
}

void SpectralConv2dImpl::power_iterate(int steps) {
  torch::NoGradGuard guard;
  const auto mat = weight_orig_.reshape({weight_orig_.size(0), -1});
  for (int i = 0; i < steps; ++i) {
    v_.copy_(l2_normalize(torch::mv(mat.t(), u_)));
    u_.copy_(l2_normalize(torch::mv(mat, v_)));
  }
}

torch::Tensor SpectralConv2dImpl::normalized_weight() {
  if (is_training()) power_iterate(1);
  const auto mat = weight_orig_.reshape({weight_orig_.size(0), -1});
  // Clones keep the autograd graph valid when a later forward refines u, v in place.
  const auto sigma = torch::dot(u_.clone(), torch::mv(mat, v_.clone()));
  return weight_orig_ / sigma;
}

torch::Tensor SpectralConv2dImpl::forward(const torch::Tensor& x) {
  return F::conv2d(x, normalized_weight(), F::Conv2dFuncOptions().bias(bias_).stride(2).padding(1));
}

DiscStreamImpl::DiscStreamImpl(const DiscConfig& cfg) {
  int in = 3;
  for (int i = 0; i < cfg.layers; ++i) {
    const int out = cfg.base_channels * (1 << std::min(i, 3));
    convs_.push_back(register_module("conv" + std::to_string(i), SpectralConv2d(in, out)));
    in = out;
  }
  out_channels_ = in;
}

torch::Tensor DiscStreamImpl::forward(const torch::Tensor& x) {
  torch::Tensor y = x;
  for (auto& c : convs_) y = F::leaky_relu(c(y), F::LeakyReLUFuncOptions().negative_slope(0.2));
  return y.mean({2, 3});
}

TwoStreamDiscriminatorImpl::TwoStreamDiscriminatorImpl(const DiscConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  global_ = register_module("global", DiscStream(cfg_));
  local_ = register_module("local", DiscStream(cfg_));
  fusion_ = register_module("fusion", torch::nn::Linear(2 * global_->out_channels(), 1));
  for (auto& c : all_convs()) c->power_iterate(cfg_.warmup_power_iterations);
}

std::vector<SpectralConv2d> TwoStreamDiscriminatorImpl::all_convs() {
  std::vector<SpectralConv2d> out = global_->convs();
  for (auto& c : local_->convs()) out.push_back(c);
  return out;
}

torch::Tensor TwoStreamDiscriminatorImpl::forward(const torch::Tensor& image,
                                                  const torch::Tensor& stroke,
                                                  const torch::Tensor& gt) {
  if (image.dim() != 4 || stroke.dim() != 4 || image.size(0) != stroke.size(0) ||
      image.size(2) != stroke.size(2) || image.size(3) != stroke.size(3) || stroke.size(1) != 1) {
    fail(ErrorCode::kBadShape, "discriminator expects (N,3,H,W) image and (N,1,H,W) stroke");
  }
  const torch::Tensor background = gt.defined() ? gt.detach() : image;
  if (!background.sizes().equals(image.sizes())) {
    fail(ErrorCode::kBadShape, "discriminator ground truth differs in shape from image");
  }
  const auto local_in = stroke * image + (1.0 - stroke) * background;
  const int m = cfg_.input_multiple();
  const auto g = global_(pad_to_multiple(image * 2.0 - 1.0, m));
  const auto l = local_(pad_to_multiple(local_in * 2.0 - 1.0, m));
  return fusion_(torch::cat({g, l}, 1)).squeeze(1);
}

TwoStreamDiscriminator make_discriminator(const DiscConfig& cfg, std::uint64_t seed) {
  std::lock_guard<std::mutex> lock(g_disc_seed_mutex);
  torch::manual_seed(seed);
  return TwoStreamDiscriminator(cfg);
}

TwoStreamDiscriminator clone_discriminator(const TwoStreamDiscriminator& disc) {
  const auto& src = *disc.ptr();
  TwoStreamDiscriminator copy(src.config());
  torch::NoGradGuard guard;
  const auto params = src.named_parameters(true);
  const auto buffers = src.named_buffers(true);
  for (auto& item : copy->named_parameters(true)) item.value().copy_(params[item.key()]);
  for (auto& item : copy->named_buffers(true)) item.value().copy_(buffers[item.key()]);
  copy->train(src.is_training());
  return copy;
}

double disc_forward(TwoStreamDiscriminator& disc, const Image& image, const StrokeMask& stroke_gt,
                    const Image* gt) {
  if (stroke_gt.height() != image.height() || stroke_gt.width() != image.width()) {
    fail(ErrorCode::kBadShape, "stroke mask and image differ in size");
  }
  if (gt && (gt->height() != image.height() || gt->width() != image.width())) {
    fail(ErrorCode::kBadShape, "ground truth and image differ in size");
  }
  const bool was_training = disc->is_training();
  disc->eval();
  torch::NoGradGuard guard;
  const auto dtype = disc->fusion_head()->weight.scalar_type();
  const auto img = image_to_tensor(image).to(dtype);
  const auto s = mask_to_tensor(stroke_gt).to(dtype);
  const auto g = gt ? image_to_tensor(*gt).to(dtype) : torch::Tensor();
  const double score = disc->forward(img, s, g).item<double>();
  disc->train(was_training);
  return score;
}

torch::Tensor hinge_disc_loss(const torch::Tensor& real_scores, const torch::Tensor& fake_scores) {
  return torch::relu(1.0 - real_scores).mean() + torch::relu(1.0 + fake_scores).mean();
}

torch::Tensor generator_adv_loss(const torch::Tensor& fake_scores) { return -fake_scores.mean(); }

torch::Tensor disc_loss(TwoStreamDiscriminator& disc, const torch::Tensor& real,
                        const torch::Tensor& fake, const torch::Tensor& stroke_gt) {
  if (!real.sizes().equals(fake.sizes())) fail(ErrorCode::kBadShape, "real and fake differ in shape");
  const auto real_scores = disc->forward(real, stroke_gt, real);
  const auto fake_scores = disc->forward(fake.detach(), stroke_gt, real);
  return hinge_disc_loss(real_scores, fake_scores);
}

torch::Tensor adversarial_loss(TwoStreamDiscriminator& disc, const torch::Tensor& fake,
                               const torch::Tensor& stroke_gt, const torch::Tensor& gt) {
  return generator_adv_loss(disc->forward(fake, stroke_gt, gt));
}

double top_singular_value(const torch::Tensor& weight) {
  const auto mat = weight.detach().to(torch::kFloat64).reshape({weight.size(0), -1});
  return torch::linalg_svdvals(mat).max().item<double>();
}

}  // namespace pen
