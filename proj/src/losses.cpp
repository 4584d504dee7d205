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

#include "pen/losses.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <mutex>

#include "pen/checkpoint.hpp"
#include "pen/error.hpp"

namespace pen {

namespace {

constexpr int kVggConvs[5] = {2, 2, 3, 3, 3};
constexpr int kVggWidths[5] = {64, 128, 256, 512, 512};

std::mutex g_feature_seed_mutex;

void check_same(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (!a.sizes().equals(b.sizes())) {
    fail(ErrorCode::kShapeMismatch, std::string(what) + ": tensor shapes differ");
  }
}

void check_stroke(const torch::Tensor& img, const torch::Tensor& stroke) {
  if (stroke.dim() != 4 || img.dim() != 4 || stroke.size(1) != 1 || stroke.size(0) != img.size(0) ||
      stroke.size(2) != img.size(2) || stroke.size(3) != img.size(3)) {
    fail(ErrorCode::kShapeMismatch, "stroke mask must be (N,1,H,W) matching the image");
  }
}

}  // namespace

void LossWeights::validate() const {
  for (double v : {lambda_r1, lambda_r2, lambda_c, lambda_s, lambda_a, lambda_stroke}) {
    if (!(v >= 0.0) || !std::isfinite(v)) fail(ErrorCode::kConfigError, "loss weights must be finite and >= 0");
  }
}

void FeatureConfig::validate() const {
  if (layers.empty()) fail(ErrorCode::kConfigError, "features.layers must not be empty");
  for (int l : layers) {
    if (l < 1 || l > 5) fail(ErrorCode::kConfigError, "features.layers entries must be in [1, 5]");
  }
  if (width_div < 1) fail(ErrorCode::kConfigError, "features.width_div must be >= 1");
}

FeatureExtractorImpl::FeatureExtractorImpl(const FeatureConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int depth = *std::max_element(cfg_.layers.begin(), cfg_.layers.end());
  int in = 3;
  for (int b = 0; b < depth; ++b) {
    const int width = std::max(1, kVggWidths[b] / cfg_.width_div);
    torch::nn::Sequential block;
    for (int c = 0; c < kVggConvs[b]; ++c) {
      block->push_back("conv" + std::to_string(c + 1),
                       torch::nn::Conv2d(torch::nn::Conv2dOptions(in, width, 3).padding(1)));
      block->push_back("relu" + std::to_string(c + 1), torch::nn::ReLU());
      in = width;
    }
    block->push_back("pool", torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(2).stride(2)));
    blocks_.push_back(register_module("block" + std::to_string(b + 1), block));
  }
  register_buffer("mean", torch::tensor({0.485, 0.456, 0.406}, torch::kFloat32).view({1, 3, 1, 1}));
  register_buffer("std", torch::tensor({0.229, 0.224, 0.225}, torch::kFloat32).view({1, 3, 1, 1}));

  bool have_file = !cfg_.weights_path.empty() && std::filesystem::is_regular_file(cfg_.weights_path);
  if (cfg_.init == FeatureInit::kRequired && !have_file) {
    fail(ErrorCode::kConfigError,
         "features.pretrained=required but no weights file at '" + cfg_.weights_path + "'");
  }
  torch::NoGradGuard guard;
  if (have_file && cfg_.init != FeatureInit::kRandom) {
    const TensorContainer file = read_container(cfg_.weights_path);
    for (auto& item : named_parameters(true)) {
      const torch::Tensor* src = file.find(item.key());
      if (!src || !src->sizes().equals(item.value().sizes())) {
        fail(ErrorCode::kConfigError, "feature weights file lacks a matching '" + item.key() + "'");
      }
      item.value().copy_(*src);
    }
    pretrained_ = true;
  } else {
    for (auto& item : named_parameters(true)) {
      if (item.value().dim() == 4) {
        torch::nn::init::kaiming_normal_(item.value(), 0.0, torch::kFanIn, torch::kReLU);
      } else {
        item.value().zero_();
      }
    }
  }
  for (auto& p : parameters()) p.set_requires_grad(false);
  eval();
}

std::vector<torch::Tensor> FeatureExtractorImpl::forward(const torch::Tensor& x) {
  auto mean = named_buffers()["mean"];
  auto stdv = named_buffers()["std"];
  torch::Tensor y = (x - mean) / stdv;
  std::vector<torch::Tensor> out;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    y = blocks_[b]->forward(y);
    const int stage = static_cast<int>(b) + 1;
    if (std::find(cfg_.layers.begin(), cfg_.layers.end(), stage) != cfg_.layers.end()) {
      out.push_back(y);
    }
  }
  return out;
}

FeatureExtractor make_feature_extractor(const FeatureConfig& cfg) {
  std::lock_guard<std::mutex> lock(g_feature_seed_mutex);
  torch::manual_seed(cfg.seed);
  return FeatureExtractor(cfg);
}

torch::Tensor extract_stroke(const torch::Tensor& image, const torch::Tensor& erased) {
  check_same(image, erased, "extract_stroke");
  return (image - erased).abs().amax(1, true);
}

torch::Tensor self_supervised_loss(const std::vector<torch::Tensor>& strokes_a,
                                   const std::vector<torch::Tensor>& strokes_b) {
  if (strokes_a.size() != strokes_b.size()) {
    fail(ErrorCode::kLengthMismatch, "stroke lists differ in length");
  }
  if (strokes_a.empty()) fail(ErrorCode::kLengthMismatch, "stroke lists are empty");
  torch::Tensor acc;
  for (std::size_t i = 0; i < strokes_a.size(); ++i) {
    check_same(strokes_a[i], strokes_b[i], "self_supervised_loss");
    auto term = (strokes_a[i] - strokes_b[i]).abs().mean();
    acc = acc.defined() ? acc + term : term;
  }
  return acc / static_cast<double>(strokes_a.size());
}

torch::Tensor self_supervised_loss(const torch::Tensor& strokes_a, const torch::Tensor& strokes_b) {
  check_same(strokes_a, strokes_b, "self_supervised_loss");
  // Equal-sized samples make the mean of per-sample means the global mean.
  return (strokes_a - strokes_b).abs().mean();
}

torch::Tensor reconstruction_loss(const torch::Tensor& out, const torch::Tensor& gt,
                                  const torch::Tensor& stroke, const LossWeights& w) {
  check_same(out, gt, "reconstruction_loss");
  check_stroke(out, stroke);
  const auto diff = out - gt;
  return w.lambda_r1 * (stroke * diff).abs().mean() + w.lambda_r2 * ((1.0 - stroke) * diff).abs().mean();
}

torch::Tensor compose_image(const torch::Tensor& out, const torch::Tensor& gt,
                            const torch::Tensor& stroke) {
  check_same(out, gt, "compose_image");
  check_stroke(out, stroke);
  return gt * (1.0 - stroke) + out * stroke;
}

torch::Tensor content_loss(const torch::Tensor& out, const torch::Tensor& gt,
                           const torch::Tensor& composed, FeatureExtractor& fx) {
  check_same(out, gt, "content_loss");
  check_same(composed, gt, "content_loss");
  const auto f_out = fx->forward(out);
  const auto f_gt = fx->forward(gt);
  const auto f_comp = fx->forward(composed);
  torch::Tensor acc = torch::zeros({}, out.options());
  for (std::size_t n = 0; n < f_gt.size(); ++n) {
    acc = acc + (f_out[n] - f_gt[n]).abs().mean() + (f_comp[n] - f_gt[n]).abs().mean();
  }
  return acc;
}

torch::Tensor gram_matrix(const torch::Tensor& features) {
  const auto n = features.size(0);
  const auto c = features.size(1);
  const auto hw = features.size(2) * features.size(3);
  const auto flat = features.reshape({n, c, hw});
  return torch::bmm(flat, flat.transpose(1, 2)) / static_cast<double>(c * hw);
}

torch::Tensor style_loss(const torch::Tensor& out, const torch::Tensor& gt, FeatureExtractor& fx) {
  check_same(out, gt, "style_loss");
  const auto f_out = fx->forward(out);
  const auto f_gt = fx->forward(gt);
  torch::Tensor acc = torch::zeros({}, out.options());
  for (std::size_t n = 0; n < f_gt.size(); ++n) {
    acc = acc + (gram_matrix(f_out[n]) - gram_matrix(f_gt[n])).abs().mean();
  }
  return acc;
}

double total_loss(const LossTerms& t, const LossWeights& w) {
  for (double v : {t.reconstruction, t.content, t.style, t.adversarial}) {
    if (!std::isfinite(v)) fail(ErrorCode::kNonFiniteTerm, "loss term is not finite");
  }
  return t.reconstruction + w.lambda_c * t.content + w.lambda_s * t.style + w.lambda_a * t.adversarial;
}

torch::Tensor total_loss(const torch::Tensor& reconstruction, const torch::Tensor& content,
                         const torch::Tensor& style, const torch::Tensor& adversarial,
                         const LossWeights& w) {
  for (const auto* t : {&reconstruction, &content, &style, &adversarial}) {
    if (!std::isfinite(t->item<double>())) fail(ErrorCode::kNonFiniteTerm, "loss term is not finite");
  }
  return reconstruction + w.lambda_c * content + w.lambda_s * style + w.lambda_a * adversarial;
}

}  // namespace pen
