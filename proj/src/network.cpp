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

#include "pen/network.hpp"

#include <atomic>
#include <cstdio>
#include <mutex>
#include <sstream>

#include "pen/error.hpp"

namespace F = torch::nn::functional;

namespace pen {

namespace {

std::atomic<bool> g_deterministic{false};
std::mutex g_seed_mutex;

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

torch::nn::Conv2d conv(int in, int out, int kernel, int stride = 1, int dilation = 1,
                       bool bias = true) {
  const int pad = dilation * (kernel - 1) / 2;
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, kernel)
                               .stride(stride)
                               .padding(pad)
                               .dilation(dilation)
                               .bias(bias));
}

torch::nn::InstanceNorm2d inorm(int channels) {
  return torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(channels).affine(true));
}

torch::Tensor upsample2(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kNearest));
}

}  // namespace

void NetConfig::validate() const {
  if (base_channels < 1) fail(ErrorCode::kConfigError, "net.base_channels must be >= 1");
  if (iterations < 1) fail(ErrorCode::kConfigError, "net.iterations must be >= 1");
  if (dilation_rates.empty()) fail(ErrorCode::kConfigError, "net.dilation_rates must not be empty");
  for (int r : dilation_rates) {
    if (r < 1) fail(ErrorCode::kConfigError, "dilation rates must be >= 1");
  }
  if (stroke_blocks < 1) fail(ErrorCode::kConfigError, "net.stroke_blocks must be >= 1");
}

std::string NetConfig::architecture_string() const {
  std::ostringstream os;
  os << "pen-v1;base=" << base_channels << ";stroke_blocks=" << stroke_blocks << ";dilation=";
  for (std::size_t i = 0; i < dilation_rates.size(); ++i) {
    os << (i ? "," : "") << dilation_rates[i];
  }
  return os.str();
}

std::string config_hash(const NetConfig& cfg) {
  const std::string s = cfg.architecture_string();
  return hex64(fnv1a(s.data(), s.size()));
}

void set_deterministic(bool on) {
  g_deterministic = on;
  if (on) {
    at::set_num_threads(1);
    at::globalContext().setDeterministicAlgorithms(true, false);
  } else {
    at::globalContext().setDeterministicAlgorithms(false, false);
  }
}

bool deterministic_mode() { return g_deterministic; }

namespace nets {

ConvNormReluImpl::ConvNormReluImpl(int in, int out, int stride, int dilation) {
  conv_ = register_module("conv", conv(in, out, 3, stride, dilation, false));
  norm_ = register_module("norm", inorm(out));
}

torch::Tensor ConvNormReluImpl::forward(const torch::Tensor& x) {
  return torch::relu(norm_(conv_(x)));
}

BasicBlockImpl::BasicBlockImpl(int in, int out, int stride) {
  conv1_ = register_module("conv1", conv(in, out, 3, stride, 1, false));
  norm1_ = register_module("norm1", inorm(out));
  conv2_ = register_module("conv2", conv(out, out, 3, 1, 1, false));
  norm2_ = register_module("norm2", inorm(out));
  if (in != out || stride != 1) {
    shortcut_ = register_module(
        "shortcut",
        torch::nn::Sequential(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1).stride(stride).bias(false)),
                              inorm(out)));
  }
}

torch::Tensor BasicBlockImpl::forward(const torch::Tensor& x) {
  auto y = torch::relu(norm1_(conv1_(x)));
  y = norm2_(conv2_(y));
  return torch::relu(y + (shortcut_ ? shortcut_->forward(x) : x));
}

StrokeModuleImpl::StrokeModuleImpl(int b, int blocks_per_stage) {
  const std::vector<int> ch{b, b, 2 * b, 4 * b, 8 * b};
  stem_ = register_module("stem", ConvNormRelu(3, ch[0]));
  for (int s = 1; s <= 4; ++s) {
    torch::nn::Sequential stage;
    stage->push_back(BasicBlock(ch[s - 1], ch[s], 2));
    for (int k = 1; k < blocks_per_stage; ++k) stage->push_back(BasicBlock(ch[s], ch[s], 1));
    stages_.push_back(register_module("stage" + std::to_string(s), stage));
  }
  for (int s = 4; s >= 1; --s) {
    up_.push_back(register_module("up" + std::to_string(s), ConvNormRelu(ch[s], ch[s - 1])));
  }
  head_ = register_module("head", conv(ch[0], 1, 3));
}

torch::Tensor StrokeModuleImpl::forward(const torch::Tensor& image) {
  std::vector<torch::Tensor> enc;
  enc.push_back(stem_(image));
  for (auto& stage : stages_) enc.push_back(stage->forward(enc.back()));
  torch::Tensor d = enc.back();
  for (int i = 0; i < 4; ++i) {
    d = up_[static_cast<std::size_t>(i)](upsample2(d)) + enc[static_cast<std::size_t>(3 - i)];
  }
  return torch::sigmoid(head_(d));
}

ResidualSkipImpl::ResidualSkipImpl(int channels) {
  const int mid = std::max(1, channels / 2);
  reduce_ = register_module("reduce", conv(channels, mid, 1));
  conv1_ = register_module("conv1", conv(mid, mid, 3));
  conv2_ = register_module("conv2", conv(mid, mid, 3));
  restore_ = register_module("restore", conv(mid, channels, 1));
}

torch::Tensor ResidualSkipImpl::forward(const torch::Tensor& x) {
  auto y = torch::relu(reduce_(x));
  y = torch::relu(conv1_(y));
  y = torch::relu(conv2_(y));
  return x + restore_(y);
}

ErasingModuleImpl::ErasingModuleImpl(int b, const std::vector<int>& dilation_rates) {
  const std::vector<int> ch{b, 2 * b, 4 * b, 8 * b, 8 * b};
  stem_ = register_module("stem", ConvNormRelu(4, ch[0]));
  for (int s = 1; s <= 4; ++s) {
    torch::nn::Sequential stage(ConvNormRelu(ch[s - 1], ch[s], 2), ConvNormRelu(ch[s], ch[s]));
    down_.push_back(register_module("down" + std::to_string(s), stage));
  }
  torch::nn::Sequential bottleneck;
  for (int r : dilation_rates) bottleneck->push_back(ConvNormRelu(ch[4], ch[4], 1, r));
  bottleneck_ = register_module("bottleneck", bottleneck);
  for (int s = 4; s >= 1; --s) {
    up_.push_back(register_module("up" + std::to_string(s), ConvNormRelu(ch[s], ch[s - 1])));
  }
  for (int s = 3; s >= 0; --s) {
    skips_.push_back(register_module("skip" + std::to_string(s), ResidualSkip(ch[s])));
  }
  head_ = register_module("head", conv(ch[0], 3, 3));
}

torch::Tensor ErasingModuleImpl::forward(const torch::Tensor& image, const torch::Tensor& stroke) {
  std::vector<torch::Tensor> enc;
  enc.push_back(stem_(torch::cat({image, stroke}, 1)));
  for (auto& stage : down_) enc.push_back(stage->forward(enc.back()));
  torch::Tensor d = bottleneck_->forward(enc.back());
  for (std::size_t i = 0; i < 4; ++i) {
    d = up_[i](upsample2(d)) + skips_[i](enc[3 - i]);
  }
  return torch::sigmoid(head_(d));
}

}  // namespace nets

PenNetImpl::PenNetImpl(const NetConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  stroke_ = register_module("stroke", nets::StrokeModule(cfg.base_channels, cfg.stroke_blocks));
  erase_ = register_module("erase", nets::ErasingModule(cfg.base_channels, cfg.dilation_rates));
}

torch::Tensor PenNetImpl::predict_stroke(const torch::Tensor& image) { return stroke_(image); }

torch::Tensor PenNetImpl::erase_once(const torch::Tensor& image, const torch::Tensor& stroke) {
  return erase_(image, stroke);
}

ProgressiveOutput PenNetImpl::erase_progressive(const torch::Tensor& image, int iterations,
                                                torch::Tensor stroke) {
  if (iterations < 1) fail(ErrorCode::kInvalidArgument, "iterations must be >= 1");
  ProgressiveOutput out;
  out.stroke = stroke.defined() ? stroke : predict_stroke(image);
  torch::Tensor x = image;
  torch::Tensor s = out.stroke;
  for (int k = 0; k < iterations; ++k) {
    if (k > 0 && cfg_.repredict_stroke) s = predict_stroke(x);
    x = erase_once(x, s);
    out.intermediates.push_back(x);
  }
  out.final = x;
  return out;
}

std::vector<std::pair<std::string, torch::Tensor>> PenParams::named_arrays() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : net->named_parameters(true)) out.emplace_back(item.key(), item.value());
  return out;
}

std::int64_t PenParams::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : net->parameters()) n += p.numel();
  return n;
}

std::vector<torch::Tensor> PenParams::stroke_parameters() const {
  return net.ptr()->stroke_module()->parameters();
}

std::vector<torch::Tensor> PenParams::erase_parameters() const {
  return net.ptr()->erasing_module()->parameters();
}

PenParams PenParams::clone() const {
  PenParams copy;
  copy.cfg = cfg;
  copy.hash = hash;
  copy.net = PenNet(cfg);
  torch::NoGradGuard guard;
  auto src = net->named_parameters(true);
  for (auto& item : copy.net->named_parameters(true)) item.value().copy_(src[item.key()]);
  auto bufs = net->named_buffers(true);
  for (auto& item : copy.net->named_buffers(true)) item.value().copy_(bufs[item.key()]);
  copy.net->train(net->is_training());
  return copy;
}

PenParams init_params(const NetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  PenParams p;
  p.cfg = cfg;
  p.hash = config_hash(cfg);
  std::lock_guard<std::mutex> lock(g_seed_mutex);
  torch::manual_seed(seed);
  p.net = PenNet(cfg);
  return p;
}

void check_network_shape(int height, int width) {
  if (height < 16 || width < 16 || height % 16 != 0 || width % 16 != 0) {
    fail(ErrorCode::kBadShape, "network input must be a multiple of 16 on both sides, got " +
                                   std::to_string(height) + "x" + std::to_string(width));
  }
}

torch::Tensor image_to_tensor(const Image& image) {
  const Image rgb = image.channels() == 3 ? image : to_rgb(image);
  auto t = torch::empty({1, 3, rgb.height(), rgb.width()}, torch::kFloat32);
  auto acc = t.accessor<float, 4>();
  for (int y = 0; y < rgb.height(); ++y) {
    for (int x = 0; x < rgb.width(); ++x) {
      for (int k = 0; k < 3; ++k) acc[0][k][y][x] = static_cast<float>(rgb.at(y, x, k));
    }
  }
  return t;
}

torch::Tensor mask_to_tensor(const StrokeMask& mask) {
  auto t = torch::empty({1, 1, mask.height(), mask.width()}, torch::kFloat32);
  auto acc = t.accessor<float, 4>();
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) acc[0][0][y][x] = static_cast<float>(mask.at(y, x));
  }
  return t;
}

torch::Tensor images_to_batch(const std::vector<Image>& images) {
  std::vector<torch::Tensor> ts;
  ts.reserve(images.size());
  for (const auto& im : images) ts.push_back(image_to_tensor(im));
  return torch::cat(ts, 0);
}

Image tensor_to_image(const torch::Tensor& t_in) {
  torch::Tensor t = t_in.detach().to(torch::kCPU, torch::kFloat64).contiguous();
  if (t.dim() == 4) {
    if (t.size(0) != 1) fail(ErrorCode::kBadShape, "expected a single image tensor");
    t = t[0];
  }
  if (t.dim() != 3) fail(ErrorCode::kBadShape, "expected a (C,H,W) tensor");
  const int c = static_cast<int>(t.size(0));
  const int h = static_cast<int>(t.size(1));
  const int w = static_cast<int>(t.size(2));
  Image out(h, w, c);
  auto acc = t.accessor<double, 3>();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int k = 0; k < c; ++k) out.at(y, x, k) = acc[k][y][x];
    }
  }
  out.clamp01();
  return out;
}

StrokeMask tensor_to_mask(const torch::Tensor& t) { return StrokeMask(tensor_to_image(t)); }

namespace {

Image prepared_input(const Image& image) {
  check_network_shape(image.height(), image.width());
  return image.channels() == 3 ? image : to_rgb(image);
}

}  // namespace

StrokeMask forward_stroke(const PenParams& params, const Image& image) {
  const Image in = prepared_input(image);
  torch::NoGradGuard guard;
  return tensor_to_mask(params.net.ptr()->predict_stroke(image_to_tensor(in)));
}

Image erase_once(const PenParams& params, const Image& image, const StrokeMask& stroke) {
  const Image in = prepared_input(image);
  if (stroke.height() != in.height() || stroke.width() != in.width()) {
    fail(ErrorCode::kBadShape, "stroke mask and image differ in size");
  }
  torch::NoGradGuard guard;
  return tensor_to_image(params.net.ptr()->erase_once(image_to_tensor(in), mask_to_tensor(stroke)));
}

EraseResult erase_progressive(const PenParams& params, const Image& image, int iterations) {
  const Image in = prepared_input(image);
  const int k = iterations > 0 ? iterations : params.cfg.iterations;
  torch::NoGradGuard guard;
  const auto out = params.net.ptr()->erase_progressive(image_to_tensor(in), k);
  EraseResult r;
  r.stroke = tensor_to_mask(out.stroke);
  for (const auto& t : out.intermediates) r.intermediates.push_back(tensor_to_image(t));
  r.final = r.intermediates.back();
  return r;
}

std::string tensor_digest(const std::vector<torch::Tensor>& tensors) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tensors) {
    const auto c = t.detach().contiguous().cpu();
    h = fnv1a(c.data_ptr(), static_cast<std::size_t>(c.numel()) * c.element_size(), h);
  }
  return hex64(h);
}

}  // namespace pen
