#include "cae/nets/networks.hpp"

#include <cmath>

namespace cae::nets {

void NetConfig::validate() const {
  if (side <= 0 || side % kClassEncoderStride != 0) {
    throw Error("NetConfig: side " + std::to_string(side) + " must be a positive multiple of " +
                std::to_string(kClassEncoderStride));
  }
  if (channels != 1 && channels != 3) throw Error("NetConfig: channels must be 1 or 3");
  if (class_count < 2) throw Error("NetConfig: need at least two classes");
  if (code_dim < 1 || width < 1 || res_blocks < 0 || mlp_hidden < 1 || disc_res_blocks < 0) {
    throw Error("NetConfig: sizes must be positive");
  }
}

ClassEncoderImpl::ClassEncoderImpl(const NetConfig& cfg) {
  const int w = cfg.width;
  const int widths[6] = {w, 2 * w, 4 * w, 4 * w, 4 * w, 4 * w};
  const int strides[6] = {1, 2, 2, 2, 1, 1};
  int in = cfg.channels;
  for (int i = 0; i < 6; ++i) {
    convs_.push_back(register_module("conv" + std::to_string(i), conv3x3(in, widths[i], strides[i])));
    in = widths[i];
  }
  proj_ = register_module("proj", torch::nn::Linear(in, cfg.code_dim));
}

torch::Tensor ClassEncoderImpl::forward(const torch::Tensor& x) {
  auto h = x;
  for (auto& conv : convs_) h = torch::relu(instance_norm(conv->forward(h)));
  return proj_->forward(h.mean({2, 3}));
}

IndivEncoderImpl::IndivEncoderImpl(const NetConfig& cfg) {
  const int w = cfg.width;
  convs_.push_back(register_module("conv0", conv3x3(cfg.channels, w, 1)));
  convs_.push_back(register_module("conv1", conv3x3(w, 2 * w, 2)));
  convs_.push_back(register_module("conv2", conv3x3(2 * w, 4 * w, 2)));
  for (int i = 0; i < cfg.res_blocks; ++i) {
    blocks_.push_back(register_module("block" + std::to_string(i),
                                      ResidualBlock(4 * w, true, Activation::kRelu)));
  }
}

torch::Tensor IndivEncoderImpl::forward(const torch::Tensor& x) {
  auto h = x;
  for (auto& conv : convs_) h = torch::relu(instance_norm(conv->forward(h)));
  for (auto& block : blocks_) h = block->forward(h);
  return h;
}

DecoderImpl::DecoderImpl(const NetConfig& cfg) : code_dim_(cfg.code_dim) {
  const int c = 4 * cfg.width;
  for (int i = 0; i < cfg.res_blocks; ++i) {
    blocks_.push_back(register_module("block" + std::to_string(i), AdaptiveResidualBlock(c)));
  }
  mlp_ = register_module(
      "mlp", torch::nn::Sequential(torch::nn::Linear(cfg.code_dim, cfg.mlp_hidden),
                                   torch::nn::Functional(torch::relu),
                                   torch::nn::Linear(cfg.mlp_hidden, cfg.mlp_hidden),
                                   torch::nn::Functional(torch::relu),
                                   torch::nn::Linear(cfg.mlp_hidden, 4 * c * cfg.res_blocks)));
  up1_ = register_module("up1", conv3x3(c, 2 * cfg.width));
  up2_ = register_module("up2", conv3x3(2 * cfg.width, cfg.width));
  out_ = register_module("out", conv3x3(cfg.width, cfg.channels));
}

int DecoderImpl::adaptive_param_count() const {
  int n = 0;
  for (const auto& b : blocks_) n += b->param_count();
  return n;
}

torch::Tensor DecoderImpl::adaptive_params(const torch::Tensor& code) {
  if (code.dim() != 2 || code.size(1) != code_dim_) {
    throw Error("decoder: class-style code must have shape [N, " + std::to_string(code_dim_) + "]");
  }
  return mlp_->forward(code);
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& code, const torch::Tensor& indiv) {
  auto params = adaptive_params(code);
  auto h = indiv;
  std::int64_t offset = 0;
  for (auto& block : blocks_) {
    const int n = block->param_count();
    auto p = params.narrow(1, offset, n);
    const int c = n / 4;
    // Scales are parameterized around identity: 1 + raw.
    auto adjusted = torch::cat({p.narrow(1, 0, c) + 1.0, p.narrow(1, c, c),
                                p.narrow(1, 2 * c, c) + 1.0, p.narrow(1, 3 * c, c)},
                               1);
    h = block->forward(h, adjusted);
    offset += n;
  }
  namespace F = torch::nn::functional;
  const auto up = F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest);
  h = torch::relu(up1_->forward(F::interpolate(h, up)));
  h = torch::relu(up2_->forward(F::interpolate(h, up)));
  return torch::tanh(out_->forward(h));
}

DiscriminatorImpl::DiscriminatorImpl(const NetConfig& cfg) {
  const int w = cfg.width;
  const int widths[4] = {w, 2 * w, 4 * w, 4 * w};
  const int strides[4] = {2, 2, 2, 1};
  int in = cfg.channels;
  for (int i = 0; i < 4; ++i) {
    convs_.push_back(register_module("conv" + std::to_string(i), conv3x3(in, widths[i], strides[i])));
    in = widths[i];
  }
  for (int i = 0; i < cfg.disc_res_blocks; ++i) {
    blocks_.push_back(register_module("block" + std::to_string(i),
                                      ResidualBlock(in, false, Activation::kLeakyRelu)));
  }
  head_real_ = register_module("head_real", torch::nn::Linear(in, 2));
  head_class_ = register_module("head_class", torch::nn::Linear(in, cfg.class_count));
}

DiscriminatorOutput DiscriminatorImpl::forward(const torch::Tensor& x) {
  auto h = x;
  for (auto& conv : convs_) h = torch::leaky_relu(conv->forward(h), kLeakySlope);
  for (auto& block : blocks_) h = block->forward(h);
  auto pooled = h.mean({2, 3});
  return {head_real_->forward(pooled), head_class_->forward(pooled)};
}

void kaiming_init(torch::nn::Module& module, RandomStream& rng, double negative_slope) {
  torch::NoGradGuard guard;
  const double gain = std::sqrt(2.0 / (1.0 + negative_slope * negative_slope));
  for (auto& item : module.named_parameters(/*recurse=*/true)) {
    auto& p = item.value();
    if (item.key().ends_with("bias")) {
      p.zero_();
      continue;
    }
    const std::int64_t fan_in = p.numel() / p.size(0);
    const double std = gain / std::sqrt(static_cast<double>(fan_in));
    auto values = torch::empty({p.numel()}, torch::kFloat64);
    auto* v = values.data_ptr<double>();
    for (std::int64_t i = 0; i < p.numel(); ++i) v[i] = std * rng.normal();
    p.copy_(values.view(p.sizes()));
  }
}

void fill_parameters(torch::nn::Module& module, double value) {
  torch::NoGradGuard guard;
  for (auto& p : module.parameters()) p.fill_(value);
}

}  // namespace cae::nets
