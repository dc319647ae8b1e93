#include "cae/nets/layers.hpp"

namespace cae::nets {

torch::Tensor instance_norm(const torch::Tensor& x) {
  auto mean = x.mean({2, 3}, /*keepdim=*/true);
  auto var = (x - mean).pow(2).mean({2, 3}, /*keepdim=*/true);
  return (x - mean) / (var + kNormEps).sqrt();
}

torch::Tensor adaptive_instance_norm(const torch::Tensor& x, const torch::Tensor& scale,
                                     const torch::Tensor& shift) {
  return instance_norm(x) * scale.unsqueeze(-1).unsqueeze(-1) +
         shift.unsqueeze(-1).unsqueeze(-1);
}

torch::nn::Conv2d conv3x3(int in, int out, int stride) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

torch::Tensor activate(const torch::Tensor& x, Activation act) {
  return act == Activation::kRelu ? torch::relu(x) : torch::leaky_relu(x, kLeakySlope);
}

ResidualBlockImpl::ResidualBlockImpl(int channels, bool normalize, Activation act)
    : normalize_(normalize), act_(act) {
  conv1_ = register_module("conv1", conv3x3(channels, channels));
  conv2_ = register_module("conv2", conv3x3(channels, channels));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  auto h = conv1_->forward(x);
  if (normalize_) h = instance_norm(h);
  h = activate(h, act_);
  h = conv2_->forward(h);
  if (normalize_) h = instance_norm(h);
  return x + h;
}

AdaptiveResidualBlockImpl::AdaptiveResidualBlockImpl(int channels) : channels_(channels) {
  conv1_ = register_module("conv1", conv3x3(channels, channels));
  conv2_ = register_module("conv2", conv3x3(channels, channels));
}

torch::Tensor AdaptiveResidualBlockImpl::forward(const torch::Tensor& x,
                                                 const torch::Tensor& params) {
  auto p = params.split(channels_, /*dim=*/1);
  auto h = torch::relu(adaptive_instance_norm(conv1_->forward(x), p[0], p[1]));
  h = adaptive_instance_norm(conv2_->forward(h), p[2], p[3]);
  return x + h;
}

}  // namespace cae::nets
