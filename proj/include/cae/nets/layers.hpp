#pragma once

#include <torch/torch.h>

namespace cae::nets {

inline constexpr double kNormEps = 1e-5;
inline constexpr double kLeakySlope = 0.2;

/// Per-sample, per-channel normalization to zero mean and unit (biased) variance.
torch::Tensor instance_norm(const torch::Tensor& x);

/// Instance normalization followed by an externally supplied per-channel
/// scale and shift. x: [N, C, H, W]; scale, shift: [N, C].
torch::Tensor adaptive_instance_norm(const torch::Tensor& x, const torch::Tensor& scale,
                                     const torch::Tensor& shift);

torch::nn::Conv2d conv3x3(int in, int out, int stride = 1);

enum class Activation { kRelu, kLeakyRelu };

torch::Tensor activate(const torch::Tensor& x, Activation act);

/// conv -> [instance norm] -> act -> conv -> [instance norm], plus identity skip.
class ResidualBlockImpl : public torch::nn::Module {
 public:
  ResidualBlockImpl(int channels, bool normalize, Activation act);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
  bool normalize_;
  Activation act_;
};
TORCH_MODULE(ResidualBlock);

/// conv -> AdaIN -> relu -> conv -> AdaIN, plus identity skip. Consumes
/// 4 * channels adaptive parameters per sample: scale1, shift1, scale2, shift2.
class AdaptiveResidualBlockImpl : public torch::nn::Module {
 public:
  explicit AdaptiveResidualBlockImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& params);
  int param_count() const { return 4 * channels_; }

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
  int channels_;
};
TORCH_MODULE(AdaptiveResidualBlock);

}  // namespace cae::nets
