#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "cae/core/types.hpp"
#include "cae/nets/layers.hpp"

namespace cae::nets {

/// Size parameters shared by the four networks. Every width derives from
/// `width`: class encoder w,2w,4w,4w,4w,4w; individual encoder w,2w,4w;
/// decoder residual blocks at 4w; discriminator w,2w,4w,4w.
struct NetConfig {
  int side = 64;
  int channels = 1;
  int class_count = 2;
  int code_dim = 8;
  int width = 32;
  int res_blocks = 6;
  int mlp_hidden = 128;
  int disc_res_blocks = 2;

  /// Throws cae::Error on inconsistent sizes.
  void validate() const;
  int indiv_side() const { return side / 4; }
  int indiv_features() const { return 4 * width; }
  bool operator==(const NetConfig&) const = default;
};

/// Total spatial downsampling of the class-style encoder.
inline constexpr int kClassEncoderStride = 8;

/// E_c: six 3x3 convolutions (three with stride 2), instance norm and relu,
/// then global average pooling and a linear map to code_dim.
class ClassEncoderImpl : public torch::nn::Module {
 public:
  explicit ClassEncoderImpl(const NetConfig& cfg);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  std::vector<torch::nn::Conv2d> convs_;
  torch::nn::Linear proj_{nullptr};
};
TORCH_MODULE(ClassEncoder);

/// E_s: three convolutions (two with stride 2) then residual blocks; output
/// keeps a spatial map of side/4.
class IndivEncoderImpl : public torch::nn::Module {
 public:
  explicit IndivEncoderImpl(const NetConfig& cfg);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  std::vector<torch::nn::Conv2d> convs_;
  std::vector<ResidualBlock> blocks_;
};
TORCH_MODULE(IndivEncoder);

/// G: adaptive residual blocks conditioned by an MLP on the class-style code,
/// then two nearest-neighbor x2 upsample + conv stages and a tanh output conv.
class DecoderImpl : public torch::nn::Module {
 public:
  explicit DecoderImpl(const NetConfig& cfg);
  torch::Tensor forward(const torch::Tensor& code, const torch::Tensor& indiv);
  /// Raw MLP output; adaptive scales are 1 + the scale entries.
  torch::Tensor adaptive_params(const torch::Tensor& code);
  int adaptive_param_count() const;

 private:
  int code_dim_;
  torch::nn::Sequential mlp_{nullptr};
  std::vector<AdaptiveResidualBlock> blocks_;
  torch::nn::Conv2d up1_{nullptr}, up2_{nullptr}, out_{nullptr};
};
TORCH_MODULE(Decoder);

struct DiscriminatorOutput {
  torch::Tensor real_logits;   // [N, 2]: index 0 fake, 1 real
  torch::Tensor class_logits;  // [N, K]
};

/// D: four convolutions (three with stride 2), residual blocks without
/// normalization, global average pooling, and two linear heads.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const NetConfig& cfg);
  DiscriminatorOutput forward(const torch::Tensor& x);

 private:
  std::vector<torch::nn::Conv2d> convs_;
  std::vector<ResidualBlock> blocks_;
  torch::nn::Linear head_real_{nullptr}, head_class_{nullptr};
};
TORCH_MODULE(Discriminator);

/// Kaiming fan-in normal init for conv/linear weights, zero biases, drawn
/// from rng so initialization does not depend on torch's generator.
void kaiming_init(torch::nn::Module& module, RandomStream& rng, double negative_slope);

/// Fills every parameter with `value`.
void fill_parameters(torch::nn::Module& module, double value);

}  // namespace cae::nets
