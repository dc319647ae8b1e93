#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "cae/core/archive.hpp"
#include "cae/core/types.hpp"
#include "cae/nets/networks.hpp"

namespace cae::nets {

struct TrainingMeta {
  std::int64_t iteration = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<std::string> class_names;
};

/// The four networks plus their sizes and training metadata. Copies share
/// parameter storage (torch module semantics); use clone() for a deep copy.
struct ModelBundle {
  NetConfig config;
  TrainingMeta meta;
  ClassEncoder enc_class{nullptr};
  IndivEncoder enc_indiv{nullptr};
  Decoder decoder{nullptr};
  Discriminator disc{nullptr};

  /// Builds all networks and Kaiming-initializes them from seed.
  static ModelBundle create(const NetConfig& config, std::uint64_t seed);

  ModelBundle clone() const;
  void to(torch::Dtype dtype);
  torch::Dtype dtype() const;

  /// Parameters in declared order, names prefixed by network
  /// ("enc_class.", "enc_indiv.", "decoder.", "disc.").
  std::vector<std::pair<std::string, torch::Tensor>> named_parameters() const;
  /// E_c, E_s and G (including the MLP).
  std::vector<torch::Tensor> generator_parameters() const;
  std::vector<torch::Tensor> discriminator_parameters() const;

  /// Short hash over configuration and parameter bytes.
  std::string model_hash() const;
};

Archive bundle_to_archive(const ModelBundle& bundle);
ModelBundle bundle_from_archive(const Archive& archive);
void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_bundle(const std::filesystem::path& path);

/// Tensor conversions between library images and NCHW batches.
torch::Tensor images_to_tensor(const std::vector<ImageTensor>& images,
                               torch::Dtype dtype = torch::kFloat32);
torch::Tensor image_to_tensor(const ImageTensor& image, torch::Dtype dtype = torch::kFloat32);
ImageTensor tensor_to_image(const torch::Tensor& chw);
std::vector<ImageTensor> tensor_to_images(const torch::Tensor& nchw);
torch::Tensor code_to_tensor(const ClassStyleCode& code, torch::Dtype dtype = torch::kFloat32);
ClassStyleCode tensor_to_code(const torch::Tensor& vec);
torch::Tensor indiv_to_tensor(const IndividualStyleCode& code,
                              torch::Dtype dtype = torch::kFloat32);
IndividualStyleCode tensor_to_indiv(const torch::Tensor& chw);

struct DiscriminatorLogits {
  std::vector<double> real;   // length 2
  std::vector<double> cls;    // length K
};

/// Single-sample inference (no autograd). Inputs are checked against the
/// bundle configuration and throw cae::Error on mismatch.
ClassStyleCode encode_class(const ModelBundle& bundle, const ImageTensor& x);
IndividualStyleCode encode_indiv(const ModelBundle& bundle, const ImageTensor& x);
ImageTensor decode(const ModelBundle& bundle, const ClassStyleCode& c,
                   const IndividualStyleCode& s);
DiscriminatorLogits discriminate(const ModelBundle& bundle, const ImageTensor& x);

/// Batched inference helpers used by the audits and the explainer.
torch::Tensor encode_class_batch(const ModelBundle& bundle, const torch::Tensor& x);
torch::Tensor encode_indiv_batch(const ModelBundle& bundle, const torch::Tensor& x);
torch::Tensor decode_batch(const ModelBundle& bundle, const torch::Tensor& codes,
                           const torch::Tensor& indiv);

void check_image(const ModelBundle& bundle, const ImageTensor& x);

}  // namespace cae::nets
