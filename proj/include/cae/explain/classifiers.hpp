#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include <torch/torch.h>

#include "cae/explain/classifier.hpp"
#include "cae/nets/bundle.hpp"

namespace cae::explain {

struct ProbeConfig {
  int side = 64;
  int channels = 1;
  int class_count = 2;
  int width = 32;
  int epochs = 3;
  int batch = 32;
  double learning_rate = 1e-3;
  double flip_probability = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Plain CNN: seven 3x3 convolutions with relu (widths w, 2w, 2w, 4w, 4w,
/// 8w, 8w; stride 2 on the 2nd, 4th and 6th), global average pooling and a
/// linear head.
class ProbeNetImpl : public torch::nn::Module {
 public:
  explicit ProbeNetImpl(const ProbeConfig& cfg);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  std::vector<torch::nn::Conv2d> convs_;
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(ProbeNet);

/// Independently trained classifier for audits and the explanation pipeline.
class ProbeClassifier : public BlackBoxClassifier {
 public:
  explicit ProbeClassifier(const ProbeConfig& cfg);

  /// Adam with cross-entropy over shuffled minibatches; on_epoch receives
  /// (epoch, mean training loss).
  static ProbeClassifier train(const Dataset& ds, const ProbeConfig& cfg,
                               const std::function<void(int, double)>& on_epoch = {});

  int class_count() const override { return cfg_.class_count; }
  std::vector<double> predict(const ImageTensor& x) const override;
  std::vector<std::vector<double>> predict_batch(const std::vector<ImageTensor>& xs) const override;
  torch::Tensor predict_tensor(const torch::Tensor& nchw) const override;

  double accuracy(const Dataset& ds) const;
  const ProbeConfig& config() const { return cfg_; }

  void save(const std::filesystem::path& path) const;
  static ProbeClassifier load(const std::filesystem::path& path);

 private:
  ProbeConfig cfg_;
  ProbeNet net_;
};

/// Softmax of the bundle's own discriminator class head.
class DiscriminatorClassifier : public BlackBoxClassifier {
 public:
  explicit DiscriminatorClassifier(nets::ModelBundle bundle);

  int class_count() const override { return bundle_.config.class_count; }
  std::vector<double> predict(const ImageTensor& x) const override;
  torch::Tensor predict_tensor(const torch::Tensor& nchw) const override;

 private:
  nets::ModelBundle bundle_;
};

/// Runs `<command> <png path>` per image; the command prints one probability
/// per class on standard output.
class CommandClassifier : public BlackBoxClassifier {
 public:
  CommandClassifier(std::string command, int class_count);

  int class_count() const override { return k_; }
  std::vector<double> predict(const ImageTensor& x) const override;

 private:
  std::string command_;
  int k_;
};

/// POSTs {"image": <base64 PNG>} to http://host:port/path and reads
/// {"probs": [...]}.
class HttpClassifier : public BlackBoxClassifier {
 public:
  HttpClassifier(std::string host, int port, std::string path, int class_count);

  int class_count() const override { return k_; }
  std::vector<double> predict(const ImageTensor& x) const override;

 private:
  std::string host_;
  int port_;
  std::string path_;
  int k_;
};

/// Builds an adapter from a spec string:
///   probe:<archive>  command:<shell command>  http://host:port/path  disc
/// `disc` needs a bundle; K comes from the bundle or the probe archive.
std::unique_ptr<BlackBoxClassifier> make_classifier(const std::string& spec,
                                                    const nets::ModelBundle* bundle,
                                                    int class_count);

}  // namespace cae::explain
