#pragma once

#include <functional>
#include <vector>

#include <torch/torch.h>

#include "cae/core/types.hpp"

namespace cae::explain {

/// The model under explanation, seen only through image -> class
/// probabilities. Implementations must be safe to call concurrently.
class BlackBoxClassifier {
 public:
  virtual ~BlackBoxClassifier() = default;

  virtual int class_count() const = 0;
  virtual std::vector<double> predict(const ImageTensor& x) const = 0;
  virtual std::vector<std::vector<double>> predict_batch(const std::vector<ImageTensor>& xs) const;
  /// NCHW in, [N, K] float64 probabilities out. The default goes through
  /// predict_batch; in-process models override it to skip the conversion.
  virtual torch::Tensor predict_tensor(const torch::Tensor& nchw) const;
};

/// Throws cae::Error unless p has K nonnegative entries summing to 1 within 1e-5.
void check_probabilities(const std::vector<double>& p, int class_count);

std::size_t argmax(const std::vector<double>& p);

/// Wraps a callable; mostly for tests and constructed oracles.
class FunctionClassifier : public BlackBoxClassifier {
 public:
  using Fn = std::function<std::vector<double>(const ImageTensor&)>;
  FunctionClassifier(int class_count, Fn fn);

  int class_count() const override { return k_; }
  std::vector<double> predict(const ImageTensor& x) const override;

 private:
  int k_;
  Fn fn_;
};

}  // namespace cae::explain
