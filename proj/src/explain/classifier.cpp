#include "cae/explain/classifier.hpp"

#include <cmath>
#include <sstream>

#include "cae/nets/bundle.hpp"

namespace cae::explain {

std::vector<std::vector<double>> BlackBoxClassifier::predict_batch(
    const std::vector<ImageTensor>& xs) const {
  std::vector<std::vector<double>> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(predict(x));
  return out;
}

torch::Tensor BlackBoxClassifier::predict_tensor(const torch::Tensor& nchw) const {
  const auto probs = predict_batch(nets::tensor_to_images(nchw));
  auto out = torch::empty({static_cast<std::int64_t>(probs.size()), class_count()},
                          torch::kFloat64);
  auto acc = out.accessor<double, 2>();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    check_probabilities(probs[i], class_count());
    for (int k = 0; k < class_count(); ++k) acc[static_cast<std::int64_t>(i)][k] = probs[i][k];
  }
  return out;
}

void check_probabilities(const std::vector<double>& p, int class_count) {
  if (static_cast<int>(p.size()) != class_count) {
    throw Error("classifier returned " + std::to_string(p.size()) + " probabilities, expected " +
                std::to_string(class_count));
  }
  double sum = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0) throw Error("classifier returned a negative or non-finite probability");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-5) {
    std::ostringstream os;
    os << "classifier probabilities sum to " << sum;
    throw Error(os.str());
  }
}

std::size_t argmax(const std::vector<double>& p) {
  if (p.empty()) throw Error("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i) {
    if (p[i] > p[best]) best = i;
  }
  return best;
}

FunctionClassifier::FunctionClassifier(int class_count, Fn fn) : k_(class_count), fn_(std::move(fn)) {
  if (k_ < 2) throw Error("a classifier needs at least two classes");
}

std::vector<double> FunctionClassifier::predict(const ImageTensor& x) const {
  auto p = fn_(x);
  check_probabilities(p, k_);
  return p;
}

}  // namespace cae::explain
