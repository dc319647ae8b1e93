#pragma once

// Fixtures and independent oracles shared by the unit tests and the
// acceptance runner.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "cae/core/types.hpp"
#include "cae/losses/losses.hpp"
#include "cae/nets/bundle.hpp"
#include "cae/synth/synth_data.hpp"

namespace cae::testing {

/// Smallest configuration that exercises every layer.
nets::NetConfig tiny_net(int side = 16, int class_count = 2);
/// tiny_net bundle converted to float64.
nets::ModelBundle tiny_bundle(std::uint64_t seed, int side = 16, int class_count = 2);

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "cae");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Two-class lesion set (none vs blob unless given) of the requested size.
synth::SynthSet lesion_set(int side, int per_class, std::uint64_t seed,
                           std::vector<synth::LesionKind> kinds = {synth::LesionKind::kNone,
                                                                   synth::LesionKind::kBlob},
                           Split split = Split::kTrain, const std::string& id_prefix = "");

/// Uniform [-1, 1) tensor from a RandomStream (independent of torch's RNG).
torch::Tensor random_tensor(std::vector<std::int64_t> shape, RandomStream& rng,
                            torch::Dtype dtype = torch::kFloat64, double lo = -1.0,
                            double hi = 1.0);

/// Row-major float64 copy.
std::vector<double> flat(const torch::Tensor& t);

/// Plain-loop reductions used as oracles.
double brute_l1_mean(const torch::Tensor& a, const torch::Tensor& b);
/// Mean over rows of -log(exp(l[t]) / sum_j exp(l[j])), log-sum-exp by hand.
double brute_nll(const torch::Tensor& logits, const std::vector<std::int64_t>& targets);
std::vector<std::int64_t> labels_of(const torch::Tensor& y);

/// Outcome of one oracle suite: worst observed error and per-check lines.
struct SuiteResult {
  bool pass = true;
  double worst = 0.0;
  std::vector<std::string> lines;
  std::vector<std::string> failures;

  void record(const std::string& name, double error, double tolerance);
};

/// Every loss equation, A/B directions and both objectives, against a
/// brute-force recomputation from the raw network calls. float64.
SuiteResult loss_oracle_suite(std::uint64_t seed, int batch = 3);

/// Central finite differences against autograd for each loss on its direct
/// inputs, each network on its inputs and parameters, and both objectives on
/// network parameters. Norm-wise relative error over sampled entries.
SuiteResult gradient_suite(std::uint64_t seed, double tolerance = 1e-4);

/// Per-channel mean and biased standard deviation after adaptive
/// normalization, against the injected shift and scale. Also checks the
/// decoder's scale parameterization (1 + raw).
SuiteResult adain_oracle_suite(std::uint64_t seed, double tolerance = 1e-4);

/// Norm-wise relative error between autograd and central differences over
/// `samples` entries of `wrt` (all entries when samples <= 0). Norms below
/// `floor` are compared on that absolute scale instead.
double finite_difference_error(const std::function<torch::Tensor()>& f, torch::Tensor wrt,
                               int samples, RandomStream& rng, double h = 1e-6,
                               double floor = 1e-4);

/// Hand-rolled L2-coupled Adam on plain vectors (one parameter tensor).
struct AdamOracle {
  double lr, beta1, beta2, eps, weight_decay;
  std::vector<double> m, v;
  std::int64_t t = 0;

  void step(std::vector<double>& p, const std::vector<double>& g);
};

}  // namespace cae::testing
