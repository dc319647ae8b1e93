#pragma once

#include <utility>
#include <vector>

#include "cae/core/types.hpp"

namespace cae {

struct SamplePair {
  std::size_t a = 0;  // index into the dataset
  std::size_t b = 0;
};

/// Cross-class pair stream. An unordered class pair is chosen uniformly among
/// the non-empty classes (1-vs-1 pairing), then one sample uniformly from
/// each, and the A/B roles are assigned by a fair coin.
class PairSampler {
 public:
  /// Throws if fewer than two classes have samples. Keeps a reference to ds.
  explicit PairSampler(const Dataset& ds);

  SamplePair next(RandomStream& rng) const;
  std::vector<SamplePair> batch(std::size_t n, RandomStream& rng) const;

  const LabeledSample& sample(std::size_t index) const { return ds_->samples[index]; }

 private:
  const Dataset* ds_;
  std::vector<std::vector<std::size_t>> by_class_;
  std::vector<int> populated_;
};

}  // namespace cae
