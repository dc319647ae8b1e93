#include "cae/core/pair_sampler.hpp"

namespace cae {

PairSampler::PairSampler(const Dataset& ds) : ds_(&ds), by_class_(ds.indices_by_class()) {
  for (std::size_t k = 0; k < by_class_.size(); ++k) {
    if (!by_class_[k].empty()) populated_.push_back(static_cast<int>(k));
  }
  if (populated_.size() < 2) {
    throw Error("pair_sampler: need at least two classes with samples, found " +
                std::to_string(populated_.size()));
  }
}

SamplePair PairSampler::next(RandomStream& rng) const {
  const std::size_t m = populated_.size();
  // Index of an unordered pair (i < j) among m*(m-1)/2 candidates.
  std::size_t r = rng.below(m * (m - 1) / 2);
  std::size_t i = 0;
  while (r >= m - 1 - i) {
    r -= m - 1 - i;
    ++i;
  }
  const std::size_t j = i + 1 + r;
  const auto& ci = by_class_[static_cast<std::size_t>(populated_[i])];
  const auto& cj = by_class_[static_cast<std::size_t>(populated_[j])];
  const std::size_t si = ci[rng.below(ci.size())];
  const std::size_t sj = cj[rng.below(cj.size())];
  if (rng.bernoulli(0.5)) return {sj, si};
  return {si, sj};
}

std::vector<SamplePair> PairSampler::batch(std::size_t n, RandomStream& rng) const {
  std::vector<SamplePair> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) out.push_back(next(rng));
  return out;
}

}  // namespace cae
