#include "cae/core/types.hpp"

#include <cmath>
#include <numbers>
#include <unordered_set>

namespace cae {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

ImageTensor::ImageTensor(int side, int channels, std::vector<float> data)
    : side_(side), channels_(channels), data_(std::move(data)) {
  if (side <= 0 || channels <= 0) {
    throw Error("ImageTensor: side and channels must be positive");
  }
  if (data_.size() != static_cast<std::size_t>(side) * side * channels) {
    throw Error("ImageTensor: data length " + std::to_string(data_.size()) +
                " does not match " + std::to_string(side) + "x" + std::to_string(side) +
                "x" + std::to_string(channels));
  }
  for (float v : data_) {
    if (!std::isfinite(v)) throw Error("ImageTensor: non-finite value");
    if (v < -1.0f || v > 1.0f) throw Error("ImageTensor: value outside [-1, 1]");
  }
}

ImageTensor ImageTensor::filled(int side, int channels, float value) {
  return ImageTensor(side, channels,
                     std::vector<float>(static_cast<std::size_t>(side) * side * channels, value));
}

ClassLabel::ClassLabel(int index_, int class_count_) : index(index_), class_count(class_count_) {
  if (class_count <= 0 || index < 0 || index >= class_count) {
    throw Error("ClassLabel: index " + std::to_string(index) + " outside [0, " +
                std::to_string(class_count) + ")");
  }
}

ClassStyleCode::ClassStyleCode(std::vector<float> v) : values(std::move(v)) {
  for (float x : values) {
    if (!std::isfinite(x)) throw Error("ClassStyleCode: non-finite value");
  }
}

IndividualStyleCode::IndividualStyleCode(int h, int w, int f, std::vector<float> v)
    : height(h), width(w), features(f), values(std::move(v)) {
  if (values.size() != static_cast<std::size_t>(h) * w * f) {
    throw Error("IndividualStyleCode: data length does not match shape");
  }
  for (float x : values) {
    if (!std::isfinite(x)) throw Error("IndividualStyleCode: non-finite value");
  }
}

void Dataset::validate() const {
  std::unordered_set<std::string> ids;
  for (const auto& s : samples) {
    if (s.label.index < 0 || s.label.index >= class_count || s.label.class_count != class_count) {
      throw Error("Dataset: sample '" + s.id + "' has label outside the class set");
    }
    if (!ids.insert(s.id).second) throw Error("Dataset: duplicate sample id '" + s.id + "'");
    if (s.image.side() != samples.front().image.side() ||
        s.image.channels() != samples.front().image.channels()) {
      throw Error("Dataset: sample '" + s.id + "' has inconsistent image shape");
    }
  }
}

std::vector<std::vector<std::size_t>> Dataset::indices_by_class() const {
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(class_count));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out[static_cast<std::size_t>(samples[i].label.index)].push_back(i);
  }
  return out;
}

const LabeledSample* Dataset::find(const std::string& id) const {
  for (const auto& s : samples) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

void check_disjoint(const Dataset& train, const Dataset& test) {
  std::unordered_set<std::string> ids;
  for (const auto& s : train.samples) ids.insert(s.id);
  for (const auto& s : test.samples) {
    if (ids.count(s.id)) throw Error("train and test share sample id '" + s.id + "'");
  }
}

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

RandomStream::RandomStream(std::uint64_t seed) : seed_(seed) {}

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t position)
    : seed_(seed), position_(position) {}

std::uint64_t RandomStream::next_u64() {
  ++position_;
  return mix64(seed_ + position_ * kGolden);
}

double RandomStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t RandomStream::below(std::uint64_t n) {
  if (n == 0) throw Error("RandomStream::below: n must be positive");
  // Rejection keeps the draw unbiased; the rejection zone is tiny for small n.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % n;
}

double RandomStream::normal() {
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

bool RandomStream::bernoulli(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error("RandomStream::bernoulli: p outside [0, 1]");
  return uniform() < p;
}

RandomStream RandomStream::split(std::uint64_t key) const {
  return RandomStream(mix64(seed_ ^ mix64(key + kGolden)));
}

}  // namespace cae
