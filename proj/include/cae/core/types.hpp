#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cae {

/// Error raised for every contract violation in the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Square H x W x C image with values in [-1, 1], stored row-major HWC.
class ImageTensor {
 public:
  ImageTensor() = default;
  /// Validates shape, finiteness and range. Throws cae::Error.
  ImageTensor(int side, int channels, std::vector<float> data);

  static ImageTensor filled(int side, int channels, float value);

  int height() const { return side_; }
  int width() const { return side_; }
  int side() const { return side_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float at(int y, int x, int c) const {
    return data_[(static_cast<std::size_t>(y) * side_ + x) * channels_ + c];
  }
  std::span<const float> data() const { return data_; }

  bool operator==(const ImageTensor&) const = default;

 private:
  int side_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

struct ClassLabel {
  int index = 0;
  int class_count = 0;

  ClassLabel() = default;
  ClassLabel(int index, int class_count);

  bool operator==(const ClassLabel&) const = default;
};

/// Class-style code c: a short real vector whose position decides class appearance.
struct ClassStyleCode {
  std::vector<float> values;

  ClassStyleCode() = default;
  explicit ClassStyleCode(std::vector<float> v);

  std::size_t dim() const { return values.size(); }
  bool operator==(const ClassStyleCode&) const = default;
};

/// Individual-style code s: a spatial feature map stored as [h, w, f] row-major.
struct IndividualStyleCode {
  int height = 0;
  int width = 0;
  int features = 0;
  std::vector<float> values;

  IndividualStyleCode() = default;
  IndividualStyleCode(int h, int w, int f, std::vector<float> v);

  bool operator==(const IndividualStyleCode&) const = default;
};

struct LabeledSample {
  std::string id;
  ImageTensor image;
  ClassLabel label;
};

enum class Split { kTrain, kTest };

struct Dataset {
  std::vector<LabeledSample> samples;
  int class_count = 0;
  Split split = Split::kTrain;
  std::vector<std::string> class_names;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  /// Checks label ranges, unique ids and consistent image shapes.
  void validate() const;
  /// Indices of samples per class.
  std::vector<std::vector<std::size_t>> indices_by_class() const;
  const LabeledSample* find(const std::string& id) const;
};

/// Throws unless the two datasets share no sample id.
void check_disjoint(const Dataset& train, const Dataset& test);

/// Counter-based (splitmix64) random stream. The draw counter is the whole
/// state, so a stream is restored from (seed, position). Conversions to reals
/// are done here rather than with <random> distributions so draws are
/// identical across standard libraries.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed = 0);
  RandomStream(std::uint64_t seed, std::uint64_t position);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return position_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  bool bernoulli(double p);

  /// Independent child stream; does not advance this stream.
  RandomStream split(std::uint64_t key) const;

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t position_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace cae
