#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cae/core/image_ops.hpp"
#include "cae/core/types.hpp"
#include "cae/explain/classifier.hpp"
#include "cae/manifold/manifold.hpp"
#include "cae/nets/bundle.hpp"

namespace cae::explain {

inline constexpr int kDefaultSteps = 10;

/// Frames decoded from one individual-style code along a class-style path.
struct CounterfactualSeries {
  std::string source_id;
  int source_class = 0;
  int destination_class = 0;
  manifold::PathSpec path;
  std::vector<ImageTensor> frames;
  std::vector<std::vector<double>> probs;
};

/// frame_i = decode(path_i, E_s(source)), each decoded on its own so frame 0
/// matches nets::decode exactly. Classifier errors are rethrown with the
/// frame index.
CounterfactualSeries generate_series(const nets::ModelBundle& bundle, const LabeledSample& source,
                                     const manifold::PathSpec& path,
                                     const BlackBoxClassifier& classifier, int destination_class);

/// Single-channel [side, side] map, row-major.
struct Heatmap {
  int side = 0;
  std::vector<double> values;

  double at(int y, int x) const { return values[static_cast<std::size_t>(y) * side + x]; }
  double max() const;
};

/// CH_n = |frame_{n+1} - frame_n| summed over channels.
std::vector<Heatmap> difference_maps(const CounterfactualSeries& series);

enum class Weighting { kProbDelta, kEndpointContrast };
std::string to_string(Weighting w);
Weighting weighting_from_string(const std::string& s);

struct SaliencyResult {
  Heatmap saliency;                  // in [0, 1], max 1 unless degenerate
  std::vector<Heatmap> differences;  // CH_n
  std::vector<double> weights;       // per interval (prob_delta only)
  std::optional<int> flip_index;
  bool degenerate = false;
  Weighting weighting = Weighting::kProbDelta;
};

/// prob_delta: sum of CH_n weighted by the clamped rise of the destination
/// class probability. endpoint_contrast: |frame_last - frame_0|. Both
/// normalized to max 1; an all-zero aggregate is returned flagged degenerate.
SaliencyResult saliency_map(const CounterfactualSeries& series,
                            Weighting weighting = Weighting::kProbDelta);

/// First step whose argmax is the destination class.
std::optional<int> pick_destination(const CounterfactualSeries& series);

struct SwapDirection {
  int from = 0;
  int to = 0;
  std::size_t total = 0;
  std::size_t hits = 0;
  double rate() const { return total ? static_cast<double>(hits) / total : 0.0; }
};

/// Every sample decoded with the class-style code of a random sample of a
/// uniformly chosen other class; a hit when the classifier's argmax is that
/// class. Reported per (from, to) direction with at least one trial.
std::vector<SwapDirection> swap_audit(const nets::ModelBundle& bundle, const Dataset& ds,
                                      const BlackBoxClassifier& classifier, RandomStream& rng);

struct OcclusionConfig {
  int window = 0;       // 0: side / 8
  int stride = 0;       // 0: window / 2
  float gray = 0.0f;

  OcclusionConfig resolved(int side) const;
};

struct OcclusionResult {
  Heatmap saliency;
  bool coverage_gaps = false;  // stride > window
  std::size_t evaluations = 0; // classifier images, including the unoccluded one
};

/// Slides a gray patch; each pixel gets the mean drop of the source-class
/// probability over the windows covering it, clamped at zero and scaled to
/// max 1.
OcclusionResult occlusion_baseline(const ImageTensor& image, const BlackBoxClassifier& classifier,
                                   int source_class, const OcclusionConfig& config = {});

/// Destination for a source class: the other class when K = 2, otherwise the
/// next index modulo K.
int default_destination(int source_class, int class_count);

struct CostReport {
  std::vector<double> cae_seconds;
  std::vector<double> occlusion_seconds;
  double cae_median = 0.0;
  double occlusion_median = 0.0;
  double ratio() const { return cae_median > 0.0 ? occlusion_median / cae_median : 0.0; }
};

/// Per-case wall clock of (encode, path to the destination centroid, series,
/// saliency) against the occlusion baseline on the same classifier. One
/// warm-up case of each runs first and is not counted.
CostReport cost_benchmark(const nets::ModelBundle& bundle, const manifold::CodeTable& table,
                          const BlackBoxClassifier& classifier,
                          const std::vector<LabeledSample>& samples, int n_steps = kDefaultSteps,
                          const OcclusionConfig& occlusion = {});

/// One refinement round: swap every sample as in swap_audit and append the
/// synthetics the classifier gets wrong, labelled with the intended class.
Dataset append_misclassified_swaps(const nets::ModelBundle& bundle, const Dataset& ds,
                                   const BlackBoxClassifier& classifier, RandomStream& rng);

/// Full explanation of one sample: path from its own code to the destination
/// class centroid.
struct Explanation {
  CounterfactualSeries series;
  SaliencyResult result;
};

Explanation explain_sample(const nets::ModelBundle& bundle, const manifold::CodeTable& table,
                           const BlackBoxClassifier& classifier, const LabeledSample& source,
                           int destination_class, int n_steps = kDefaultSteps,
                           Weighting weighting = Weighting::kProbDelta);

/// Red heat blended over the grayscale source (alpha = 0.6 * saliency), 8-bit RGB.
RawImage overlay_image(const ImageTensor& source, const Heatmap& saliency);
void write_overlay_png(const ImageTensor& source, const Heatmap& saliency,
                       const std::filesystem::path& path);
/// "CAEGRID1", u32 height, u32 width, float32 values; little-endian.
void write_float_grid(const Heatmap& map, const std::filesystem::path& path);
Heatmap read_float_grid(const std::filesystem::path& path);
/// JSON text: ids, classes, flip index, per-step probabilities, weights.
std::string saliency_summary(const CounterfactualSeries& series, const SaliencyResult& result);

}  // namespace cae::explain
