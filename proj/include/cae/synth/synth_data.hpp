#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cae/core/types.hpp"

namespace cae::synth {

enum class LesionKind { kNone, kBlob, kRidge, kDoubleBlob };

std::string to_string(LesionKind kind);
LesionKind lesion_kind_from_string(const std::string& name);

struct LesionSpec {
  LesionKind kind = LesionKind::kNone;
  double intensity = 0.8;      // peak added intensity, in [0, 1]
  double size_fraction = 0.25; // blob radius = size_fraction * side / 2
};

/// Binary side x side mask; 1 marks pixels of the class-determining feature.
struct GroundTruthMask {
  int side = 0;
  std::vector<std::uint8_t> mask;

  std::size_t area() const;
  bool at(int y, int x) const { return mask[static_cast<std::size_t>(y) * side + x] != 0; }
};

/// Where the feature sits. Drawn for every sample, including kind none, so a
/// placement-matched ablation is possible for featureless samples.
struct Placement {
  double cx = 0;
  double cy = 0;
  double angle = 0;
  double radius = 0;
};

struct SynthSet {
  Dataset dataset;
  std::map<std::string, GroundTruthMask> masks;
  std::map<std::string, Placement> placements;
};

struct SynthOptions {
  int side = 64;
  int channels = 1;
  std::string id_prefix;
  Split split = Split::kTrain;
};

/// n_per_class samples per spec; class k gets label k and name to_string(kind).
SynthSet generate_dataset(const std::vector<LesionSpec>& classes, int n_per_class,
                          const SynthOptions& options, RandomStream& rng);

/// Mask of the disk region ablation would zero out for a placement.
GroundTruthMask placement_mask(const LesionSpec& spec, const Placement& p, int side);

/// Writes `<root>/<split>/<class>/<id>.png`, `<root>/masks/<id>.png` and
/// appends rows to `<root>/manifest.tsv` (header written when new).
void write_synth_set(const SynthSet& set, const std::vector<LesionSpec>& classes,
                     const std::filesystem::path& root);

/// Reads `<root>/masks/<id>.png` for every sample of ds that has one.
std::map<std::string, GroundTruthMask> load_masks(const Dataset& ds,
                                                  const std::filesystem::path& root);

}  // namespace cae::synth
