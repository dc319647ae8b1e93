#include "cae/synth/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include "cae/core/dataset_io.hpp"

namespace cae::synth {
namespace fs = std::filesystem;

namespace {

constexpr int kNoiseGrid = 5;

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

/// Low-frequency sinusoids plus smoothly interpolated value noise.
std::vector<double> background(int side, RandomStream& rng) {
  std::vector<double> img(static_cast<std::size_t>(side) * side, 0.0);
  const int waves = 4 + static_cast<int>(rng.below(5));
  for (int w = 0; w < waves; ++w) {
    const double fx = rng.uniform(-2.0, 2.0);
    const double fy = rng.uniform(-2.0, 2.0);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double amp = rng.uniform(0.04, 0.12);
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        const double u = static_cast<double>(x) / side;
        const double v = static_cast<double>(y) / side;
        img[static_cast<std::size_t>(y) * side + x] +=
            amp * std::sin(2.0 * std::numbers::pi * (fx * u + fy * v) + phase);
      }
    }
  }
  double grid[kNoiseGrid][kNoiseGrid];
  for (auto& row : grid) {
    for (double& g : row) g = rng.normal();
  }
  const double offset = rng.uniform(-0.4, 0.0);
  for (int y = 0; y < side; ++y) {
    const double gy = static_cast<double>(y) / (side - 1) * (kNoiseGrid - 1);
    const int y0 = std::min(static_cast<int>(gy), kNoiseGrid - 2);
    const double ty = smoothstep(gy - y0);
    for (int x = 0; x < side; ++x) {
      const double gx = static_cast<double>(x) / (side - 1) * (kNoiseGrid - 1);
      const int x0 = std::min(static_cast<int>(gx), kNoiseGrid - 2);
      const double tx = smoothstep(gx - x0);
      const double top = grid[y0][x0] * (1 - tx) + grid[y0][x0 + 1] * tx;
      const double bot = grid[y0 + 1][x0] * (1 - tx) + grid[y0 + 1][x0 + 1] * tx;
      img[static_cast<std::size_t>(y) * side + x] += 0.08 * (top * (1 - ty) + bot * ty) + offset;
    }
  }
  return img;
}

double feature_extent(const LesionSpec& spec, double radius) {
  switch (spec.kind) {
    case LesionKind::kNone: return 0.0;
    case LesionKind::kBlob: return 2.0 * radius;
    case LesionKind::kRidge: return 4.0 * radius;
    case LesionKind::kDoubleBlob: return 4.5 * radius;
  }
  return 0.0;
}

struct Bump {
  double cx, cy, radius;
};

std::vector<Bump> blob_centers(const LesionSpec& spec, const Placement& p) {
  if (spec.kind == LesionKind::kBlob) return {{p.cx, p.cy, p.radius}};
  if (spec.kind == LesionKind::kDoubleBlob) {
    const double dx = 1.25 * p.radius * std::cos(p.angle);
    const double dy = 1.25 * p.radius * std::sin(p.angle);
    return {{p.cx - dx, p.cy - dy, p.radius}, {p.cx + dx, p.cy + dy, p.radius}};
  }
  return {};
}

/// Feature intensity profile (peak 1) and mask membership at pixel center (x, y).
std::pair<double, bool> feature_at(const LesionSpec& spec, const Placement& p, double x,
                                   double y) {
  if (spec.kind == LesionKind::kRidge) {
    const double ux = std::cos(p.angle);
    const double uy = std::sin(p.angle);
    const double along = (x - p.cx) * ux + (y - p.cy) * uy;
    const double across = -(x - p.cx) * uy + (y - p.cy) * ux;
    const double half_len = 2.0 * p.radius;
    const double half_width = 0.5 * p.radius;
    const double sigma = half_width / 2.0;
    const double over = std::max(0.0, std::abs(along) - half_len + 2.0 * sigma);
    const double value = std::exp(-(across * across + over * over) / (2.0 * sigma * sigma));
    const bool inside = std::abs(across) <= half_width && std::abs(along) <= half_len;
    return {value, inside};
  }
  double value = 0.0;
  bool inside = false;
  for (const auto& b : blob_centers(spec, p)) {
    const double d2 = (x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy);
    const double sigma = b.radius / 2.0;
    value = std::max(value, std::exp(-d2 / (2.0 * sigma * sigma)));
    inside = inside || d2 <= b.radius * b.radius;
  }
  return {value, inside};
}

void check_spec(const LesionSpec& spec, int side) {
  if (spec.kind == LesionKind::kNone) return;
  if (!(spec.intensity >= 0.0 && spec.intensity <= 1.0)) {
    throw Error("lesion intensity must lie in [0, 1]");
  }
  if (!(spec.size_fraction > 0.0 && spec.size_fraction <= 0.5)) {
    throw Error("lesion size_fraction must lie in (0, 0.5]");
  }
  const double radius = spec.size_fraction * side / 2.0;
  if (feature_extent(spec, radius) > side) {
    throw Error("lesion " + to_string(spec.kind) + " with size_fraction " +
                std::to_string(spec.size_fraction) + " does not fit a " + std::to_string(side) +
                " pixel image");
  }
  if (radius < 1.0) throw Error("lesion radius below one pixel");
}

}  // namespace

std::string to_string(LesionKind kind) {
  switch (kind) {
    case LesionKind::kNone: return "none";
    case LesionKind::kBlob: return "blob";
    case LesionKind::kRidge: return "ridge";
    case LesionKind::kDoubleBlob: return "double_blob";
  }
  return "unknown";
}

LesionKind lesion_kind_from_string(const std::string& name) {
  if (name == "none") return LesionKind::kNone;
  if (name == "blob") return LesionKind::kBlob;
  if (name == "ridge") return LesionKind::kRidge;
  if (name == "double_blob") return LesionKind::kDoubleBlob;
  throw Error("unknown lesion kind '" + name + "'");
}

std::size_t GroundTruthMask::area() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

GroundTruthMask placement_mask(const LesionSpec& spec, const Placement& p, int side) {
  GroundTruthMask m{side, std::vector<std::uint8_t>(static_cast<std::size_t>(side) * side, 0)};
  if (spec.kind == LesionKind::kNone) return m;
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      if (feature_at(spec, p, x + 0.5, y + 0.5).second) {
        m.mask[static_cast<std::size_t>(y) * side + x] = 1;
      }
    }
  }
  return m;
}

SynthSet generate_dataset(const std::vector<LesionSpec>& classes, int n_per_class,
                          const SynthOptions& options, RandomStream& rng) {
  if (classes.size() < 2) throw Error("generate_dataset: need at least two classes");
  if (n_per_class < 1) throw Error("generate_dataset: n_per_class must be at least 1");
  if (options.channels != 1 && options.channels != 3) {
    throw Error("generate_dataset: channels must be 1 or 3");
  }
  const int side = options.side;
  if (side < 8) throw Error("generate_dataset: side must be at least 8");
  std::set<LesionKind> kinds;
  for (const auto& spec : classes) {
    check_spec(spec, side);
    if (!kinds.insert(spec.kind).second) {
      throw Error("generate_dataset: lesion kind " + to_string(spec.kind) + " used twice");
    }
  }

  SynthSet out;
  const int k_count = static_cast<int>(classes.size());
  out.dataset.class_count = k_count;
  out.dataset.split = options.split;
  for (const auto& spec : classes) out.dataset.class_names.push_back(to_string(spec.kind));

  // One child stream per (class, index); generation order does not matter.
  const RandomStream base = rng.split(rng.next_u64());
  for (int k = 0; k < k_count; ++k) {
    const LesionSpec& spec = classes[static_cast<std::size_t>(k)];
    for (int i = 0; i < n_per_class; ++i) {
      RandomStream srng = base.split(static_cast<std::uint64_t>(k) * 1000003ULL + i);
      std::vector<double> gray = background(side, srng);
      std::vector<double> tint(static_cast<std::size_t>(options.channels), 1.0);
      for (double& t : tint) t = 1.0 + srng.uniform(-0.1, 0.1);

      Placement p;
      p.cx = srng.uniform(0.2, 0.8) * side;
      p.cy = srng.uniform(0.2, 0.8) * side;
      p.angle = srng.uniform(0.0, std::numbers::pi);
      p.radius = spec.kind == LesionKind::kNone ? 0.0 : spec.size_fraction * side / 2.0;

      GroundTruthMask mask{side, std::vector<std::uint8_t>(static_cast<std::size_t>(side) * side, 0)};
      std::vector<float> pixels(static_cast<std::size_t>(side) * side * options.channels);
      for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
          const std::size_t idx = static_cast<std::size_t>(y) * side + x;
          double lesion = 0.0;
          if (spec.kind != LesionKind::kNone) {
            auto [value, inside] = feature_at(spec, p, x + 0.5, y + 0.5);
            lesion = spec.intensity * value;
            mask.mask[idx] = inside ? 1 : 0;
          }
          for (int c = 0; c < options.channels; ++c) {
            const double v = gray[idx] * tint[static_cast<std::size_t>(c)] + lesion;
            pixels[idx * options.channels + c] = static_cast<float>(std::clamp(v, -1.0, 1.0));
          }
        }
      }
      std::string id = options.id_prefix + to_string(spec.kind) + "_" + std::to_string(i);
      out.masks.emplace(id, std::move(mask));
      out.placements.emplace(id, p);
      out.dataset.samples.push_back(
          {id, ImageTensor(side, options.channels, std::move(pixels)), ClassLabel(k, k_count)});
    }
  }
  return out;
}

void write_synth_set(const SynthSet& set, const std::vector<LesionSpec>& classes,
                     const fs::path& root) {
  const std::string split = set.dataset.split == Split::kTrain ? "train" : "test";
  save_dataset(set.dataset, root / split);
  fs::create_directories(root / "masks");
  const fs::path manifest = root / "manifest.tsv";
  const bool fresh = !fs::exists(manifest);
  std::ofstream out(manifest, std::ios::app);
  if (!out) throw Error("cannot write " + manifest.string());
  if (fresh) out << "id\tsplit\tclass\tkind\tintensity\tsize_fraction\tcx\tcy\tangle\n";
  for (const auto& s : set.dataset.samples) {
    const auto& mask = set.masks.at(s.id);
    RawImage raw{mask.side, mask.side, 1, {}};
    for (auto m : mask.mask) raw.data.push_back(m ? 255.0f : 0.0f);
    write_png(root / "masks" / (s.id + ".png"), raw);
    const auto& spec = classes.at(static_cast<std::size_t>(s.label.index));
    const auto& p = set.placements.at(s.id);
    out << s.id << '\t' << split << '\t' << set.dataset.class_names[static_cast<std::size_t>(s.label.index)]
        << '\t' << to_string(spec.kind) << '\t' << spec.intensity << '\t' << spec.size_fraction
        << '\t' << p.cx << '\t' << p.cy << '\t' << p.angle << '\n';
  }
}

std::map<std::string, GroundTruthMask> load_masks(const Dataset& ds, const fs::path& root) {
  std::map<std::string, GroundTruthMask> out;
  for (const auto& s : ds.samples) {
    const fs::path f = root / "masks" / (s.id + ".png");
    if (!fs::exists(f)) continue;
    RawImage raw = read_png(f);
    GroundTruthMask m{raw.width, {}};
    for (int i = 0; i < raw.height * raw.width; ++i) {
      m.mask.push_back(raw.data[static_cast<std::size_t>(i) * raw.channels] > 127.0f ? 1 : 0);
    }
    out.emplace(s.id, std::move(m));
  }
  return out;
}

}  // namespace cae::synth
