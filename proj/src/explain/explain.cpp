#include "cae/explain/explain.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

#include "cae/core/dataset_io.hpp"

namespace cae::explain {

namespace fs = std::filesystem;

namespace {

constexpr std::int64_t kChunk = 64;

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Heatmap zero_map(int side) {
  return Heatmap{side, std::vector<double>(static_cast<std::size_t>(side) * side, 0.0)};
}

// Scales to max 1; returns false (and zeroes the map) when nothing is positive.
bool normalize(Heatmap& m) {
  const double mx = m.max();
  if (!(mx > 0.0) || !std::isfinite(mx)) {
    std::fill(m.values.begin(), m.values.end(), 0.0);
    return false;
  }
  for (auto& v : m.values) v /= mx;
  return true;
}

Heatmap abs_diff(const ImageTensor& a, const ImageTensor& b) {
  Heatmap m = zero_map(a.side());
  const auto da = a.data();
  const auto db = b.data();
  const int c = a.channels();
  for (std::size_t p = 0; p < m.values.size(); ++p) {
    double s = 0.0;
    for (int k = 0; k < c; ++k) {
      s += std::abs(static_cast<double>(da[p * c + k]) - static_cast<double>(db[p * c + k]));
    }
    m.values[p] = s;
  }
  return m;
}

void check_series(const CounterfactualSeries& s) {
  if (s.frames.size() < 2) throw Error("a series needs at least two frames");
  if (!s.probs.empty() && s.probs.size() != s.frames.size()) {
    throw Error("series has " + std::to_string(s.probs.size()) + " probability vectors for " +
                std::to_string(s.frames.size()) + " frames");
  }
}

// Per-sample class and individual codes of a dataset, batched.
struct EncodedSet {
  torch::Tensor codes;
  torch::Tensor indiv;
};

EncodedSet encode_all(const nets::ModelBundle& bundle, const Dataset& ds) {
  std::vector<ImageTensor> images;
  for (const auto& s : ds.samples) {
    nets::check_image(bundle, s.image);
    images.push_back(s.image);
  }
  auto x = nets::images_to_tensor(images, bundle.dtype());
  return {nets::encode_class_batch(bundle, x), nets::encode_indiv_batch(bundle, x)};
}

struct SwapTrial {
  std::size_t sample = 0;
  std::size_t partner = 0;
};

// For each sample: a uniformly chosen other class, then a uniform sample of it.
std::vector<SwapTrial> draw_swaps(const Dataset& ds, RandomStream& rng) {
  const auto by_class = ds.indices_by_class();
  std::vector<SwapTrial> out;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const int own = ds.samples[i].label.index;
    std::vector<int> others;
    for (int k = 0; k < ds.class_count; ++k) {
      if (k != own && !by_class[static_cast<std::size_t>(k)].empty()) others.push_back(k);
    }
    if (others.empty()) throw Error("swap needs samples of at least two classes");
    const auto& pool = by_class[static_cast<std::size_t>(others[rng.below(others.size())])];
    out.push_back({i, pool[rng.below(pool.size())]});
  }
  return out;
}

// Decodes the swaps in chunks; returns the decoded frames' predicted classes
// and, if requested, the frames.
std::vector<int> run_swaps(const nets::ModelBundle& bundle, const EncodedSet& enc,
                           const std::vector<SwapTrial>& trials,
                           const BlackBoxClassifier& classifier,
                           std::vector<ImageTensor>* frames_out) {
  std::vector<int> pred;
  for (std::size_t off = 0; off < trials.size(); off += kChunk) {
    const auto end = std::min(trials.size(), off + static_cast<std::size_t>(kChunk));
    std::vector<std::int64_t> own, partner;
    for (std::size_t i = off; i < end; ++i) {
      own.push_back(static_cast<std::int64_t>(trials[i].sample));
      partner.push_back(static_cast<std::int64_t>(trials[i].partner));
    }
    auto frames = nets::decode_batch(bundle, enc.codes.index_select(0, torch::tensor(partner)),
                                     enc.indiv.index_select(0, torch::tensor(own)));
    frames = frames.to(torch::kFloat32);
    auto p = classifier.predict_tensor(frames).argmax(1);
    for (std::int64_t i = 0; i < p.size(0); ++i) pred.push_back(static_cast<int>(p[i].item<std::int64_t>()));
    if (frames_out) {
      for (auto& f : nets::tensor_to_images(frames)) frames_out->push_back(std::move(f));
    }
  }
  return pred;
}

}  // namespace

double Heatmap::max() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, v);
  return m;
}

CounterfactualSeries generate_series(const nets::ModelBundle& bundle, const LabeledSample& source,
                                     const manifold::PathSpec& path,
                                     const BlackBoxClassifier& classifier, int destination_class) {
  if (static_cast<int>(path.start.dim()) != bundle.config.code_dim) {
    throw Error("path codes have length " + std::to_string(path.start.dim()) + ", model uses " +
                std::to_string(bundle.config.code_dim));
  }
  if (destination_class < 0 || destination_class >= classifier.class_count()) {
    throw Error("destination class " + std::to_string(destination_class) + " out of range");
  }
  CounterfactualSeries s;
  s.source_id = source.id;
  s.source_class = source.label.index;
  s.destination_class = destination_class;
  s.path = path;
  const auto indiv = nets::encode_indiv(bundle, source.image);
  for (const auto& point : path.points()) s.frames.push_back(nets::decode(bundle, point, indiv));

  try {
    s.probs = classifier.predict_batch(s.frames);
  } catch (const std::exception&) {
    // Locate the failing frame.
    for (std::size_t i = 0; i < s.frames.size(); ++i) {
      try {
        check_probabilities(classifier.predict(s.frames[i]), classifier.class_count());
      } catch (const std::exception& e) {
        throw Error("classifier failed on frame " + std::to_string(i) + ": " + e.what());
      }
    }
    throw;
  }
  if (s.probs.size() != s.frames.size()) throw Error("classifier returned the wrong number of results");
  for (std::size_t i = 0; i < s.probs.size(); ++i) {
    try {
      check_probabilities(s.probs[i], classifier.class_count());
    } catch (const std::exception& e) {
      throw Error("classifier failed on frame " + std::to_string(i) + ": " + e.what());
    }
  }
  return s;
}

std::vector<Heatmap> difference_maps(const CounterfactualSeries& series) {
  check_series(series);
  std::vector<Heatmap> out;
  for (std::size_t n = 0; n + 1 < series.frames.size(); ++n) {
    out.push_back(abs_diff(series.frames[n + 1], series.frames[n]));
  }
  return out;
}

std::string to_string(Weighting w) {
  return w == Weighting::kProbDelta ? "prob_delta" : "endpoint_contrast";
}

Weighting weighting_from_string(const std::string& s) {
  if (s == "prob_delta") return Weighting::kProbDelta;
  if (s == "endpoint_contrast") return Weighting::kEndpointContrast;
  throw Error("unknown weighting '" + s + "' (expected prob_delta or endpoint_contrast)");
}

SaliencyResult saliency_map(const CounterfactualSeries& series, Weighting weighting) {
  check_series(series);
  if (series.probs.size() != series.frames.size()) throw Error("series has no probabilities");
  SaliencyResult r;
  r.weighting = weighting;
  r.differences = difference_maps(series);
  r.flip_index = pick_destination(series);
  const auto dst = static_cast<std::size_t>(series.destination_class);
  if (weighting == Weighting::kProbDelta) {
    r.saliency = zero_map(series.frames.front().side());
    for (std::size_t n = 0; n < r.differences.size(); ++n) {
      const double w = std::max(0.0, series.probs[n + 1].at(dst) - series.probs[n].at(dst));
      r.weights.push_back(w);
      if (w == 0.0) continue;
      for (std::size_t p = 0; p < r.saliency.values.size(); ++p) {
        r.saliency.values[p] += w * r.differences[n].values[p];
      }
    }
  } else {
    r.saliency = abs_diff(series.frames.back(), series.frames.front());
  }
  r.degenerate = !normalize(r.saliency);
  return r;
}

std::optional<int> pick_destination(const CounterfactualSeries& series) {
  for (std::size_t n = 0; n < series.probs.size(); ++n) {
    if (static_cast<int>(argmax(series.probs[n])) == series.destination_class) {
      return static_cast<int>(n);
    }
  }
  return std::nullopt;
}

std::vector<SwapDirection> swap_audit(const nets::ModelBundle& bundle, const Dataset& ds,
                                      const BlackBoxClassifier& classifier, RandomStream& rng) {
  if (classifier.class_count() != bundle.config.class_count) {
    throw Error("classifier and model class counts differ");
  }
  if (ds.empty()) return {};
  const auto trials = draw_swaps(ds, rng);
  const auto enc = encode_all(bundle, ds);
  const auto pred = run_swaps(bundle, enc, trials, classifier, nullptr);
  std::vector<SwapDirection> dirs;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const int from = ds.samples[trials[i].sample].label.index;
    const int to = ds.samples[trials[i].partner].label.index;
    auto it = std::find_if(dirs.begin(), dirs.end(),
                           [&](const SwapDirection& d) { return d.from == from && d.to == to; });
    if (it == dirs.end()) {
      dirs.push_back({from, to, 0, 0});
      it = dirs.end() - 1;
    }
    ++it->total;
    if (pred[i] == to) ++it->hits;
  }
  std::sort(dirs.begin(), dirs.end(), [](const SwapDirection& a, const SwapDirection& b) {
    return std::pair(a.from, a.to) < std::pair(b.from, b.to);
  });
  return dirs;
}

OcclusionConfig OcclusionConfig::resolved(int side) const {
  OcclusionConfig c = *this;
  if (c.window <= 0) c.window = std::max(1, side / 8);
  if (c.stride <= 0) c.stride = std::max(1, c.window / 2);
  return c;
}

OcclusionResult occlusion_baseline(const ImageTensor& image, const BlackBoxClassifier& classifier,
                                   int source_class, const OcclusionConfig& config) {
  const int side = image.side();
  const auto cfg = config.resolved(side);
  if (cfg.window > side) throw Error("occlusion window exceeds the image side");
  if (!(cfg.gray >= -1.0f && cfg.gray <= 1.0f)) throw Error("occlusion gray value outside [-1, 1]");
  if (source_class < 0 || source_class >= classifier.class_count()) {
    throw Error("occlusion source class out of range");
  }
  OcclusionResult r;
  r.coverage_gaps = cfg.stride > cfg.window;

  std::vector<std::pair<int, int>> origins;
  for (int y = 0; y + cfg.window <= side; y += cfg.stride) {
    for (int x = 0; x + cfg.window <= side; x += cfg.stride) origins.emplace_back(y, x);
  }
  const int c = image.channels();
  auto batch = torch::empty({static_cast<std::int64_t>(origins.size()) + 1, c, side, side},
                            torch::kFloat32);
  batch[0].copy_(nets::image_to_tensor(image));
  for (std::size_t i = 0; i < origins.size(); ++i) {
    auto t = batch[static_cast<std::int64_t>(i) + 1];
    t.copy_(batch[0]);
    t.narrow(1, origins[i].first, cfg.window).narrow(2, origins[i].second, cfg.window).fill_(cfg.gray);
  }
  const auto probs = classifier.predict_tensor(batch);
  r.evaluations = origins.size() + 1;
  const double base = probs[0][source_class].item<double>();

  Heatmap sum = zero_map(side);
  std::vector<int> hits(sum.values.size(), 0);
  for (std::size_t i = 0; i < origins.size(); ++i) {
    const double drop = base - probs[static_cast<std::int64_t>(i) + 1][source_class].item<double>();
    for (int y = origins[i].first; y < origins[i].first + cfg.window; ++y) {
      for (int x = origins[i].second; x < origins[i].second + cfg.window; ++x) {
        const auto p = static_cast<std::size_t>(y) * side + x;
        sum.values[p] += drop;
        ++hits[p];
      }
    }
  }
  for (std::size_t p = 0; p < sum.values.size(); ++p) {
    sum.values[p] = hits[p] ? std::max(0.0, sum.values[p] / hits[p]) : 0.0;
  }
  normalize(sum);
  r.saliency = std::move(sum);
  return r;
}

int default_destination(int source_class, int class_count) {
  if (class_count < 2) throw Error("need at least two classes");
  return (source_class + 1) % class_count;
}

Explanation explain_sample(const nets::ModelBundle& bundle, const manifold::CodeTable& table,
                           const BlackBoxClassifier& classifier, const LabeledSample& source,
                           int destination_class, int n_steps, Weighting weighting) {
  const auto start = nets::encode_class(bundle, source.image);
  const auto path =
      manifold::build_path(start, manifold::class_centroid(table, destination_class), n_steps);
  Explanation e;
  e.series = generate_series(bundle, source, path, classifier, destination_class);
  e.result = saliency_map(e.series, weighting);
  return e;
}

CostReport cost_benchmark(const nets::ModelBundle& bundle, const manifold::CodeTable& table,
                          const BlackBoxClassifier& classifier,
                          const std::vector<LabeledSample>& samples, int n_steps,
                          const OcclusionConfig& occlusion) {
  CostReport rep;
  if (samples.empty()) return rep;
  using clock = std::chrono::steady_clock;
  const int k = bundle.config.class_count;
  auto run_cae = [&](const LabeledSample& s) {
    explain_sample(bundle, table, classifier, s, default_destination(s.label.index, k), n_steps);
  };
  auto run_occ = [&](const LabeledSample& s) {
    occlusion_baseline(s.image, classifier, s.label.index, occlusion);
  };
  run_cae(samples.front());
  run_occ(samples.front());
  for (const auto& s : samples) {
    auto t0 = clock::now();
    run_cae(s);
    auto t1 = clock::now();
    run_occ(s);
    auto t2 = clock::now();
    rep.cae_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
    rep.occlusion_seconds.push_back(std::chrono::duration<double>(t2 - t1).count());
  }
  rep.cae_median = median(rep.cae_seconds);
  rep.occlusion_median = median(rep.occlusion_seconds);
  return rep;
}

Dataset append_misclassified_swaps(const nets::ModelBundle& bundle, const Dataset& ds,
                                   const BlackBoxClassifier& classifier, RandomStream& rng) {
  Dataset out = ds;
  if (ds.empty()) return out;
  const auto trials = draw_swaps(ds, rng);
  const auto enc = encode_all(bundle, ds);
  std::vector<ImageTensor> frames;
  const auto pred = run_swaps(bundle, enc, trials, classifier, &frames);
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto& partner = ds.samples[trials[i].partner];
    if (pred[i] == partner.label.index) continue;
    out.samples.push_back({ds.samples[trials[i].sample].id + "~swap" + std::to_string(i),
                           frames[i], partner.label});
  }
  out.validate();
  return out;
}

RawImage overlay_image(const ImageTensor& source, const Heatmap& saliency) {
  if (saliency.side != source.side()) throw Error("overlay: saliency and image sizes differ");
  const int side = source.side();
  const int c = source.channels();
  RawImage out{side, side, 3, std::vector<float>(static_cast<std::size_t>(side) * side * 3)};
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      double g = 0.0;
      for (int k = 0; k < c; ++k) g += source.at(y, x, k);
      g = (g / c + 1.0) * 127.5;
      const double a = 0.6 * std::clamp(saliency.at(y, x), 0.0, 1.0);
      const auto p = (static_cast<std::size_t>(y) * side + x) * 3;
      out.data[p] = static_cast<float>(std::round((1.0 - a) * g + a * 255.0));
      out.data[p + 1] = static_cast<float>(std::round((1.0 - a) * g));
      out.data[p + 2] = static_cast<float>(std::round((1.0 - a) * g));
    }
  }
  return out;
}

void write_overlay_png(const ImageTensor& source, const Heatmap& saliency, const fs::path& path) {
  write_png(path, overlay_image(source, saliency));
}

void write_float_grid(const Heatmap& map, const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  const std::uint32_t h = static_cast<std::uint32_t>(map.side);
  os.write("CAEGRID1", 8);
  os.write(reinterpret_cast<const char*>(&h), 4);
  os.write(reinterpret_cast<const char*>(&h), 4);
  for (double v : map.values) {
    const float f = static_cast<float>(v);
    os.write(reinterpret_cast<const char*>(&f), 4);
  }
  if (!os) throw Error("failed writing " + path.string());
}

Heatmap read_float_grid(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read " + path.string());
  char magic[8];
  std::uint32_t h = 0, w = 0;
  is.read(magic, 8);
  is.read(reinterpret_cast<char*>(&h), 4);
  is.read(reinterpret_cast<char*>(&w), 4);
  if (!is || std::memcmp(magic, "CAEGRID1", 8) != 0) throw Error("not a float grid: " + path.string());
  if (h != w) throw Error("float grid is not square");
  Heatmap m = zero_map(static_cast<int>(h));
  for (auto& v : m.values) {
    float f = 0.0f;
    is.read(reinterpret_cast<char*>(&f), 4);
    v = f;
  }
  if (!is) throw Error("truncated float grid: " + path.string());
  return m;
}

std::string saliency_summary(const CounterfactualSeries& series, const SaliencyResult& result) {
  nlohmann::json j;
  j["source_id"] = series.source_id;
  j["source_class"] = series.source_class;
  j["destination_class"] = series.destination_class;
  j["n_steps"] = series.frames.size();
  j["weighting"] = to_string(result.weighting);
  j["flip_index"] = result.flip_index ? nlohmann::json(*result.flip_index) : nlohmann::json(nullptr);
  j["degenerate"] = result.degenerate;
  j["probs"] = series.probs;
  j["weights"] = result.weights;
  return j.dump(2);
}

}  // namespace cae::explain
