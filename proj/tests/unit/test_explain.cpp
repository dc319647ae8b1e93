#include <algorithm>
#include <cmath>
#include <fstream>

#include "testing.hpp"

#include "cae/core/dataset_io.hpp"
#include "cae/explain/explain.hpp"

using namespace cae;
namespace X = cae::explain;

namespace {

ImageTensor random_image(int side, int channels, RandomStream& rng) {
  std::vector<float> v(static_cast<std::size_t>(side) * side * channels);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return ImageTensor(side, channels, std::move(v));
}

/// Series of given frames and destination-class probabilities (K = 2, destination 1).
X::CounterfactualSeries series_of(std::vector<ImageTensor> frames, const std::vector<double>& p_dest) {
  X::CounterfactualSeries s;
  s.source_id = "s";
  s.source_class = 0;
  s.destination_class = 1;
  s.frames = std::move(frames);
  for (double p : p_dest) s.probs.push_back({1.0 - p, p});
  return s;
}

double brute_abs_sum(const ImageTensor& a, const ImageTensor& b, int y, int x) {
  double s = 0.0;
  for (int c = 0; c < a.channels(); ++c) s += std::fabs(a.at(y, x, c) - b.at(y, x, c));
  return s;
}

}  // namespace

TEST_CASE("difference maps: zero, single pixel, elementwise oracle, triangle bound") {
  const auto blank = ImageTensor::filled(8, 1, 0.f);
  auto one = blank;
  {
    std::vector<float> v(blank.data().begin(), blank.data().end());
    v[3 * 8 + 5] = 0.4f;
    one = ImageTensor(8, 1, v);
  }
  const auto d = X::difference_maps(series_of({blank, blank, one}, {0.1, 0.2, 0.9}));
  REQUIRE(d.size() == 2);
  CHECK(d[0].max() == 0.0);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) CHECK(d[1].at(y, x) == doctest::Approx(y == 3 && x == 5 ? 0.4 : 0.0));
  }

  RandomStream rng(1);
  std::vector<ImageTensor> frames;
  for (int i = 0; i < 5; ++i) frames.push_back(random_image(6, 3, rng));
  const auto r = X::difference_maps(series_of(frames, {0, 0.2, 0.4, 0.6, 0.8}));
  REQUIRE(r.size() == 4);
  for (std::size_t n = 0; n < r.size(); ++n) {
    for (int y = 0; y < 6; ++y) {
      for (int x = 0; x < 6; ++x) {
        CHECK(std::fabs(r[n].at(y, x) - brute_abs_sum(frames[n + 1], frames[n], y, x)) < 1e-6);
      }
    }
  }
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 6; ++x) {
      double sum = 0.0;
      for (const auto& m : r) sum += m.at(y, x);
      CHECK(sum + 1e-6 >= brute_abs_sum(frames.back(), frames.front(), y, x));
    }
  }
}

TEST_CASE("saliency: weights are clamped rises, telescoping, range, modes") {
  RandomStream rng(2);
  std::vector<ImageTensor> frames;
  for (int i = 0; i < 4; ++i) frames.push_back(random_image(8, 1, rng));
  const auto s = series_of(frames, {0.1, 0.3, 0.25, 0.9});
  const auto r = X::saliency_map(s);
  REQUIRE(r.weights.size() == 3);
  CHECK(r.weights[0] == doctest::Approx(0.2));
  CHECK(r.weights[1] == 0.0);
  CHECK(r.weights[2] == doctest::Approx(0.65));
  CHECK_FALSE(r.degenerate);
  CHECK(r.saliency.max() == doctest::Approx(1.0));
  for (double v : r.saliency.values) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0 + 1e-12);
  }
  // Weighted sum oracle, then max-normalized.
  const auto d = X::difference_maps(s);
  std::vector<double> agg(64, 0.0);
  for (std::size_t n = 0; n < d.size(); ++n) {
    for (std::size_t i = 0; i < 64; ++i) agg[i] += r.weights[n] * d[n].values[i];
  }
  const double mx = *std::max_element(agg.begin(), agg.end());
  for (std::size_t i = 0; i < 64; ++i) CHECK(std::fabs(r.saliency.values[i] - agg[i] / mx) < 1e-9);

  // Monotone series: weights sum to the total rise.
  const auto mono = X::saliency_map(series_of(frames, {0.0, 0.2, 0.5, 0.95}));
  double total = 0.0;
  for (double w : mono.weights) total += w;
  CHECK(total == doctest::Approx(0.95));

  // Endpoint contrast is |last - first| normalized.
  const auto e = X::saliency_map(s, X::Weighting::kEndpointContrast);
  CHECK(e.weighting == X::Weighting::kEndpointContrast);
  std::vector<double> c(64);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) c[static_cast<std::size_t>(y * 8 + x)] = brute_abs_sum(frames[3], frames[0], y, x);
  }
  const double cm = *std::max_element(c.begin(), c.end());
  for (std::size_t i = 0; i < 64; ++i) CHECK(std::fabs(e.saliency.values[i] - c[i] / cm) < 1e-6);
}

TEST_CASE("two frames: both modes agree up to normalization") {
  RandomStream rng(3);
  const auto s = series_of({random_image(8, 1, rng), random_image(8, 1, rng)}, {0.2, 0.7});
  const auto a = X::saliency_map(s, X::Weighting::kProbDelta);
  const auto b = X::saliency_map(s, X::Weighting::kEndpointContrast);
  for (std::size_t i = 0; i < a.saliency.values.size(); ++i) {
    CHECK(std::fabs(a.saliency.values[i] - b.saliency.values[i]) < 1e-6);
  }
}

TEST_CASE("degenerate series give a flagged zero map") {
  RandomStream rng(4);
  const auto img = random_image(8, 1, rng);
  const auto same = X::saliency_map(series_of({img, img, img}, {0.1, 0.5, 0.9}));
  CHECK(same.degenerate);
  CHECK(same.saliency.max() == 0.0);
  const auto flat = X::saliency_map(series_of({img, random_image(8, 1, rng)}, {0.6, 0.4}));
  CHECK(flat.degenerate);
  CHECK(flat.saliency.max() == 0.0);
}

TEST_CASE("pick_destination: none, known flip, linear-scan oracle, truncation") {
  RandomStream rng(5);
  const auto img = random_image(4, 1, rng);
  std::vector<ImageTensor> frames(10, img);
  CHECK_FALSE(X::pick_destination(series_of(frames, std::vector<double>(10, 0.1))).has_value());
  std::vector<double> p(10, 0.1);
  for (int i = 3; i < 10; ++i) p[static_cast<std::size_t>(i)] = 0.8;
  CHECK(X::pick_destination(series_of(frames, p)) == 3);

  for (int trial = 0; trial < 200; ++trial) {
    X::CounterfactualSeries s;
    s.destination_class = static_cast<int>(rng.below(3));
    const int n = 2 + static_cast<int>(rng.below(8));
    for (int i = 0; i < n; ++i) {
      std::vector<double> q{rng.uniform(), rng.uniform(), rng.uniform()};
      const double z = q[0] + q[1] + q[2];
      for (auto& v : q) v /= z;
      s.probs.push_back(q);
      s.frames.push_back(img);
    }
    std::optional<int> expect;
    for (int i = 0; i < n && !expect; ++i) {
      const auto& q = s.probs[static_cast<std::size_t>(i)];
      const auto best = static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
      if (best == s.destination_class) expect = i;
    }
    const auto got = X::pick_destination(s);
    CHECK(got == expect);
    if (got) {
      auto cut = s;
      cut.probs.resize(static_cast<std::size_t>(*got + 1));
      cut.frames.resize(static_cast<std::size_t>(*got + 1));
      CHECK(X::pick_destination(cut) == got);
    }
  }
}

TEST_CASE("generate_series: frame 0 is the reconstruction, counts, constant path") {
  auto b = nets::ModelBundle::create(testing::tiny_net(), 6);
  const auto set = testing::lesion_set(16, 2, 6);
  const auto& src = set.dataset.samples[0];
  const X::FunctionClassifier half(2, [](const ImageTensor&) { return std::vector<double>{0.5, 0.5}; });
  const auto code = nets::encode_class(b, src.image);
  const auto recon = nets::decode(b, code, nets::encode_indiv(b, src.image));

  const auto fixed = X::generate_series(b, src, manifold::build_path(code, code, 2), half, 1);
  REQUIRE(fixed.frames.size() == 2);
  CHECK(fixed.frames[0] == recon);
  CHECK(fixed.frames[1] == recon);
  CHECK(fixed.probs.size() == 2);

  const auto other = nets::encode_class(b, set.dataset.samples[3].image);
  const auto s = X::generate_series(b, src, manifold::build_path(code, other, 7), half, 1);
  CHECK(s.frames.size() == 7);
  CHECK(s.frames[0] == recon);
  CHECK(s.source_id == src.id);
  // Deterministic.
  const auto again = X::generate_series(b, src, manifold::build_path(code, other, 7), half, 1);
  for (std::size_t i = 0; i < 7; ++i) CHECK(again.frames[i] == s.frames[i]);

  const X::FunctionClassifier broken(2, [](const ImageTensor&) { return std::vector<double>{0.9, 0.9}; });
  try {
    X::generate_series(b, src, manifold::build_path(code, other, 3), broken, 1);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("frame 0") != std::string::npos);
  }
  CHECK_THROWS_AS(X::generate_series(b, src, manifold::build_path(ClassStyleCode({1.f}), ClassStyleCode({2.f}), 2),
                                     half, 1),
                  Error);
}

TEST_CASE("swap audit counts with an oracle classifier") {
  auto b = nets::ModelBundle::create(testing::tiny_net(), 7);
  const auto set = testing::lesion_set(16, 5, 7);
  RandomStream rng(7);
  // Every decode is classified as class 1: none->blob always hits, blob->none never.
  const X::FunctionClassifier ones(2, [](const ImageTensor&) { return std::vector<double>{0.0, 1.0}; });
  const auto r = X::swap_audit(b, set.dataset, ones, rng);
  REQUIRE(r.size() == 2);
  for (const auto& d : r) {
    CHECK(d.total == 5);
    CHECK(d.rate() == (d.to == 1 ? 1.0 : 0.0));
  }
  const auto three = testing::lesion_set(16, 4, 8, {synth::LesionKind::kNone, synth::LesionKind::kBlob,
                                                    synth::LesionKind::kRidge});
  auto b3 = nets::ModelBundle::create(testing::tiny_net(16, 3), 8);
  std::size_t total = 0;
  for (const auto& d : X::swap_audit(b3, three.dataset,
                                     X::FunctionClassifier(3, [](const ImageTensor&) {
                                       return std::vector<double>{0.2, 0.3, 0.5};
                                     }),
                                     rng)) {
    CHECK(d.from != d.to);
    total += d.total;
  }
  CHECK(total == 12);
}

TEST_CASE("misclassified swaps are appended with their intended labels") {
  auto b = nets::ModelBundle::create(testing::tiny_net(), 9);
  const auto set = testing::lesion_set(16, 3, 9);
  RandomStream rng(9);
  const X::FunctionClassifier zeros(2, [](const ImageTensor&) { return std::vector<double>{1.0, 0.0}; });
  const auto out = X::append_misclassified_swaps(b, set.dataset, zeros, rng);
  // none->blob swaps are all wrong (3 appended, labelled blob); blob->none are right.
  CHECK(out.size() == set.dataset.size() + 3);
  for (std::size_t i = set.dataset.size(); i < out.size(); ++i) CHECK(out.samples[i].label.index == 1);
  CHECK_NOTHROW(out.validate());
}

TEST_CASE("occlusion: blind classifier, region oracle, window count, gaps") {
  const int side = 32;
  const auto img = ImageTensor::filled(side, 1, 0.8f);
  const X::FunctionClassifier blind(2, [](const ImageTensor&) { return std::vector<double>{0.7, 0.3}; });
  const auto z = X::occlusion_baseline(img, blind, 0);
  CHECK(z.saliency.max() == 0.0);

  // Source probability = mean intensity over rows 8..15, columns 16..23.
  const X::FunctionClassifier region(2, [](const ImageTensor& x) {
    double s = 0.0;
    for (int y = 8; y < 16; ++y) {
      for (int c = 16; c < 24; ++c) s += (x.at(y, c, 0) + 1.0) / 2.0;
    }
    const double p = s / 64.0;
    return std::vector<double>{p, 1.0 - p};
  });
  const auto r = X::occlusion_baseline(img, region, 0);
  CHECK(r.saliency.max() == doctest::Approx(1.0));
  CHECK(r.saliency.at(11, 19) == doctest::Approx(1.0));
  CHECK(r.saliency.at(28, 3) == 0.0);
  const auto cfg = X::OcclusionConfig{}.resolved(side);
  CHECK(cfg.window == 4);
  CHECK(cfg.stride == 2);
  const int positions = (side - cfg.window) / cfg.stride + 1;
  CHECK(r.evaluations == static_cast<std::size_t>(positions * positions + 1));
  CHECK_FALSE(r.coverage_gaps);

  const auto gaps = X::occlusion_baseline(img, region, 0, {4, 6, 0.0f});
  CHECK(gaps.coverage_gaps);
  CHECK_THROWS_AS(X::occlusion_baseline(img, region, 0, {40, 2, 0.0f}), Error);
}

TEST_CASE("destinations, weighting names, probability checks") {
  CHECK(X::default_destination(0, 2) == 1);
  CHECK(X::default_destination(1, 2) == 0);
  CHECK(X::default_destination(2, 3) == 0);
  CHECK(X::weighting_from_string(X::to_string(X::Weighting::kEndpointContrast)) ==
        X::Weighting::kEndpointContrast);
  CHECK(X::weighting_from_string("prob_delta") == X::Weighting::kProbDelta);
  CHECK_THROWS_AS(X::weighting_from_string("other"), Error);
  CHECK_NOTHROW(X::check_probabilities({0.25, 0.75}, 2));
  CHECK_THROWS_AS(X::check_probabilities({0.25, 0.7}, 2), Error);
  CHECK_THROWS_AS(X::check_probabilities({-0.1, 1.1}, 2), Error);
  CHECK_THROWS_AS(X::check_probabilities({1.0}, 2), Error);
  CHECK(X::argmax({0.1, 0.6, 0.3}) == 1);
}

TEST_CASE("float grid and overlay exports") {
  testing::TempDir dir("explain_io");
  X::Heatmap h{4, {}};
  for (int i = 0; i < 16; ++i) h.values.push_back(i / 15.0);
  X::write_float_grid(h, dir / "g.grid");
  const auto back = X::read_float_grid(dir / "g.grid");
  CHECK(back.side == 4);
  for (int i = 0; i < 16; ++i) CHECK(back.values[i] == doctest::Approx(h.values[i]).epsilon(1e-7));
  std::ifstream in(dir / "g.grid", std::ios::binary);
  std::string magic(8, '\0');
  in.read(magic.data(), 8);
  CHECK(magic == "CAEGRID1");
  CHECK(std::filesystem::file_size(dir / "g.grid") == 8 + 8 + 16 * 4);

  const auto src = ImageTensor::filled(4, 1, 0.0f);
  const auto ov = X::overlay_image(src, h);
  CHECK(ov.channels == 3);
  CHECK(ov.height == 4);
  // Zero saliency keeps the gray source; full saliency blends 60% red.
  const float gray = ov.data[0];
  CHECK(ov.data[1] == gray);
  CHECK(ov.data[2] == gray);
  const std::size_t last = 15 * 3;
  CHECK(ov.data[last] > ov.data[last + 1]);
  X::write_overlay_png(src, h, dir / "o.png");
  CHECK(read_png(dir / "o.png").data == ov.data);
}

TEST_CASE("explain_sample and the summary text") {
  auto b = nets::ModelBundle::create(testing::tiny_net(), 10);
  const auto set = testing::lesion_set(16, 3, 10);
  const auto table = manifold::extract_codes(b, set.dataset);
  const X::FunctionClassifier grow(2, [](const ImageTensor& x) {
    double m = 0.0;
    for (float v : x.data()) m += v;
    const double p = 1.0 / (1.0 + std::exp(-m));
    return std::vector<double>{1.0 - p, p};
  });
  const auto& src = set.dataset.samples[0];
  const auto ex = X::explain_sample(b, table, grow, src, 1, 6);
  CHECK(ex.series.frames.size() == 6);
  CHECK(ex.series.path.start == nets::encode_class(b, src.image));
  CHECK(ex.series.path.end == manifold::class_centroid(table, 1));
  const auto json = X::saliency_summary(ex.series, ex.result);
  CHECK(json.find("\"source_id\"") != std::string::npos);
  CHECK(json.find("\"weights\"") != std::string::npos);
}

TEST_CASE("cost benchmark: empty input and per-case timings") {
  auto b = nets::ModelBundle::create(testing::tiny_net(), 11);
  const auto set = testing::lesion_set(16, 2, 11);
  const auto table = manifold::extract_codes(b, set.dataset);
  const X::FunctionClassifier half(2, [](const ImageTensor&) { return std::vector<double>{0.5, 0.5}; });
  const auto empty = X::cost_benchmark(b, table, half, {});
  CHECK(empty.cae_seconds.empty());
  CHECK(empty.ratio() == 0.0);
  const auto r = X::cost_benchmark(b, table, half, set.dataset.samples, 4);
  CHECK(r.cae_seconds.size() == set.dataset.size());
  CHECK(r.occlusion_seconds.size() == set.dataset.size());
  CHECK(r.cae_median > 0.0);
}
