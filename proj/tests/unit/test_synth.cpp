#include <cmath>
#include <fstream>
#include <numbers>

#include "testing.hpp"

#include "cae/core/dataset_io.hpp"
#include "cae/synth/synth_data.hpp"

using namespace cae;
using synth::LesionKind;

TEST_CASE("lesion kinds round trip through their names") {
  for (auto k : {LesionKind::kNone, LesionKind::kBlob, LesionKind::kRidge, LesionKind::kDoubleBlob}) {
    CHECK(synth::lesion_kind_from_string(synth::to_string(k)) == k);
  }
  CHECK_THROWS_AS(synth::lesion_kind_from_string("cyst"), Error);
}

TEST_CASE("generated set: sizes, labels, masks only where a lesion is drawn") {
  const auto set = testing::lesion_set(32, 6, 11, {LesionKind::kNone, LesionKind::kBlob,
                                                   LesionKind::kRidge, LesionKind::kDoubleBlob});
  CHECK(set.dataset.size() == 24);
  CHECK(set.dataset.class_count == 4);
  CHECK_NOTHROW(set.dataset.validate());
  for (const auto& s : set.dataset.samples) {
    const auto& m = set.masks.at(s.id);
    CHECK(m.side == 32);
    if (s.label.index == 0) {
      CHECK(m.area() == 0);
    } else {
      CHECK(m.area() > 0);
      CHECK(m.area() < 32u * 32u / 2);
    }
  }
}

TEST_CASE("generation is deterministic per seed and differs across seeds") {
  const auto a = testing::lesion_set(16, 3, 5);
  const auto b = testing::lesion_set(16, 3, 5);
  const auto c = testing::lesion_set(16, 3, 6);
  REQUIRE(a.dataset.size() == b.dataset.size());
  for (std::size_t i = 0; i < a.dataset.size(); ++i) {
    CHECK(a.dataset.samples[i].image == b.dataset.samples[i].image);
  }
  CHECK_FALSE(a.dataset.samples[0].image == c.dataset.samples[0].image);
}

TEST_CASE("the lesion core is brighter than its surroundings") {
  // Core: within a third of the radius of the center. Ring: just outside
  // the mask. The background is low-frequency, so the local contrast is the
  // lesion's.
  const auto set = testing::lesion_set(64, 20, 2);
  double contrast = 0.0;
  int n = 0;
  for (const auto& s : set.dataset.samples) {
    if (s.label.index != 1) continue;
    const auto& p = set.placements.at(s.id);
    double core = 0.0, ring = 0.0;
    int nc = 0, nr = 0;
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) {
        const double d = std::hypot(x + 0.5 - p.cx, y + 0.5 - p.cy);
        if (d <= p.radius / 3.0) {
          core += s.image.at(y, x, 0);
          ++nc;
        } else if (d > p.radius * 1.1 && d <= p.radius * 1.5) {
          ring += s.image.at(y, x, 0);
          ++nr;
        }
      }
    }
    contrast += core / nc - ring / nr;
    ++n;
  }
  CHECK(contrast / n > 0.4);
}

namespace {

/// Disk of the blob radius at a sample's placement (none samples get one too).
std::vector<bool> disk_at(const synth::Placement& p, int side, double radius, double scale) {
  std::vector<bool> out(static_cast<std::size_t>(side) * side);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      out[static_cast<std::size_t>(y) * side + x] =
          std::hypot(x + 0.5 - p.cx, y + 0.5 - p.cy) <= radius * scale;
    }
  }
  return out;
}

double mean_where(const ImageTensor& img, const std::vector<bool>& sel, bool want = true) {
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < sel.size(); ++i) {
    if (sel[i] != want) continue;
    sum += img.data()[i];
    ++n;
  }
  return sum / n;
}

}  // namespace

TEST_CASE("blob pixels are brighter than the same pixels of class none") {
  const auto set = testing::lesion_set(32, 100, 21);
  const double radius = 0.25 * 32 / 2.0;
  // Per blob sample: its mask mean minus the same region in the paired none sample.
  std::vector<double> diff;
  for (int i = 0; i < 100; ++i) {
    const auto& blob = *set.dataset.find("blob_" + std::to_string(i));
    const auto& none = *set.dataset.find("none_" + std::to_string(i));
    const auto sel = disk_at(set.placements.at(blob.id), 32, radius, 1.0);
    diff.push_back(mean_where(blob.image, sel) - mean_where(none.image, sel));
  }
  double m = 0.0, v = 0.0;
  for (double d : diff) m += d;
  m /= diff.size();
  for (double d : diff) v += (d - m) * (d - m);
  v /= diff.size() - 1;
  const double t = m / std::sqrt(v / diff.size());
  // One-sided p < 0.01 at 99 degrees of freedom.
  CHECK(t > 2.365);
}

TEST_CASE("a pixel threshold on the lesion region separates blob from none") {
  const int side = 64;
  const auto set = testing::lesion_set(side, 200, 22);
  const double radius = 0.25 * side / 2.0;
  int correct = 0;
  for (const auto& s : set.dataset.samples) {
    const auto& p = set.placements.at(s.id);
    const auto core = disk_at(p, side, radius, 0.5);
    auto ring = disk_at(p, side, radius, 1.6);
    const auto inner = disk_at(p, side, radius, 1.1);
    for (std::size_t i = 0; i < ring.size(); ++i) ring[i] = ring[i] && !inner[i];
    const bool says_blob = mean_where(s.image, core) - mean_where(s.image, ring) > 0.32;
    correct += says_blob == (s.label.index == 1);
  }
  CHECK(correct >= 0.99 * set.dataset.size());
}

TEST_CASE("backgrounds alone do not reveal the class") {
  // Zero the lesion region (the same disk for none samples) and fit a
  // logistic regression on the pixels; held-out accuracy stays near chance.
  const int side = 16;
  const auto train = testing::lesion_set(side, 300, 23);
  const auto test = testing::lesion_set(side, 200, 24, {synth::LesionKind::kNone, synth::LesionKind::kBlob},
                                        Split::kTest, "t_");
  const double radius = 0.25 * side / 2.0;
  const auto ablated = [&](const synth::SynthSet& set) {
    std::vector<float> xs;
    std::vector<std::int64_t> ys;
    for (const auto& s : set.dataset.samples) {
      const auto sel = disk_at(set.placements.at(s.id), side, radius, 1.5);
      for (std::size_t i = 0; i < sel.size(); ++i) xs.push_back(sel[i] ? 0.f : s.image.data()[i]);
      ys.push_back(s.label.index);
    }
    const auto n = static_cast<std::int64_t>(ys.size());
    return std::pair{torch::tensor(xs).view({n, side * side}), torch::tensor(ys)};
  };
  const auto [x, y] = ablated(train);
  const auto [xt, yt] = ablated(test);
  torch::manual_seed(0);
  torch::nn::Linear lin(side * side, 2);
  torch::optim::Adam opt(lin->parameters(), torch::optim::AdamOptions(1e-2));
  for (int e = 0; e < 300; ++e) {
    opt.zero_grad();
    torch::nn::functional::cross_entropy(lin(x), y).backward();
    opt.step();
  }
  torch::NoGradGuard ng;
  const double acc = lin(xt).argmax(1).eq(yt).to(torch::kFloat64).mean().item<double>();
  CHECK(std::fabs(acc - 0.5) <= 0.1);
}

TEST_CASE("blob mask area is close to the nominal disk") {
  const auto set = testing::lesion_set(64, 10, 25);
  const double nominal = std::numbers::pi * std::pow(0.25 * 64 / 2.0, 2);
  for (const auto& s : set.dataset.samples) {
    if (s.label.index != 1) continue;
    CHECK(std::fabs(set.masks.at(s.id).area() - nominal) <= 0.2 * nominal);
  }
}

TEST_CASE("placement_mask reproduces the stored mask") {
  const auto set = testing::lesion_set(32, 4, 3, {LesionKind::kNone, LesionKind::kRidge});
  const synth::LesionSpec ridge{LesionKind::kRidge, 0.8, 0.25};
  for (const auto& s : set.dataset.samples) {
    if (s.label.index != 1) continue;
    const auto m = synth::placement_mask(ridge, set.placements.at(s.id), 32);
    CHECK(m.mask == set.masks.at(s.id).mask);
  }
}

TEST_CASE("invalid lesion specs are rejected") {
  synth::SynthOptions opt;
  opt.side = 32;
  RandomStream rng(1);
  CHECK_THROWS_AS(synth::generate_dataset({{LesionKind::kBlob, 1.5, 0.25}, {}}, 2, opt, rng), Error);
  CHECK_THROWS_AS(synth::generate_dataset({{LesionKind::kBlob, 0.5, 0.9}, {}}, 2, opt, rng), Error);
  CHECK_THROWS_AS(synth::generate_dataset({{}, {}}, 2, opt, rng), Error);
  CHECK_THROWS_AS(synth::generate_dataset({{}}, 2, opt, rng), Error);
  opt.channels = 2;
  CHECK_THROWS_AS(synth::generate_dataset({{}, {LesionKind::kBlob}}, 2, opt, rng), Error);
}

TEST_CASE("three-channel synthesis") {
  synth::SynthOptions opt;
  opt.side = 16;
  opt.channels = 3;
  RandomStream rng(8);
  const auto set = synth::generate_dataset({{}, {LesionKind::kBlob}}, 2, opt, rng);
  CHECK(set.dataset.samples[0].image.channels() == 3);
}

TEST_CASE("written set reloads with masks and a manifest") {
  testing::TempDir dir("synth_io");
  const std::vector<synth::LesionSpec> specs{{}, {LesionKind::kBlob}};
  synth::SynthOptions opt;
  opt.side = 16;
  RandomStream rng(4);
  const auto train = synth::generate_dataset(specs, 3, opt, rng);
  opt.split = Split::kTest;
  opt.id_prefix = "t_";
  const auto test = synth::generate_dataset(specs, 2, opt, rng);
  synth::write_synth_set(train, specs, dir.path());
  synth::write_synth_set(test, specs, dir.path());

  const auto ds = load_dataset(dir / "test", 16, Split::kTest);
  CHECK(ds.size() == 4);
  const auto masks = synth::load_masks(ds, dir.path());
  CHECK(masks.size() == 4);
  for (const auto& [id, m] : masks) CHECK(m.mask == test.masks.at(id).mask);

  std::ifstream manifest(dir / "manifest.tsv");
  std::string line;
  int lines = 0;
  while (std::getline(manifest, line)) ++lines;
  CHECK(lines == 1 + 6 + 4);
}
