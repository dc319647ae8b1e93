#include "support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "cae/nets/layers.hpp"

namespace cae::testing {

nets::NetConfig tiny_net(int side, int class_count) {
  nets::NetConfig c;
  c.side = side;
  c.channels = 1;
  c.class_count = class_count;
  c.code_dim = 4;
  c.width = 4;
  c.res_blocks = 1;
  c.mlp_hidden = 8;
  c.disc_res_blocks = 1;
  return c;
}

nets::ModelBundle tiny_bundle(std::uint64_t seed, int side, int class_count) {
  auto b = nets::ModelBundle::create(tiny_net(side, class_count), seed);
  b.to(torch::kFloat64);
  return b;
}

TempDir::TempDir(const std::string& tag) {
  static std::uint64_t counter = 0;
  const auto stamp = static_cast<std::uint64_t>(
      std::chrono::steady_clock::now().time_since_epoch().count());
  path_ = std::filesystem::temp_directory_path() /
          (tag + "_" + std::to_string(mix64(stamp ^ ++counter) % 1000000007ULL));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

synth::SynthSet lesion_set(int side, int per_class, std::uint64_t seed,
                           std::vector<synth::LesionKind> kinds, Split split,
                           const std::string& id_prefix) {
  std::vector<synth::LesionSpec> specs;
  for (auto k : kinds) specs.push_back({k, 0.8, 0.25});
  synth::SynthOptions opt;
  opt.side = side;
  opt.split = split;
  opt.id_prefix = id_prefix;
  RandomStream rng(seed);
  return synth::generate_dataset(specs, per_class, opt, rng);
}

torch::Tensor random_tensor(std::vector<std::int64_t> shape, RandomStream& rng, torch::Dtype dtype,
                            double lo, double hi) {
  std::int64_t n = 1;
  for (auto s : shape) n *= s;
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return torch::tensor(v, torch::kFloat64).view(shape).to(dtype);
}

std::vector<double> flat(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat64).contiguous().cpu();
  return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

double brute_l1_mean(const torch::Tensor& a, const torch::Tensor& b) {
  const auto x = flat(a);
  const auto y = flat(b);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::fabs(x[i] - y[i]);
  return s / static_cast<double>(x.size());
}

double brute_nll(const torch::Tensor& logits, const std::vector<std::int64_t>& targets) {
  const auto rows = logits.size(0);
  const auto k = logits.size(1);
  const auto l = flat(logits);
  double total = 0.0;
  for (std::int64_t r = 0; r < rows; ++r) {
    double mx = l[static_cast<std::size_t>(r * k)];
    for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, l[static_cast<std::size_t>(r * k + j)]);
    double z = 0.0;
    for (std::int64_t j = 0; j < k; ++j) z += std::exp(l[static_cast<std::size_t>(r * k + j)] - mx);
    total += -(l[static_cast<std::size_t>(r * k + targets[static_cast<std::size_t>(r)])] - mx -
               std::log(z));
  }
  return total / static_cast<double>(rows);
}

std::vector<std::int64_t> labels_of(const torch::Tensor& y) {
  auto c = y.to(torch::kInt64).contiguous();
  return {c.data_ptr<std::int64_t>(), c.data_ptr<std::int64_t>() + c.numel()};
}

void SuiteResult::record(const std::string& name, double error, double tolerance) {
  const bool ok = std::isfinite(error) && error <= tolerance;
  worst = std::max(worst, std::isfinite(error) ? error : INFINITY);
  std::ostringstream os;
  os << (ok ? "ok   " : "FAIL ") << name << " err=" << std::setprecision(3) << error
     << " tol=" << tolerance;
  lines.push_back(os.str());
  if (!ok) {
    pass = false;
    failures.push_back(os.str());
  }
}

namespace {

double scalar(const torch::Tensor& t) { return t.item<double>(); }

struct BruteTerms {
  double recon_image = 0, recon_class = 0, recon_indiv = 0, cycle = 0, adv = 0, cls = 0;
  double d_adv = 0, d_cls = 0;
};

// Credit to A for the pair (A, B), recomputed from raw module calls.
BruteTerms brute_terms(nets::ModelBundle& b, const torch::Tensor& x_a, const torch::Tensor& x_b,
                       const torch::Tensor& y_a, const torch::Tensor& y_b) {
  const auto c_a = b.enc_class->forward(x_a);
  const auto c_b = b.enc_class->forward(x_b);
  const auto s_a = b.enc_indiv->forward(x_a);
  const auto s_b = b.enc_indiv->forward(x_b);
  const auto ya = labels_of(y_a);
  const auto yb = labels_of(y_b);
  const auto n = static_cast<std::size_t>(x_a.size(0));

  BruteTerms t;
  t.recon_image = brute_l1_mean(b.decoder->forward(c_a, s_a), x_a);
  t.recon_class = brute_l1_mean(b.enc_class->forward(b.decoder->forward(c_a, s_b)), c_a);
  const auto cross = b.decoder->forward(c_b, s_a);  // G(c_B, s_A)
  t.recon_indiv = brute_l1_mean(b.enc_indiv->forward(cross), s_a);
  t.cycle = brute_l1_mean(b.decoder->forward(c_a, b.enc_indiv->forward(cross)), x_a);
  const auto on_cross = b.disc->forward(cross);
  t.adv = brute_nll(on_cross.real_logits, std::vector<std::int64_t>(n, 1));
  t.cls = brute_nll(on_cross.class_logits, yb);
  t.d_adv = brute_nll(on_cross.real_logits, std::vector<std::int64_t>(n, 0)) +
            brute_nll(b.disc->forward(x_b).real_logits, std::vector<std::int64_t>(n, 1));
  t.d_cls = brute_nll(b.disc->forward(x_a).class_logits, ya);
  return t;
}

}  // namespace

SuiteResult loss_oracle_suite(std::uint64_t seed, int batch) {
  torch::NoGradGuard ng;
  SuiteResult r;
  constexpr double kTol = 1e-6;
  for (int k : {2, 4}) {
    auto b = tiny_bundle(seed + static_cast<std::uint64_t>(k), 16, k);
    RandomStream rng(seed * 31 + static_cast<std::uint64_t>(k));
    const auto x_a = random_tensor({batch, 1, 16, 16}, rng);
    const auto x_b = random_tensor({batch, 1, 16, 16}, rng);
    std::vector<std::int64_t> ya, yb;
    for (int i = 0; i < batch; ++i) {
      const auto a = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(k)));
      ya.push_back(a);
      yb.push_back((a + 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(k - 1)))) % k);
    }
    const auto y_a = torch::tensor(ya, torch::kInt64);
    const auto y_b = torch::tensor(yb, torch::kInt64);

    const auto pf = losses::forward_pair(b, x_a, x_b, y_a, y_b);
    const auto sw = pf.swapped();
    const auto ba = brute_terms(b, x_a, x_b, y_a, y_b);
    const auto bb = brute_terms(b, x_b, x_a, y_b, y_a);
    const std::string tag = " K=" + std::to_string(k);

    r.record("recon_image A" + tag, std::fabs(scalar(losses::recon_image_loss(pf)) - ba.recon_image), kTol);
    r.record("recon_image B" + tag, std::fabs(scalar(losses::recon_image_loss(sw)) - bb.recon_image), kTol);
    r.record("recon_class A" + tag, std::fabs(scalar(losses::recon_class_code_loss(pf)) - ba.recon_class), kTol);
    r.record("recon_class B" + tag, std::fabs(scalar(losses::recon_class_code_loss(sw)) - bb.recon_class), kTol);
    r.record("recon_indiv A" + tag, std::fabs(scalar(losses::recon_indiv_code_loss(pf)) - ba.recon_indiv), kTol);
    r.record("recon_indiv B" + tag, std::fabs(scalar(losses::recon_indiv_code_loss(sw)) - bb.recon_indiv), kTol);
    r.record("cycle A" + tag, std::fabs(scalar(losses::cycle_loss(pf)) - ba.cycle), kTol);
    r.record("cycle B" + tag, std::fabs(scalar(losses::cycle_loss(sw)) - bb.cycle), kTol);
    r.record("adversarial A2B" + tag,
             std::fabs(scalar(losses::adv_loss_generator(pf, b.disc)) - ba.adv), kTol);
    r.record("classification A2B" + tag,
             std::fabs(scalar(losses::cls_loss_generator(pf, b.disc, pf.y_b)) - ba.cls), kTol);

    // Objectives under the default weights and under arbitrary ones.
    std::vector<std::pair<losses::GeneratorLossWeights, losses::DiscriminatorLossWeights>> ws;
    ws.emplace_back();
    losses::GeneratorLossWeights gw{rng.uniform(0, 5), rng.uniform(0, 5), rng.uniform(0, 5),
                                    rng.uniform(0, 5), rng.uniform(0, 5), rng.uniform(0, 5)};
    losses::DiscriminatorLossWeights dw{rng.uniform(0, 5), rng.uniform(0, 5)};
    ws.emplace_back(gw, dw);
    for (std::size_t wi = 0; wi < ws.size(); ++wi) {
      const auto& [g, d] = ws[wi];
      const double g_expect = g.recon_image * (ba.recon_image + bb.recon_image) +
                              g.recon_class * (ba.recon_class + bb.recon_class) +
                              g.recon_indiv * (ba.recon_indiv + bb.recon_indiv) +
                              g.cycle * (ba.cycle + bb.cycle) + g.adversarial * (ba.adv + bb.adv) +
                              g.classification * (ba.cls + bb.cls);
      const double d_expect = d.adversarial * (ba.d_adv + bb.d_adv) + d.classification * (ba.d_cls + bb.d_cls);
      const auto go = losses::generator_objective(pf, b.disc, g);
      const auto dobj = losses::discriminator_objective(pf, b.disc, d);
      const std::string wt = tag + (wi == 0 ? " default weights" : " random weights");
      r.record("generator objective" + wt, std::fabs(scalar(go.total) - g_expect), kTol);
      r.record("disc adversarial A2B" + wt, std::fabs(scalar(dobj.adv_a2b) - ba.d_adv), kTol);
      r.record("disc adversarial B2A" + wt, std::fabs(scalar(dobj.adv_b2a) - bb.d_adv), kTol);
      r.record("disc classification A" + wt, std::fabs(scalar(dobj.cls_a) - ba.d_cls), kTol);
      r.record("disc classification B" + wt, std::fabs(scalar(dobj.cls_b) - bb.d_cls), kTol);
      r.record("discriminator objective" + wt, std::fabs(scalar(dobj.total) - d_expect), kTol);
    }
  }
  return r;
}

double finite_difference_error(const std::function<torch::Tensor()>& f, torch::Tensor wrt,
                               int samples, RandomStream& rng, double h, double floor) {
  if (wrt.grad().defined()) wrt.mutable_grad().zero_();
  {
    auto y = f();
    y.backward();
  }
  const auto analytic = flat(wrt.grad());
  const auto n = static_cast<std::size_t>(wrt.numel());
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (samples > 0 && static_cast<std::size_t>(samples) < n) {
    rng.shuffle(idx);
    idx.resize(static_cast<std::size_t>(samples));
  }
  torch::NoGradGuard ng;
  auto view = wrt.view({-1});
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (auto i : idx) {
    const auto ii = static_cast<std::int64_t>(i);
    const double orig = view[ii].item<double>();
    view[ii].fill_(orig + h);
    const double fp = f().item<double>();
    view[ii].fill_(orig - h);
    const double fm = f().item<double>();
    view[ii].fill_(orig);
    const double num = (fp - fm) / (2.0 * h);
    diff2 += (num - analytic[i]) * (num - analytic[i]);
    a2 += analytic[i] * analytic[i];
    n2 += num * num;
  }
  // Gradients that vanish structurally (biases ahead of instance norm) leave
  // only rounding noise, so small norms are compared on an absolute scale.
  const double scale = std::max(std::sqrt(std::max(a2, n2)), floor);
  return std::sqrt(diff2) / scale;
}

namespace {

// Fixed random projection so a tensor-valued output becomes a scalar.
torch::Tensor project(const torch::Tensor& out, std::uint64_t seed) {
  RandomStream rng(seed);
  auto w = random_tensor(out.sizes().vec(), rng);
  return (out * w).sum();
}

torch::Tensor leaf(torch::Tensor t) { return t.detach().clone().set_requires_grad(true); }

}  // namespace

SuiteResult gradient_suite(std::uint64_t seed, double tol) {
  SuiteResult r;
  RandomStream rng(seed);
  constexpr int kEntries = 24;

  // Losses on their direct inputs.
  {
    auto a = leaf(random_tensor({2, 1, 4, 4}, rng));
    const auto b = random_tensor({2, 1, 4, 4}, rng);
    r.record("l1_mean d/da", finite_difference_error([&] { return losses::l1_mean(a, b); }, a, 0, rng), tol);
    auto logits = leaf(random_tensor({3, 4}, rng, torch::kFloat64, -3, 3));
    const auto t = torch::tensor(std::vector<std::int64_t>{0, 3, 1}, torch::kInt64);
    r.record("softmax_nll d/dlogits",
             finite_difference_error([&] { return losses::softmax_nll(logits, t); }, logits, 0, rng), tol);
    auto rl = leaf(random_tensor({3, 2}, rng, torch::kFloat64, -3, 3));
    r.record("adversarial (generator) d/dlogits",
             finite_difference_error([&] { return losses::adv_loss_generator_from_logits(rl); }, rl, 0, rng), tol);
    r.record("classification (generator) d/dlogits",
             finite_difference_error(
                 [&] { return losses::cls_loss_generator_from_logits(logits, t, 4); }, logits, 0, rng),
             tol);

    losses::DiscriminatorLogitSet set;
    set.real_on_cross_a = leaf(random_tensor({3, 2}, rng, torch::kFloat64, -3, 3));
    set.real_on_cross_b = leaf(random_tensor({3, 2}, rng, torch::kFloat64, -3, 3));
    set.real_on_x_a = leaf(random_tensor({3, 2}, rng, torch::kFloat64, -3, 3));
    set.real_on_x_b = leaf(random_tensor({3, 2}, rng, torch::kFloat64, -3, 3));
    set.class_on_x_a = leaf(random_tensor({3, 4}, rng, torch::kFloat64, -3, 3));
    set.class_on_x_b = leaf(random_tensor({3, 4}, rng, torch::kFloat64, -3, 3));
    const auto ya = torch::tensor(std::vector<std::int64_t>{0, 1, 2}, torch::kInt64);
    const auto yb = torch::tensor(std::vector<std::int64_t>{3, 2, 0}, torch::kInt64);
    const auto dobj = [&] {
      return losses::discriminator_objective_from_logits(set, ya, yb, {}).total;
    };
    for (auto* t2 : {&set.real_on_cross_a, &set.real_on_cross_b, &set.real_on_x_a, &set.real_on_x_b,
                     &set.class_on_x_a, &set.class_on_x_b}) {
      r.record("discriminator objective d/dlogits", finite_difference_error(dobj, *t2, 0, rng), tol);
    }

    losses::GeneratorTerms terms;
    std::vector<torch::Tensor*> slots{&terms.recon_image_a, &terms.recon_image_b, &terms.recon_class_a,
                                      &terms.recon_class_b, &terms.recon_indiv_a, &terms.recon_indiv_b,
                                      &terms.cycle_a,       &terms.cycle_b,       &terms.adv_a2b,
                                      &terms.adv_b2a,       &terms.cls_a2b,       &terms.cls_b2a};
    for (auto* s : slots) *s = leaf(torch::tensor(rng.uniform(0, 2), torch::kFloat64));
    for (auto* s : slots) {
      r.record("generator objective d/dterm",
               finite_difference_error([&] { return losses::weighted_generator_objective(terms, {}); },
                                       *s, 0, rng),
               tol);
    }
  }

  // Networks on their inputs and parameters.
  auto b = tiny_bundle(seed, 16, 3);
  const auto x = leaf(random_tensor({2, 1, 16, 16}, rng));
  const auto check_module = [&](const std::string& name, torch::nn::Module& m,
                                const std::function<torch::Tensor()>& f) {
    // Rounding noise of the differences grows with the whole output, so a
    // vanishing parameter gradient is judged against the module's gradient.
    m.zero_grad();
    f().backward();
    double norm2 = 0.0;
    for (auto& p : m.parameters()) norm2 += p.grad().pow(2).sum().item<double>();
    const double floor = std::max(1e-4, 1e-3 * std::sqrt(norm2));
    for (auto& p : m.named_parameters()) {
      r.record(name + " d/d" + p.key(), finite_difference_error(f, p.value(), kEntries, rng, 1e-6, floor), tol);
    }
  };
  {
    auto xi = x;
    const auto f = [&] { return project(b.enc_class->forward(xi), 1); };
    r.record("E_c d/dx", finite_difference_error(f, xi, kEntries, rng), tol);
    check_module("E_c", *b.enc_class, f);
  }
  {
    auto xi = x;
    const auto f = [&] { return project(b.enc_indiv->forward(xi), 2); };
    r.record("E_s d/dx", finite_difference_error(f, xi, kEntries, rng), tol);
    check_module("E_s", *b.enc_indiv, f);
  }
  {
    auto code = leaf(random_tensor({2, 4}, rng));
    auto indiv = leaf(random_tensor({2, 16, 4, 4}, rng));
    const auto f = [&] { return project(b.decoder->forward(code, indiv), 3); };
    r.record("G d/dcode", finite_difference_error(f, code, 0, rng), tol);
    r.record("G d/dindiv", finite_difference_error(f, indiv, kEntries, rng), tol);
    check_module("G", *b.decoder, f);
  }
  {
    auto xi = x;
    const auto f = [&] {
      const auto o = b.disc->forward(xi);
      return project(o.real_logits, 4) + project(o.class_logits, 5);
    };
    r.record("D d/dx", finite_difference_error(f, xi, kEntries, rng), tol);
    check_module("D", *b.disc, f);
  }

  // Objectives through the whole pair forward.
  {
    const auto x_a = random_tensor({2, 1, 16, 16}, rng);
    const auto x_b = random_tensor({2, 1, 16, 16}, rng);
    const auto y_a = torch::tensor(std::vector<std::int64_t>{0, 1}, torch::kInt64);
    const auto y_b = torch::tensor(std::vector<std::int64_t>{2, 0}, torch::kInt64);
    const std::function<torch::Tensor()> gen = [&] {
      const auto pf = losses::forward_pair(b, x_a, x_b, y_a, y_b);
      return losses::generator_objective(pf, b.disc, {}).total;
    };
    const std::function<torch::Tensor()> disc = [&] {
      const auto pf = losses::forward_pair(b, x_a, x_b, y_a, y_b);
      return losses::discriminator_objective(pf, b.disc, {}).total;
    };
    for (const auto& [name, p] : b.named_parameters()) {
      const bool is_disc = name.rfind("disc.", 0) == 0;
      if (name.find("weight") == std::string::npos) continue;
      r.record(std::string(is_disc ? "discriminator" : "generator") + " objective d/d" + name,
               finite_difference_error(is_disc ? disc : gen, p, 6, rng), tol);
    }
  }
  return r;
}

SuiteResult adain_oracle_suite(std::uint64_t seed, double tol) {
  torch::NoGradGuard ng;
  SuiteResult r;
  RandomStream rng(seed);
  const std::int64_t n = 2, c = 5, h = 6;
  const auto x = random_tensor({n, c, h, h}, rng, torch::kFloat64, -2.0, 3.0);
  const auto scale = random_tensor({n, c}, rng, torch::kFloat64, 0.3, 2.5);
  const auto shift = random_tensor({n, c}, rng, torch::kFloat64, -1.5, 1.5);
  const auto y = flat(nets::adaptive_instance_norm(x, scale, shift));
  const auto sc = flat(scale);
  const auto sh = flat(shift);
  double mean_err = 0.0, std_err = 0.0;
  const auto hw = static_cast<std::size_t>(h * h);
  for (std::size_t i = 0; i < static_cast<std::size_t>(n * c); ++i) {
    double m = 0.0;
    for (std::size_t j = 0; j < hw; ++j) m += y[i * hw + j];
    m /= static_cast<double>(hw);
    double v = 0.0;
    for (std::size_t j = 0; j < hw; ++j) v += (y[i * hw + j] - m) * (y[i * hw + j] - m);
    v /= static_cast<double>(hw);
    mean_err = std::max(mean_err, std::fabs(m - sh[i]));
    std_err = std::max(std_err, std::fabs(std::sqrt(v) - sc[i]));
  }
  r.record("channel mean = shift", mean_err, tol);
  r.record("channel std = scale", std_err, tol);

  // Plain instance norm: zero mean, unit deviation.
  const auto z = flat(nets::instance_norm(x));
  double z_err = 0.0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(n * c); ++i) {
    double m = 0.0, v = 0.0;
    for (std::size_t j = 0; j < hw; ++j) m += z[i * hw + j];
    m /= static_cast<double>(hw);
    for (std::size_t j = 0; j < hw; ++j) v += (z[i * hw + j] - m) * (z[i * hw + j] - m);
    z_err = std::max({z_err, std::fabs(m), std::fabs(std::sqrt(v / static_cast<double>(hw)) - 1.0)});
  }
  r.record("instance norm moments", z_err, tol);

  auto b = tiny_bundle(seed);
  const auto code = random_tensor({1, 4}, rng);
  const auto raw = b.decoder->adaptive_params(code);
  r.record("adaptive parameter count",
           std::fabs(static_cast<double>(raw.size(1) - b.decoder->adaptive_param_count())), 0.0);

  // Decoder block with identity convolutions: a large first shift keeps the
  // relu inactive, so (output - skip) carries the second stage's injected
  // statistics exactly.
  nets::AdaptiveResidualBlock block(3);
  block->to(torch::kFloat64);
  for (auto& p : block->named_parameters()) {
    p.value().zero_();
    if (p.key().find("weight") != std::string::npos) {
      p.value().select(3, 1).select(2, 1).copy_(torch::eye(3, p.value().options()));
    }
  }
  const auto xin = random_tensor({1, 3, 5, 5}, rng, torch::kFloat64, -1, 1);
  const auto s1 = random_tensor({1, 3}, rng, torch::kFloat64, 0.5, 1.5);
  const auto b1 = random_tensor({1, 3}, rng, torch::kFloat64, 10.0, 11.0);
  const auto s2 = random_tensor({1, 3}, rng, torch::kFloat64, 0.5, 1.5);
  const auto b2 = random_tensor({1, 3}, rng, torch::kFloat64, -1.0, 1.0);
  const auto params = torch::cat({s1, b1, s2, b2}, 1);
  const auto out = flat(block->forward(xin, params) - xin);
  const auto s2v = flat(s2);
  const auto b2v = flat(b2);
  double blk_err = 0.0;
  const std::size_t area = 25;
  for (std::size_t ch = 0; ch < 3; ++ch) {
    double m = 0.0, v = 0.0;
    for (std::size_t j = 0; j < area; ++j) m += out[ch * area + j];
    m /= area;
    for (std::size_t j = 0; j < area; ++j) v += (out[ch * area + j] - m) * (out[ch * area + j] - m);
    blk_err = std::max({blk_err, std::fabs(m - b2v[ch]), std::fabs(std::sqrt(v / area) - s2v[ch])});
  }
  r.record("decoder block output moments = injected (scale, shift)", blk_err, tol);
  return r;
}

void AdamOracle::step(std::vector<double>& p, const std::vector<double>& g) {
  if (m.empty()) {
    m.assign(p.size(), 0.0);
    v.assign(p.size(), 0.0);
  }
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double gi = g[i] + weight_decay * p[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
    v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace cae::testing
