#include "cae/losses/losses.hpp"

#include <cmath>

namespace cae::losses {

namespace {

void check_weight(double v, const char* name) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    throw Error(std::string("loss weight ") + name + " must be a nonnegative finite number");
  }
}

void require_finite(const torch::Tensor& t, const char* name) {
  if (!t.defined()) throw Error(std::string("tensor ") + name + " is not populated");
  if (!torch::isfinite(t.detach()).all().item<bool>()) {
    throw Error(std::string("non-finite values in ") + name);
  }
}

double accuracy(const torch::Tensor& logits, std::int64_t slot) {
  return logits.detach().argmax(1).eq(slot).to(torch::kFloat64).mean().item<double>();
}

}  // namespace

void GeneratorLossWeights::validate() const {
  check_weight(recon_image, "recon_image");
  check_weight(recon_class, "recon_class");
  check_weight(recon_indiv, "recon_indiv");
  check_weight(cycle, "cycle");
  check_weight(adversarial, "adversarial");
  check_weight(classification, "classification");
}

void DiscriminatorLossWeights::validate() const {
  check_weight(adversarial, "adversarial");
  check_weight(classification, "classification");
}

PairForward PairForward::swapped() const {
  PairForward s;
  s.x_a = x_b; s.x_b = x_a;
  s.y_a = y_b; s.y_b = y_a;
  s.c_a = c_b; s.c_b = c_a;
  s.s_a = s_b; s.s_b = s_a;
  s.recon_a = recon_b; s.recon_b = recon_a;
  s.cross_a = cross_b; s.cross_b = cross_a;
  s.c_cross_a = c_cross_b; s.c_cross_b = c_cross_a;
  s.s_cross_a = s_cross_b; s.s_cross_b = s_cross_a;
  s.cycle_a = cycle_b; s.cycle_b = cycle_a;
  return s;
}

void PairForward::check_finite() const {
  const std::pair<const torch::Tensor*, const char*> all[] = {
      {&x_a, "x_A"},         {&x_b, "x_B"},         {&c_a, "c_A"},
      {&c_b, "c_B"},         {&s_a, "s_A"},         {&s_b, "s_B"},
      {&recon_a, "G(c_A,s_A)"}, {&recon_b, "G(c_B,s_B)"}, {&cross_a, "x'_A"},
      {&cross_b, "x'_B"},    {&c_cross_a, "c'_A"},  {&c_cross_b, "c'_B"},
      {&s_cross_a, "s'_A"},  {&s_cross_b, "s'_B"},  {&cycle_a, "x''_A"},
      {&cycle_b, "x''_B"}};
  for (const auto& [t, name] : all) {
    if (t->defined()) require_finite(*t, name);
  }
}

PairForward forward_pair(const nets::ModelBundle& bundle, const torch::Tensor& x_a,
                         const torch::Tensor& x_b, const torch::Tensor& y_a,
                         const torch::Tensor& y_b) {
  auto ec = bundle.enc_class;
  auto es = bundle.enc_indiv;
  auto g = bundle.decoder;
  PairForward pf;
  pf.x_a = x_a;
  pf.x_b = x_b;
  pf.y_a = y_a;
  pf.y_b = y_b;
  // Both samples go through the encoders as one batch.
  const auto n = x_a.size(0);
  auto x = torch::cat({x_a, x_b});
  auto c = ec->forward(x);
  auto s = es->forward(x);
  pf.c_a = c.narrow(0, 0, n);
  pf.c_b = c.narrow(0, n, n);
  pf.s_a = s.narrow(0, 0, n);
  pf.s_b = s.narrow(0, n, n);

  // Own codes and swapped codes decoded together: [recon_a, recon_b, cross_a, cross_b].
  auto decoded = g->forward(torch::cat({pf.c_a, pf.c_b, pf.c_b, pf.c_a}),
                            torch::cat({pf.s_a, pf.s_b, pf.s_a, pf.s_b}));
  pf.recon_a = decoded.narrow(0, 0, n);
  pf.recon_b = decoded.narrow(0, n, n);
  pf.cross_a = decoded.narrow(0, 2 * n, n);
  pf.cross_b = decoded.narrow(0, 3 * n, n);

  auto cross = torch::cat({pf.cross_a, pf.cross_b});
  auto c2 = ec->forward(cross);
  auto s2 = es->forward(cross);
  pf.c_cross_a = c2.narrow(0, 0, n);
  pf.c_cross_b = c2.narrow(0, n, n);
  pf.s_cross_a = s2.narrow(0, 0, n);
  pf.s_cross_b = s2.narrow(0, n, n);

  // Second swap restores each sample's own class-style code.
  auto cycled = g->forward(torch::cat({pf.c_a, pf.c_b}), s2);
  pf.cycle_a = cycled.narrow(0, 0, n);
  pf.cycle_b = cycled.narrow(0, n, n);
  return pf;
}

torch::Tensor l1_mean(const torch::Tensor& a, const torch::Tensor& b) {
  if (!a.sizes().equals(b.sizes())) throw Error("l1_mean: tensor shapes differ");
  return (a - b).abs().mean();
}

torch::Tensor softmax_nll(const torch::Tensor& logits, const torch::Tensor& targets) {
  if (logits.dim() != 2) throw Error("softmax_nll: logits must be [N, K]");
  require_finite(logits, "logits");
  auto logp = torch::log_softmax(logits, 1);
  return -logp.gather(1, targets.to(torch::kInt64).view({-1, 1})).mean();
}

torch::Tensor softmax_nll(const torch::Tensor& logits, std::int64_t target) {
  auto targets = torch::full({logits.size(0)}, target, torch::kInt64);
  return softmax_nll(logits, targets);
}

torch::Tensor recon_image_loss(const PairForward& pf) {
  require_finite(pf.recon_a, "G(c_A,s_A)");
  return l1_mean(pf.recon_a, pf.x_a);
}

torch::Tensor recon_class_code_loss(const PairForward& pf) {
  require_finite(pf.c_cross_b, "c'_B");
  return l1_mean(pf.c_cross_b, pf.c_a);
}

torch::Tensor recon_indiv_code_loss(const PairForward& pf) {
  require_finite(pf.s_cross_a, "s'_A");
  return l1_mean(pf.s_cross_a, pf.s_a);
}

torch::Tensor cycle_loss(const PairForward& pf) {
  require_finite(pf.cycle_a, "x''_A");
  return l1_mean(pf.cycle_a, pf.x_a);
}

torch::Tensor adv_loss_generator_from_logits(const torch::Tensor& real_logits) {
  if (real_logits.dim() != 2 || real_logits.size(1) != 2) {
    throw Error("adversarial logits must be [N, 2]");
  }
  return softmax_nll(real_logits, kRealSlot);
}

torch::Tensor adv_loss_generator(const PairForward& pf, nets::Discriminator& d) {
  return adv_loss_generator_from_logits(d->forward(pf.cross_a).real_logits);
}

torch::Tensor cls_loss_generator_from_logits(const torch::Tensor& class_logits,
                                             const torch::Tensor& target, int class_count) {
  if (class_logits.dim() != 2 || class_logits.size(1) != class_count) {
    throw Error("class logits must be [N, " + std::to_string(class_count) + "]");
  }
  if (target.numel() > 0 &&
      (target.min().item<std::int64_t>() < 0 || target.max().item<std::int64_t>() >= class_count)) {
    throw Error("classification target outside [0, " + std::to_string(class_count) + ")");
  }
  return softmax_nll(class_logits, target);
}

torch::Tensor cls_loss_generator(const PairForward& pf, nets::Discriminator& d,
                                 const torch::Tensor& target) {
  auto logits = d->forward(pf.cross_a).class_logits;
  return cls_loss_generator_from_logits(logits, target, static_cast<int>(logits.size(1)));
}

torch::Tensor weighted_generator_objective(const GeneratorTerms& t, const GeneratorLossWeights& w) {
  return w.recon_image * (t.recon_image_a + t.recon_image_b) +
         w.recon_class * (t.recon_class_a + t.recon_class_b) +
         w.recon_indiv * (t.recon_indiv_a + t.recon_indiv_b) +
         w.cycle * (t.cycle_a + t.cycle_b) + w.adversarial * (t.adv_a2b + t.adv_b2a) +
         w.classification * (t.cls_a2b + t.cls_b2a);
}

GeneratorObjective generator_objective(const PairForward& pf, nets::Discriminator& d,
                                       const GeneratorLossWeights& w) {
  w.validate();
  const PairForward other = pf.swapped();
  // One discriminator pass over both cross decodes.
  const auto n = pf.cross_a.size(0);
  auto out = d->forward(torch::cat({pf.cross_a, pf.cross_b}));
  const int k = static_cast<int>(out.class_logits.size(1));
  require_finite(out.real_logits, "adversarial: D_r on the cross decodes");
  require_finite(out.class_logits, "classification: D_c on the cross decodes");

  GeneratorObjective obj;
  auto& t = obj.terms;
  t.recon_image_a = recon_image_loss(pf);
  t.recon_image_b = recon_image_loss(other);
  t.recon_class_a = recon_class_code_loss(pf);
  t.recon_class_b = recon_class_code_loss(other);
  t.recon_indiv_a = recon_indiv_code_loss(pf);
  t.recon_indiv_b = recon_indiv_code_loss(other);
  t.cycle_a = cycle_loss(pf);
  t.cycle_b = cycle_loss(other);
  t.adv_a2b = adv_loss_generator_from_logits(out.real_logits.narrow(0, 0, n));
  t.adv_b2a = adv_loss_generator_from_logits(out.real_logits.narrow(0, n, n));
  t.cls_a2b = cls_loss_generator_from_logits(out.class_logits.narrow(0, 0, n), pf.y_b, k);
  t.cls_b2a = cls_loss_generator_from_logits(out.class_logits.narrow(0, n, n), pf.y_a, k);
  obj.total = weighted_generator_objective(t, w);
  return obj;
}

DiscriminatorTerms discriminator_objective_from_logits(const DiscriminatorLogitSet& l,
                                                       const torch::Tensor& y_a,
                                                       const torch::Tensor& y_b,
                                                       const DiscriminatorLossWeights& w) {
  w.validate();
  DiscriminatorTerms t;
  require_finite(l.real_on_cross_a, "disc_adversarial_a2b: D_r(G(c_B,s_A))");
  require_finite(l.real_on_x_b, "disc_adversarial_a2b: D_r(x_B)");
  require_finite(l.real_on_cross_b, "disc_adversarial_b2a: D_r(G(c_A,s_B))");
  require_finite(l.real_on_x_a, "disc_adversarial_b2a: D_r(x_A)");
  require_finite(l.class_on_x_a, "disc_classification_a: D_c(x_A)");
  require_finite(l.class_on_x_b, "disc_classification_b: D_c(x_B)");
  t.adv_a2b = softmax_nll(l.real_on_cross_a, kFakeSlot) + softmax_nll(l.real_on_x_b, kRealSlot);
  t.adv_b2a = softmax_nll(l.real_on_cross_b, kFakeSlot) + softmax_nll(l.real_on_x_a, kRealSlot);
  t.cls_a = softmax_nll(l.class_on_x_a, y_a);
  t.cls_b = softmax_nll(l.class_on_x_b, y_b);
  t.total = w.adversarial * (t.adv_a2b + t.adv_b2a) + w.classification * (t.cls_a + t.cls_b);
  t.real_accuracy = 0.5 * (accuracy(l.real_on_x_a, kRealSlot) + accuracy(l.real_on_x_b, kRealSlot));
  t.fake_accuracy =
      0.5 * (accuracy(l.real_on_cross_a, kFakeSlot) + accuracy(l.real_on_cross_b, kFakeSlot));
  return t;
}

DiscriminatorTerms discriminator_objective(const PairForward& pf, nets::Discriminator& d,
                                           const DiscriminatorLossWeights& w) {
  const auto n = pf.x_a.size(0);
  auto out = d->forward(
      torch::cat({pf.cross_a.detach(), pf.cross_b.detach(), pf.x_a, pf.x_b}));
  DiscriminatorLogitSet l;
  l.real_on_cross_a = out.real_logits.narrow(0, 0, n);
  l.real_on_cross_b = out.real_logits.narrow(0, n, n);
  l.real_on_x_a = out.real_logits.narrow(0, 2 * n, n);
  l.real_on_x_b = out.real_logits.narrow(0, 3 * n, n);
  l.class_on_x_a = out.class_logits.narrow(0, 2 * n, n);
  l.class_on_x_b = out.class_logits.narrow(0, 3 * n, n);
  return discriminator_objective_from_logits(l, pf.y_a, pf.y_b, w);
}

}  // namespace cae::losses
