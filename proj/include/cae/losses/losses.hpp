#pragma once

#include <string>

#include <torch/torch.h>

#include "cae/nets/bundle.hpp"

namespace cae::losses {

/// Weights of the encoder/decoder objective, in order: image reconstruction,
/// class-code reconstruction, individual-code reconstruction, cycle,
/// adversarial, classification.
struct GeneratorLossWeights {
  double recon_image = 10.0;
  double recon_class = 1.0;
  double recon_indiv = 1.0;
  double cycle = 10.0;
  double adversarial = 1.0;
  double classification = 1.0;

  void validate() const;
};

/// Weights of the discriminator objective: real/fake term and class term.
struct DiscriminatorLossWeights {
  double adversarial = 1.0;
  double classification = 2.0;

  void validate() const;
};

/// Every intermediate of one shuffled pair batch (swap, re-encode, swap back).
///   recon_a  = G(c_a, s_a)            cross_a = G(c_b, s_a)  (x'_A, class of B)
///   c_cross_a, s_cross_a = E(cross_a) cycle_a = G(c_a, s_cross_a)
/// and symmetrically for B. Labels are int64 [N].
struct PairForward {
  torch::Tensor x_a, x_b, y_a, y_b;
  torch::Tensor c_a, c_b, s_a, s_b;
  torch::Tensor recon_a, recon_b;
  torch::Tensor cross_a, cross_b;
  torch::Tensor c_cross_a, c_cross_b, s_cross_a, s_cross_b;
  torch::Tensor cycle_a, cycle_b;

  /// The same pair with the roles of A and B exchanged.
  PairForward swapped() const;
  /// Throws cae::Error naming the first tensor with a non-finite entry.
  void check_finite() const;
};

/// Runs E_c, E_s and G over a pair batch, keeping the autograd graph.
PairForward forward_pair(const nets::ModelBundle& bundle, const torch::Tensor& x_a,
                         const torch::Tensor& x_b, const torch::Tensor& y_a,
                         const torch::Tensor& y_b);

/// Mean absolute difference over all elements.
torch::Tensor l1_mean(const torch::Tensor& a, const torch::Tensor& b);
/// Mean over the batch of -log softmax(logits)[target].
torch::Tensor softmax_nll(const torch::Tensor& logits, const torch::Tensor& targets);
/// Same with one target index shared by the whole batch.
torch::Tensor softmax_nll(const torch::Tensor& logits, std::int64_t target);

inline constexpr std::int64_t kFakeSlot = 0;
inline constexpr std::int64_t kRealSlot = 1;

// Terms credited to sample A; B is credited through pf.swapped().
torch::Tensor recon_image_loss(const PairForward& pf);      // |G(c_A,s_A) - x_A|
torch::Tensor recon_class_code_loss(const PairForward& pf); // |E_c(G(c_A,s_B)) - c_A|
torch::Tensor recon_indiv_code_loss(const PairForward& pf); // |E_s(G(c_B,s_A)) - s_A|
torch::Tensor cycle_loss(const PairForward& pf);            // |G(c_A,E_s(G(c_B,s_A))) - x_A|

/// -log p_real of D_r on the A-to-B cross decode.
torch::Tensor adv_loss_generator(const PairForward& pf, nets::Discriminator& d);
torch::Tensor adv_loss_generator_from_logits(const torch::Tensor& real_logits);
/// Cross-entropy of D_c on the A-to-B cross decode against `target` (y_B).
torch::Tensor cls_loss_generator(const PairForward& pf, nets::Discriminator& d,
                                 const torch::Tensor& target);
torch::Tensor cls_loss_generator_from_logits(const torch::Tensor& class_logits,
                                             const torch::Tensor& target, int class_count);

/// The twelve scalars of the encoder/decoder objective before weighting.
struct GeneratorTerms {
  torch::Tensor recon_image_a, recon_image_b;
  torch::Tensor recon_class_a, recon_class_b;
  torch::Tensor recon_indiv_a, recon_indiv_b;
  torch::Tensor cycle_a, cycle_b;
  torch::Tensor adv_a2b, adv_b2a;
  torch::Tensor cls_a2b, cls_b2a;
};

torch::Tensor weighted_generator_objective(const GeneratorTerms& t, const GeneratorLossWeights& w);

struct GeneratorObjective {
  GeneratorTerms terms;
  torch::Tensor total;
};

GeneratorObjective generator_objective(const PairForward& pf, nets::Discriminator& d,
                                       const GeneratorLossWeights& w);

/// Logits the discriminator objective consumes for one pair batch.
struct DiscriminatorLogitSet {
  torch::Tensor real_on_cross_a, real_on_cross_b;  // D_r on G(c_B,s_A), G(c_A,s_B)
  torch::Tensor real_on_x_a, real_on_x_b;          // D_r on x_A, x_B
  torch::Tensor class_on_x_a, class_on_x_b;        // D_c on x_A, x_B
};

struct DiscriminatorTerms {
  torch::Tensor adv_a2b, adv_b2a;  // fake-slot on cross decode + real-slot on the partner
  torch::Tensor cls_a, cls_b;      // class cross-entropy on real samples
  torch::Tensor total;
  double real_accuracy = 0.0;      // fraction of real samples judged real
  double fake_accuracy = 0.0;      // fraction of cross decodes judged fake
};

DiscriminatorTerms discriminator_objective_from_logits(const DiscriminatorLogitSet& logits,
                                                       const torch::Tensor& y_a,
                                                       const torch::Tensor& y_b,
                                                       const DiscriminatorLossWeights& w);

/// Cross decodes enter detached so no gradient reaches E or G.
DiscriminatorTerms discriminator_objective(const PairForward& pf, nets::Discriminator& d,
                                           const DiscriminatorLossWeights& w);

}  // namespace cae::losses
