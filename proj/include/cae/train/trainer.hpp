#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "cae/core/archive.hpp"
#include "cae/core/pair_sampler.hpp"
#include "cae/core/types.hpp"
#include "cae/losses/losses.hpp"
#include "cae/nets/bundle.hpp"

namespace cae::train {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;  // L2 term added to the gradient
};

/// Adaptive moment estimation over a fixed parameter list. Moments are kept
/// in the parameters' dtype; state round-trips through an Archive.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<torch::Tensor> params, AdamOptions options);

  void zero_grad();
  /// Parameters without a gradient are skipped.
  void step();

  std::int64_t steps() const { return step_; }
  const AdamOptions& options() const { return options_; }
  void set_lr(double lr) { options_.lr = lr; }

  void save(Archive& archive, const std::string& prefix) const;
  void load(const Archive& archive, const std::string& prefix);

 private:
  std::vector<torch::Tensor> params_;
  std::vector<torch::Tensor> exp_avg_;
  std::vector<torch::Tensor> exp_avg_sq_;
  AdamOptions options_;
  std::int64_t step_ = 0;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int batch_pairs = 8;
  std::int64_t iterations = 1000;
  std::uint64_t seed = 0;
  double flip_probability = 0.5;
  std::int64_t checkpoint_every = 0;  // 0: only the final iteration
  std::int64_t log_every = 1;
  bool deterministic = true;
  bool update_discriminator = true;
  bool update_generator = true;
  losses::GeneratorLossWeights gen_weights;
  losses::DiscriminatorLossWeights disc_weights;
  nets::NetConfig net;

  void validate() const;
  /// Stable text form of every field; hashed into checkpoints.
  std::string canonical() const;
  std::string hash() const;
};

struct TrainLogRecord {
  std::int64_t iteration = 0;
  double recon_image = 0, recon_class = 0, recon_indiv = 0, cycle = 0;
  double adversarial = 0, classification = 0, generator_total = 0;
  double disc_adversarial = 0, disc_classification = 0, discriminator_total = 0;
  double real_accuracy = 0, fake_accuracy = 0;
  double wall_seconds = 0;
};

std::string log_header();
std::string format_log(const TrainLogRecord& r);

struct OptimizerState {
  Adam generator;
  Adam discriminator;
};

OptimizerState make_optimizers(const nets::ModelBundle& bundle, const TrainConfig& cfg);

struct PairBatch {
  torch::Tensor x_a, x_b, y_a, y_b;
};

/// Draws batch_pairs cross-class pairs and flips each image independently.
PairBatch make_pair_batch(const PairSampler& sampler, int batch_pairs, double flip_probability,
                          torch::Dtype dtype, RandomStream& rng);

/// One discriminator update (E and G fixed) followed by one encoder/decoder
/// update. Throws cae::Error naming the first non-finite loss term.
TrainLogRecord train_step(nets::ModelBundle& bundle, const PairBatch& batch,
                          const TrainConfig& cfg, OptimizerState& opt);

struct TrainRunOptions {
  /// Receives checkpoints (`ckpt_<iteration>/`), `train_log.tsv` and `model.cae`.
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::filesystem::path> resume_from;  // a ckpt_* directory
  std::function<void(const TrainLogRecord&)> on_log;
};

/// Full training loop. iterations == 0 returns the initialized bundle.
nets::ModelBundle train(const Dataset& ds, const TrainConfig& cfg,
                        const TrainRunOptions& options = {});

/// Checkpoint = bundle archive + optimizer/rng archive + config hash file.
void save_checkpoint(const std::filesystem::path& dir, const nets::ModelBundle& bundle,
                     const OptimizerState& opt, const RandomStream& rng,
                     const TrainConfig& cfg);

struct Checkpoint {
  nets::ModelBundle bundle;
  OptimizerState opt;
  RandomStream rng;
  std::string config_hash;
};

Checkpoint load_checkpoint(const std::filesystem::path& dir, const TrainConfig& cfg);

/// Exactly per_class samples per class: a uniform subsample without
/// replacement, or every original plus uniform draws with replacement when
/// the class is smaller. Duplicates get a "~<n>" id suffix.
Dataset balance_dataset(const Dataset& ds, int per_class, RandomStream& rng);

/// Applies the deterministic-kernel switches when cfg.deterministic is set.
void configure_determinism(bool deterministic);

}  // namespace cae::train
