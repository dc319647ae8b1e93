#include "cae/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "cae/core/image_ops.hpp"

namespace cae::train {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kPairStreamKey = 0x9a1e5;

void check_positive(double v, const char* name) {
  if (!std::isfinite(v) || v <= 0.0) throw Error(std::string(name) + " must be positive");
}

double scalar(const torch::Tensor& t) { return t.detach().to(torch::kFloat64).item<double>(); }

void require_finite_terms(const std::vector<std::pair<const char*, torch::Tensor>>& terms) {
  for (const auto& [name, t] : terms) {
    const double v = scalar(t);
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << "non-finite loss term " << name << " (" << v << ")";
      throw Error(os.str());
    }
  }
}

void set_requires_grad(const std::vector<torch::Tensor>& params, bool on) {
  for (auto p : params) p.requires_grad_(on);
}

ArchiveEntry to_entry(const std::string& name, const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat32).contiguous();
  ArchiveEntry e;
  e.name = name;
  e.shape.assign(c.sizes().begin(), c.sizes().end());
  e.data.assign(c.data_ptr<float>(), c.data_ptr<float>() + c.numel());
  return e;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

Adam::Adam(std::vector<torch::Tensor> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    exp_avg_.push_back(torch::zeros_like(p).detach());
    exp_avg_sq_.push_back(torch::zeros_like(p).detach());
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) {
    if (p.grad().defined()) p.mutable_grad().zero_();
  }
}

void Adam::step() {
  torch::NoGradGuard guard;
  ++step_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  const double step_size = options_.lr / bc1;
  const double bc2_sqrt = std::sqrt(bc2);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.grad().defined()) continue;
    auto grad = p.grad();
    if (options_.weight_decay != 0.0) grad = grad.add(p, options_.weight_decay);
    exp_avg_[i].mul_(options_.beta1).add_(grad, 1.0 - options_.beta1);
    exp_avg_sq_[i].mul_(options_.beta2).addcmul_(grad, grad, 1.0 - options_.beta2);
    auto denom = (exp_avg_sq_[i].sqrt() / bc2_sqrt).add_(options_.eps);
    p.addcdiv_(exp_avg_[i], denom, -step_size);
  }
}

void Adam::save(Archive& archive, const std::string& prefix) const {
  archive.set(prefix + ".step", std::to_string(step_));
  archive.set(prefix + ".count", std::to_string(params_.size()));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    archive.entries.push_back(to_entry(prefix + ".m." + std::to_string(i), exp_avg_[i]));
    archive.entries.push_back(to_entry(prefix + ".v." + std::to_string(i), exp_avg_sq_[i]));
  }
}

void Adam::load(const Archive& archive, const std::string& prefix) {
  const auto count = std::stoull(archive.get(prefix + ".count"));
  if (count != params_.size()) throw Error("optimizer state has a different parameter count");
  torch::NoGradGuard guard;
  auto restore = [&](const std::string& name, torch::Tensor& dst) {
    const auto& e = archive.entry(name);
    if (!dst.sizes().equals(e.shape)) throw Error("optimizer state shape mismatch for " + name);
    auto src = torch::from_blob(const_cast<float*>(e.data.data()), e.shape, torch::kFloat32);
    dst.copy_(src.to(dst.scalar_type()));
  };
  for (std::size_t i = 0; i < params_.size(); ++i) {
    restore(prefix + ".m." + std::to_string(i), exp_avg_[i]);
    restore(prefix + ".v." + std::to_string(i), exp_avg_sq_[i]);
  }
  step_ = std::stoll(archive.get(prefix + ".step"));
}

void TrainConfig::validate() const {
  if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
    throw Error("learning_rate must be a nonnegative finite number");
  }
  if (!std::isfinite(weight_decay) || weight_decay < 0.0) {
    throw Error("weight_decay must be a nonnegative finite number");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error("Adam betas must lie in [0, 1)");
  }
  if (batch_pairs < 1) throw Error("batch_pairs must be at least 1");
  if (iterations < 0) throw Error("iterations must be nonnegative");
  if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) {
    throw Error("flip_probability must lie in [0, 1]");
  }
  if (checkpoint_every < 0) throw Error("checkpoint_every must be nonnegative");
  if (log_every < 1) throw Error("log_every must be at least 1");
  gen_weights.validate();
  disc_weights.validate();
  net.validate();
}

std::string TrainConfig::canonical() const {
  std::ostringstream os;
  os << "lr=" << fmt(learning_rate) << ";wd=" << fmt(weight_decay) << ";b1=" << fmt(beta1)
     << ";b2=" << fmt(beta2) << ";batch=" << batch_pairs << ";seed=" << seed
     << ";flip=" << fmt(flip_probability) << ";upd=" << update_discriminator
     << update_generator << ";gw=" << fmt(gen_weights.recon_image) << ","
     << fmt(gen_weights.recon_class) << "," << fmt(gen_weights.recon_indiv) << ","
     << fmt(gen_weights.cycle) << "," << fmt(gen_weights.adversarial) << ","
     << fmt(gen_weights.classification) << ";dw=" << fmt(disc_weights.adversarial) << ","
     << fmt(disc_weights.classification) << ";net=" << net.side << "," << net.channels << ","
     << net.class_count << "," << net.code_dim << "," << net.width << "," << net.res_blocks
     << "," << net.mlp_hidden << "," << net.disc_res_blocks;
  // iterations, checkpoint cadence and logging are excluded so a run can be
  // extended from its checkpoints.
  return os.str();
}

std::string TrainConfig::hash() const { return fnv1a_hex(canonical()); }

std::string log_header() {
  return "iteration\trecon_image\trecon_class\trecon_indiv\tcycle\tadversarial\t"
         "classification\tgenerator_total\tdisc_adversarial\tdisc_classification\t"
         "discriminator_total\treal_accuracy\tfake_accuracy\twall_seconds";
}

std::string format_log(const TrainLogRecord& r) {
  std::ostringstream os;
  os << std::setprecision(7) << r.iteration << '\t' << r.recon_image << '\t' << r.recon_class
     << '\t' << r.recon_indiv << '\t' << r.cycle << '\t' << r.adversarial << '\t'
     << r.classification << '\t' << r.generator_total << '\t' << r.disc_adversarial << '\t'
     << r.disc_classification << '\t' << r.discriminator_total << '\t' << r.real_accuracy
     << '\t' << r.fake_accuracy << '\t' << r.wall_seconds;
  return os.str();
}

OptimizerState make_optimizers(const nets::ModelBundle& bundle, const TrainConfig& cfg) {
  AdamOptions o;
  o.lr = cfg.learning_rate;
  o.beta1 = cfg.beta1;
  o.beta2 = cfg.beta2;
  o.weight_decay = cfg.weight_decay;
  return OptimizerState{Adam(bundle.generator_parameters(), o),
                        Adam(bundle.discriminator_parameters(), o)};
}

PairBatch make_pair_batch(const PairSampler& sampler, int batch_pairs, double flip_probability,
                          torch::Dtype dtype, RandomStream& rng) {
  std::vector<ImageTensor> a, b;
  std::vector<std::int64_t> ya, yb;
  for (const auto& pair : sampler.batch(static_cast<std::size_t>(batch_pairs), rng)) {
    const auto& sa = sampler.sample(pair.a);
    const auto& sb = sampler.sample(pair.b);
    a.push_back(horizontal_flip_maybe(sa.image, flip_probability, rng));
    b.push_back(horizontal_flip_maybe(sb.image, flip_probability, rng));
    ya.push_back(sa.label.index);
    yb.push_back(sb.label.index);
  }
  PairBatch batch;
  batch.x_a = nets::images_to_tensor(a, dtype);
  batch.x_b = nets::images_to_tensor(b, dtype);
  batch.y_a = torch::tensor(ya, torch::kInt64);
  batch.y_b = torch::tensor(yb, torch::kInt64);
  return batch;
}

TrainLogRecord train_step(nets::ModelBundle& bundle, const PairBatch& batch,
                          const TrainConfig& cfg, OptimizerState& opt) {
  auto pf = losses::forward_pair(bundle, batch.x_a, batch.x_b, batch.y_a, batch.y_b);
  pf.check_finite();

  auto d = losses::discriminator_objective(pf, bundle.disc, cfg.disc_weights);
  require_finite_terms({{"disc_adversarial_a2b", d.adv_a2b},
                        {"disc_adversarial_b2a", d.adv_b2a},
                        {"disc_classification_a", d.cls_a},
                        {"disc_classification_b", d.cls_b}});
  if (cfg.update_discriminator) {
    opt.discriminator.zero_grad();
    d.total.backward();
    opt.discriminator.step();
  }

  // D is frozen for the encoder/decoder update; gradients still flow through it.
  const auto disc_params = bundle.discriminator_parameters();
  set_requires_grad(disc_params, false);
  losses::GeneratorObjective g;
  try {
    g = losses::generator_objective(pf, bundle.disc, cfg.gen_weights);
    const auto& t = g.terms;
    require_finite_terms({{"recon_image_a", t.recon_image_a}, {"recon_image_b", t.recon_image_b},
                          {"recon_class_a", t.recon_class_a}, {"recon_class_b", t.recon_class_b},
                          {"recon_indiv_a", t.recon_indiv_a}, {"recon_indiv_b", t.recon_indiv_b},
                          {"cycle_a", t.cycle_a},             {"cycle_b", t.cycle_b},
                          {"adversarial_a2b", t.adv_a2b},     {"adversarial_b2a", t.adv_b2a},
                          {"classification_a2b", t.cls_a2b},  {"classification_b2a", t.cls_b2a}});
    if (cfg.update_generator) {
      opt.generator.zero_grad();
      g.total.backward();
      opt.generator.step();
    }
  } catch (...) {
    set_requires_grad(disc_params, true);
    throw;
  }
  set_requires_grad(disc_params, true);

  const auto& t = g.terms;
  TrainLogRecord r;
  r.recon_image = scalar(t.recon_image_a) + scalar(t.recon_image_b);
  r.recon_class = scalar(t.recon_class_a) + scalar(t.recon_class_b);
  r.recon_indiv = scalar(t.recon_indiv_a) + scalar(t.recon_indiv_b);
  r.cycle = scalar(t.cycle_a) + scalar(t.cycle_b);
  r.adversarial = scalar(t.adv_a2b) + scalar(t.adv_b2a);
  r.classification = scalar(t.cls_a2b) + scalar(t.cls_b2a);
  r.generator_total = scalar(g.total);
  r.disc_adversarial = scalar(d.adv_a2b) + scalar(d.adv_b2a);
  r.disc_classification = scalar(d.cls_a) + scalar(d.cls_b);
  r.discriminator_total = scalar(d.total);
  r.real_accuracy = d.real_accuracy;
  r.fake_accuracy = d.fake_accuracy;
  return r;
}

void save_checkpoint(const fs::path& dir, const nets::ModelBundle& bundle,
                     const OptimizerState& opt, const RandomStream& rng, const TrainConfig& cfg) {
  fs::create_directories(dir);
  nets::save_bundle(bundle, dir / "model.cae");
  Archive state;
  state.set("format", "cae-optimizer");
  state.set("version", "1");
  state.set("iteration", std::to_string(bundle.meta.iteration));
  state.set("rng_seed", std::to_string(rng.seed()));
  state.set("rng_position", std::to_string(rng.position()));
  state.set("config_hash", cfg.hash());
  opt.generator.save(state, "gen");
  opt.discriminator.save(state, "disc");
  write_archive(dir / "optimizer.cae", state);
  std::ofstream(dir / "config.hash") << cfg.hash() << "\n" << cfg.canonical() << "\n";
}

Checkpoint load_checkpoint(const fs::path& dir, const TrainConfig& cfg) {
  if (!fs::is_directory(dir)) throw Error("checkpoint directory not found: " + dir.string());
  const Archive state = read_archive(dir / "optimizer.cae");
  if (state.get("format") != "cae-optimizer") throw Error("not an optimizer archive");
  const std::string hash = state.get("config_hash");
  if (hash != cfg.hash()) {
    throw Error("checkpoint was written with a different training configuration (" + hash +
                " vs " + cfg.hash() + ")");
  }
  auto bundle = nets::load_bundle(dir / "model.cae");
  if (!(bundle.config == cfg.net)) throw Error("checkpoint network sizes differ from config");
  if (std::to_string(bundle.meta.iteration) != state.get("iteration")) {
    throw Error("checkpoint model and optimizer iterations differ");
  }
  Checkpoint ck{bundle, make_optimizers(bundle, cfg),
                RandomStream(std::stoull(state.get("rng_seed")),
                             std::stoull(state.get("rng_position"))),
                hash};
  ck.opt.generator.load(state, "gen");
  ck.opt.discriminator.load(state, "disc");
  return ck;
}

void configure_determinism(bool deterministic) {
  if (!deterministic) return;
  torch::set_num_threads(1);
  at::globalContext().setDeterministicAlgorithms(true, false);
}

nets::ModelBundle train(const Dataset& ds, const TrainConfig& cfg,
                        const TrainRunOptions& options) {
  cfg.validate();
  ds.validate();
  if (ds.class_count != cfg.net.class_count) {
    throw Error("dataset has " + std::to_string(ds.class_count) + " classes, config expects " +
                std::to_string(cfg.net.class_count));
  }
  for (const auto& s : ds.samples) {
    if (s.image.side() != cfg.net.side || s.image.channels() != cfg.net.channels) {
      throw Error("sample " + s.id + " does not match the configured image size");
    }
  }
  configure_determinism(cfg.deterministic);
  const PairSampler sampler(ds);

  nets::ModelBundle bundle;
  OptimizerState opt;
  RandomStream rng;
  if (options.resume_from) {
    auto ck = load_checkpoint(*options.resume_from, cfg);
    bundle = ck.bundle;
    opt = std::move(ck.opt);
    rng = ck.rng;
  } else {
    bundle = nets::ModelBundle::create(cfg.net, cfg.seed);
    opt = make_optimizers(bundle, cfg);
    rng = RandomStream(cfg.seed).split(kPairStreamKey);
  }
  bundle.meta.seed = cfg.seed;
  bundle.meta.config_hash = cfg.hash();
  if (!ds.class_names.empty()) bundle.meta.class_names = ds.class_names;

  std::ofstream log;
  if (options.out_dir) {
    fs::create_directories(*options.out_dir);
    const auto log_path = *options.out_dir / "train_log.tsv";
    const bool fresh = !options.resume_from || !fs::exists(log_path);
    log.open(log_path, fresh ? std::ios::trunc : std::ios::app);
    if (!log) throw Error("cannot open " + log_path.string());
    if (fresh) log << log_header() << "\n";
  }

  const auto start = std::chrono::steady_clock::now();
  for (std::int64_t it = bundle.meta.iteration; it < cfg.iterations; ++it) {
    const auto batch =
        make_pair_batch(sampler, cfg.batch_pairs, cfg.flip_probability, bundle.dtype(), rng);
    auto rec = train_step(bundle, batch, cfg, opt);
    rec.iteration = it + 1;
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    bundle.meta.iteration = it + 1;
    const bool last = it + 1 == cfg.iterations;
    if ((it + 1) % cfg.log_every == 0 || last) {
      if (log.is_open()) log << format_log(rec) << "\n" << std::flush;
      if (options.on_log) options.on_log(rec);
    }
    const bool ckpt = cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0;
    if (options.out_dir && (ckpt || last)) {
      save_checkpoint(*options.out_dir / ("ckpt_" + std::to_string(it + 1)), bundle, opt, rng,
                      cfg);
    }
  }
  if (options.out_dir && bundle.meta.iteration == 0) {
    save_checkpoint(*options.out_dir / "ckpt_0", bundle, opt, rng, cfg);
  }
  if (options.out_dir) nets::save_bundle(bundle, *options.out_dir / "model.cae");
  return bundle;
}

Dataset balance_dataset(const Dataset& ds, int per_class, RandomStream& rng) {
  if (per_class < 1) throw Error("per_class must be at least 1");
  ds.validate();
  Dataset out;
  out.class_count = ds.class_count;
  out.split = ds.split;
  out.class_names = ds.class_names;
  const auto groups = ds.indices_by_class();
  for (int k = 0; k < ds.class_count; ++k) {
    auto idx = groups[static_cast<std::size_t>(k)];
    if (idx.empty()) throw Error("class " + std::to_string(k) + " has no samples to balance");
    const auto want = static_cast<std::size_t>(per_class);
    if (idx.size() >= want) {
      rng.shuffle(idx);
      for (std::size_t i = 0; i < want; ++i) out.samples.push_back(ds.samples[idx[i]]);
      continue;
    }
    for (auto i : idx) out.samples.push_back(ds.samples[i]);
    std::map<std::size_t, int> copies;
    for (std::size_t extra = idx.size(); extra < want; ++extra) {
      const auto src = idx[rng.below(idx.size())];
      auto s = ds.samples[src];
      s.id += "~" + std::to_string(++copies[src]);
      out.samples.push_back(std::move(s));
    }
  }
  out.validate();
  return out;
}

}  // namespace cae::train
