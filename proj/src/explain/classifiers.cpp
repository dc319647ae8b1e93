#include "cae/explain/classifiers.hpp"

#include <array>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unistd.h>

#include "httplib.h"
#include "json.hpp"

#include "cae/core/archive.hpp"
#include "cae/core/base64.hpp"
#include "cae/core/dataset_io.hpp"
#include "cae/core/image_ops.hpp"
#include "cae/nets/layers.hpp"

namespace cae::explain {

namespace fs = std::filesystem;

namespace {

constexpr std::int64_t kChunk = 64;

std::vector<double> row_to_vector(const torch::Tensor& row) {
  auto r = row.to(torch::kFloat64).contiguous();
  return std::vector<double>(r.data_ptr<double>(), r.data_ptr<double>() + r.numel());
}

std::vector<std::vector<double>> rows(const torch::Tensor& probs) {
  std::vector<std::vector<double>> out;
  for (std::int64_t i = 0; i < probs.size(0); ++i) out.push_back(row_to_vector(probs[i]));
  return out;
}

std::vector<double> parse_probabilities(const std::string& text, int k) {
  std::istringstream is(text);
  std::vector<double> p;
  double v = 0.0;
  while (is >> v) p.push_back(v);
  if (!is.eof()) throw Error("classifier output is not a list of numbers: '" + text + "'");
  check_probabilities(p, k);
  return p;
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

}  // namespace

void ProbeConfig::validate() const {
  if (side < 8 || channels < 1 || class_count < 2 || width < 1) {
    throw Error("probe: invalid sizes");
  }
  if (epochs < 0 || batch < 1) throw Error("probe: epochs must be nonnegative and batch positive");
  if (!(learning_rate > 0.0)) throw Error("probe: learning rate must be positive");
  if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) {
    throw Error("probe: flip probability outside [0, 1]");
  }
}

ProbeNetImpl::ProbeNetImpl(const ProbeConfig& cfg) {
  const int w = cfg.width;
  const std::array<int, 7> widths{w, 2 * w, 2 * w, 4 * w, 4 * w, 8 * w, 8 * w};
  const std::array<int, 7> strides{1, 2, 1, 2, 1, 2, 1};
  int in = cfg.channels;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    convs_.push_back(register_module("conv" + std::to_string(i),
                                     nets::conv3x3(in, widths[i], strides[i])));
    in = widths[i];
  }
  head_ = register_module("head", torch::nn::Linear(in, cfg.class_count));
}

torch::Tensor ProbeNetImpl::forward(const torch::Tensor& x) {
  auto h = x;
  for (auto& c : convs_) h = torch::relu(c->forward(h));
  return head_->forward(h.mean({2, 3}));
}

ProbeClassifier::ProbeClassifier(const ProbeConfig& cfg) : cfg_(cfg), net_(cfg) {
  cfg_.validate();
  RandomStream rng(cfg.seed);
  nets::kaiming_init(*net_, rng, 0.0);
}

ProbeClassifier ProbeClassifier::train(const Dataset& ds, const ProbeConfig& cfg,
                                       const std::function<void(int, double)>& on_epoch) {
  ds.validate();
  if (ds.class_count != cfg.class_count) throw Error("probe: dataset class count differs");
  ProbeClassifier probe(cfg);
  RandomStream rng = RandomStream(cfg.seed).split(0x9b0be);
  torch::optim::Adam opt(probe.net_->parameters(), torch::optim::AdamOptions(cfg.learning_rate));
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  probe.net_->train();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t off = 0; off < order.size(); off += static_cast<std::size_t>(cfg.batch)) {
      const auto end = std::min(order.size(), off + static_cast<std::size_t>(cfg.batch));
      std::vector<ImageTensor> images;
      std::vector<std::int64_t> labels;
      for (std::size_t i = off; i < end; ++i) {
        const auto& s = ds.samples[order[i]];
        images.push_back(horizontal_flip_maybe(s.image, cfg.flip_probability, rng));
        labels.push_back(s.label.index);
      }
      auto logits = probe.net_->forward(nets::images_to_tensor(images));
      auto loss = torch::cross_entropy_loss(logits, torch::tensor(labels));
      opt.zero_grad();
      loss.backward();
      opt.step();
      total += loss.item<double>();
      ++batches;
    }
    if (on_epoch) on_epoch(epoch, batches ? total / batches : 0.0);
  }
  probe.net_->eval();
  return probe;
}

torch::Tensor ProbeClassifier::predict_tensor(const torch::Tensor& nchw) const {
  torch::NoGradGuard guard;
  if (nchw.dim() != 4 || nchw.size(1) != cfg_.channels || nchw.size(2) != cfg_.side ||
      nchw.size(3) != cfg_.side) {
    throw Error("probe: input batch does not match the probe's image size");
  }
  std::vector<torch::Tensor> parts;
  for (std::int64_t off = 0; off < nchw.size(0); off += kChunk) {
    auto x = nchw.narrow(0, off, std::min(kChunk, nchw.size(0) - off)).to(torch::kFloat32);
    parts.push_back(torch::softmax(net_.ptr()->forward(x).to(torch::kFloat64), 1));
  }
  if (parts.empty()) return torch::empty({0, cfg_.class_count}, torch::kFloat64);
  return torch::cat(parts);
}

std::vector<double> ProbeClassifier::predict(const ImageTensor& x) const {
  return row_to_vector(predict_tensor(nets::image_to_tensor(x).unsqueeze(0))[0]);
}

std::vector<std::vector<double>> ProbeClassifier::predict_batch(
    const std::vector<ImageTensor>& xs) const {
  if (xs.empty()) return {};
  return rows(predict_tensor(nets::images_to_tensor(xs)));
}

double ProbeClassifier::accuracy(const Dataset& ds) const {
  if (ds.empty()) return 0.0;
  std::vector<ImageTensor> images;
  std::vector<std::int64_t> labels;
  for (const auto& s : ds.samples) {
    images.push_back(s.image);
    labels.push_back(s.label.index);
  }
  auto pred = predict_tensor(nets::images_to_tensor(images)).argmax(1);
  return pred.eq(torch::tensor(labels)).to(torch::kFloat64).mean().item<double>();
}

void ProbeClassifier::save(const fs::path& path) const {
  Archive a;
  a.set("format", "cae-probe");
  a.set("version", "1");
  a.set("side", std::to_string(cfg_.side));
  a.set("channels", std::to_string(cfg_.channels));
  a.set("class_count", std::to_string(cfg_.class_count));
  a.set("width", std::to_string(cfg_.width));
  a.set("seed", std::to_string(cfg_.seed));
  for (const auto& item : net_->named_parameters()) {
    auto t = item.value().detach().to(torch::kFloat32).contiguous();
    ArchiveEntry e;
    e.name = item.key();
    e.shape.assign(t.sizes().begin(), t.sizes().end());
    e.data.assign(t.data_ptr<float>(), t.data_ptr<float>() + t.numel());
    a.entries.push_back(std::move(e));
  }
  write_archive(path, a);
}

ProbeClassifier ProbeClassifier::load(const fs::path& path) {
  const Archive a = read_archive(path);
  if (a.get("format") != "cae-probe") throw Error("not a probe archive: " + path.string());
  ProbeConfig cfg;
  cfg.side = std::stoi(a.get("side"));
  cfg.channels = std::stoi(a.get("channels"));
  cfg.class_count = std::stoi(a.get("class_count"));
  cfg.width = std::stoi(a.get("width"));
  cfg.seed = std::stoull(a.get("seed"));
  ProbeClassifier probe(cfg);
  torch::NoGradGuard guard;
  for (auto& item : probe.net_->named_parameters()) {
    const auto& e = a.entry(item.key());
    if (!item.value().sizes().equals(e.shape)) throw Error("probe archive shape mismatch for " + item.key());
    item.value().copy_(torch::from_blob(const_cast<float*>(e.data.data()), e.shape, torch::kFloat32));
  }
  probe.net_->eval();
  return probe;
}

DiscriminatorClassifier::DiscriminatorClassifier(nets::ModelBundle bundle)
    : bundle_(std::move(bundle)) {}

torch::Tensor DiscriminatorClassifier::predict_tensor(const torch::Tensor& nchw) const {
  torch::NoGradGuard guard;
  std::vector<torch::Tensor> parts;
  for (std::int64_t off = 0; off < nchw.size(0); off += kChunk) {
    auto x = nchw.narrow(0, off, std::min(kChunk, nchw.size(0) - off)).to(bundle_.dtype());
    parts.push_back(torch::softmax(bundle_.disc.ptr()->forward(x).class_logits.to(torch::kFloat64), 1));
  }
  if (parts.empty()) return torch::empty({0, class_count()}, torch::kFloat64);
  return torch::cat(parts);
}

std::vector<double> DiscriminatorClassifier::predict(const ImageTensor& x) const {
  nets::check_image(bundle_, x);
  return row_to_vector(predict_tensor(nets::image_to_tensor(x).unsqueeze(0))[0]);
}

CommandClassifier::CommandClassifier(std::string command, int class_count)
    : command_(std::move(command)), k_(class_count) {
  if (command_.empty()) throw Error("command classifier: empty command");
  if (k_ < 2) throw Error("a classifier needs at least two classes");
}

std::vector<double> CommandClassifier::predict(const ImageTensor& x) const {
  static std::atomic<std::uint64_t> counter{0};
  const auto file = fs::temp_directory_path() /
                    ("cae_query_" + std::to_string(::getpid()) + "_" +
                     std::to_string(counter.fetch_add(1)) + ".png");
  write_png(file, x);
  std::string out;
  const std::string cmd = command_ + " " + shell_quote(file.string());
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) {
    fs::remove(file);
    throw Error("cannot run classifier command: " + command_);
  }
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe)) out += buf.data();
  const int status = ::pclose(pipe);
  fs::remove(file);
  if (status != 0) throw Error("classifier command exited with status " + std::to_string(status));
  return parse_probabilities(out, k_);
}

HttpClassifier::HttpClassifier(std::string host, int port, std::string path, int class_count)
    : host_(std::move(host)), port_(port), path_(std::move(path)), k_(class_count) {
  if (k_ < 2) throw Error("a classifier needs at least two classes");
  if (path_.empty() || path_[0] != '/') path_ = "/" + path_;
}

std::vector<double> HttpClassifier::predict(const ImageTensor& x) const {
  httplib::Client cli(host_, port_);
  cli.set_read_timeout(60, 0);
  nlohmann::json req;
  req["image"] = base64_encode(encode_png(to_raw(x)));
  auto res = cli.Post(path_, req.dump(), "application/json");
  if (!res) throw Error("classifier endpoint unreachable: " + host_ + ":" + std::to_string(port_));
  if (res->status != 200) {
    throw Error("classifier endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body);
  }
  std::vector<double> p;
  try {
    p = nlohmann::json::parse(res->body).at("probs").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed classifier response: ") + e.what());
  }
  check_probabilities(p, k_);
  return p;
}

std::unique_ptr<BlackBoxClassifier> make_classifier(const std::string& spec,
                                                    const nets::ModelBundle* bundle,
                                                    int class_count) {
  if (spec == "disc") {
    if (!bundle) throw Error("classifier 'disc' needs a model");
    return std::make_unique<DiscriminatorClassifier>(*bundle);
  }
  if (spec.rfind("probe:", 0) == 0) {
    auto probe = ProbeClassifier::load(spec.substr(6));
    if (class_count > 0 && probe.class_count() != class_count) {
      throw Error("probe covers " + std::to_string(probe.class_count()) + " classes, expected " +
                  std::to_string(class_count));
    }
    return std::make_unique<ProbeClassifier>(std::move(probe));
  }
  if (spec.rfind("command:", 0) == 0) {
    return std::make_unique<CommandClassifier>(spec.substr(8), class_count);
  }
  if (spec.rfind("http://", 0) == 0) {
    const auto rest = spec.substr(7);
    const auto slash = rest.find('/');
    const auto hostport = rest.substr(0, slash);
    const auto path = slash == std::string::npos ? std::string("/") : rest.substr(slash);
    const auto colon = hostport.rfind(':');
    if (colon == std::string::npos) throw Error("classifier URL needs a port: " + spec);
    return std::make_unique<HttpClassifier>(hostport.substr(0, colon),
                                            std::stoi(hostport.substr(colon + 1)), path,
                                            class_count);
  }
  throw Error("unknown classifier spec '" + spec +
              "' (expected disc, probe:<file>, command:<cmd> or http://host:port/path)");
}

}  // namespace cae::explain
