#include "cae/nets/bundle.hpp"

#include <cstring>
#include <sstream>

namespace cae::nets {

namespace {

constexpr int kFormatVersion = 1;
constexpr std::int64_t kChunk = 64;

void append_named(std::vector<std::pair<std::string, torch::Tensor>>& out,
                  const std::string& prefix, const torch::nn::Module& m) {
  for (const auto& item : m.named_parameters(/*recurse=*/true)) {
    out.emplace_back(prefix + item.key(), item.value());
  }
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(item);
  return out;
}

int get_int(const Archive& a, const std::string& key) { return std::stoi(a.get(key)); }

/// Runs fn over kChunk-sized slices along dim 0 and concatenates.
template <typename Fn>
torch::Tensor chunked(std::int64_t n, Fn fn) {
  std::vector<torch::Tensor> parts;
  for (std::int64_t start = 0; start < n; start += kChunk) {
    parts.push_back(fn(start, std::min(kChunk, n - start)));
  }
  return parts.size() == 1 ? parts.front() : torch::cat(parts, 0);
}

}  // namespace

ModelBundle ModelBundle::create(const NetConfig& config, std::uint64_t seed) {
  config.validate();
  ModelBundle b;
  b.config = config;
  b.meta.seed = seed;
  for (int k = 0; k < config.class_count; ++k) b.meta.class_names.push_back("class" + std::to_string(k));
  b.enc_class = ClassEncoder(config);
  b.enc_indiv = IndivEncoder(config);
  b.decoder = Decoder(config);
  b.disc = Discriminator(config);
  RandomStream rng(seed);
  RandomStream r1 = rng.split(1), r2 = rng.split(2), r3 = rng.split(3), r4 = rng.split(4);
  kaiming_init(*b.enc_class, r1, 0.0);
  kaiming_init(*b.enc_indiv, r2, 0.0);
  kaiming_init(*b.decoder, r3, 0.0);
  kaiming_init(*b.disc, r4, kLeakySlope);
  return b;
}

ModelBundle ModelBundle::clone() const {
  ModelBundle copy = create(config, meta.seed);
  copy.meta = meta;
  copy.to(dtype());
  torch::NoGradGuard guard;
  auto src = named_parameters();
  auto dst = copy.named_parameters();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i].second.copy_(src[i].second);
  return copy;
}

void ModelBundle::to(torch::Dtype dt) {
  enc_class->to(dt);
  enc_indiv->to(dt);
  decoder->to(dt);
  disc->to(dt);
}

torch::Dtype ModelBundle::dtype() const {
  return enc_class->parameters().front().scalar_type();
}

std::vector<std::pair<std::string, torch::Tensor>> ModelBundle::named_parameters() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  append_named(out, "enc_class.", *enc_class);
  append_named(out, "enc_indiv.", *enc_indiv);
  append_named(out, "decoder.", *decoder);
  append_named(out, "disc.", *disc);
  return out;
}

std::vector<torch::Tensor> ModelBundle::generator_parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto* m : {static_cast<const torch::nn::Module*>(enc_class.get()),
                        static_cast<const torch::nn::Module*>(enc_indiv.get()),
                        static_cast<const torch::nn::Module*>(decoder.get())}) {
    for (const auto& p : m->parameters()) out.push_back(p);
  }
  return out;
}

std::vector<torch::Tensor> ModelBundle::discriminator_parameters() const {
  return disc->parameters();
}

std::string ModelBundle::model_hash() const {
  std::string bytes;
  const Archive a = bundle_to_archive(*this);
  for (const auto& [k, v] : a.manifest) {
    if (k == "iteration" || k == "config_hash") continue;
    bytes += k + "=" + v + "\n";
  }
  for (const auto& e : a.entries) {
    bytes += e.name;
    bytes.append(reinterpret_cast<const char*>(e.data.data()), e.data.size() * sizeof(float));
  }
  return fnv1a_hex(bytes);
}

Archive bundle_to_archive(const ModelBundle& b) {
  Archive a;
  a.set("format", "cae-bundle");
  a.set("version", std::to_string(kFormatVersion));
  a.set("side", std::to_string(b.config.side));
  a.set("channels", std::to_string(b.config.channels));
  a.set("class_count", std::to_string(b.config.class_count));
  a.set("code_dim", std::to_string(b.config.code_dim));
  a.set("width", std::to_string(b.config.width));
  a.set("res_blocks", std::to_string(b.config.res_blocks));
  a.set("mlp_hidden", std::to_string(b.config.mlp_hidden));
  a.set("disc_res_blocks", std::to_string(b.config.disc_res_blocks));
  a.set("seed", std::to_string(b.meta.seed));
  a.set("iteration", std::to_string(b.meta.iteration));
  a.set("config_hash", b.meta.config_hash);
  a.set("class_names", join(b.meta.class_names));
  for (const auto& [name, p] : b.named_parameters()) {
    auto t = p.detach().to(torch::kFloat32).contiguous();
    ArchiveEntry e{name, std::vector<std::int64_t>(t.sizes().begin(), t.sizes().end()), {}};
    e.data.assign(t.data_ptr<float>(), t.data_ptr<float>() + t.numel());
    a.entries.push_back(std::move(e));
  }
  return a;
}

ModelBundle bundle_from_archive(const Archive& a) {
  if (a.get("format") != "cae-bundle") throw Error("archive is not a model bundle");
  if (get_int(a, "version") != kFormatVersion) {
    throw Error("unsupported bundle version " + a.get("version"));
  }
  NetConfig cfg;
  cfg.side = get_int(a, "side");
  cfg.channels = get_int(a, "channels");
  cfg.class_count = get_int(a, "class_count");
  cfg.code_dim = get_int(a, "code_dim");
  cfg.width = get_int(a, "width");
  cfg.res_blocks = get_int(a, "res_blocks");
  cfg.mlp_hidden = get_int(a, "mlp_hidden");
  cfg.disc_res_blocks = get_int(a, "disc_res_blocks");
  ModelBundle b = ModelBundle::create(cfg, std::stoull(a.get("seed")));
  b.meta.iteration = std::stoll(a.get("iteration"));
  b.meta.config_hash = a.get("config_hash");
  b.meta.class_names = split_commas(a.get("class_names"));
  auto params = b.named_parameters();
  if (params.size() != a.entries.size()) {
    throw Error("bundle archive has " + std::to_string(a.entries.size()) + " tensors, expected " +
                std::to_string(params.size()));
  }
  torch::NoGradGuard guard;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = a.entries[i];
    auto& [name, p] = params[i];
    if (e.name != name) throw Error("bundle archive entry '" + e.name + "' where '" + name + "' expected");
    if (std::vector<std::int64_t>(p.sizes().begin(), p.sizes().end()) != e.shape) {
      throw Error("bundle archive entry '" + name + "' has the wrong shape");
    }
    p.copy_(torch::from_blob(const_cast<float*>(e.data.data()), p.sizes(), torch::kFloat32));
  }
  return b;
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path) {
  write_archive(path, bundle_to_archive(bundle));
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  return bundle_from_archive(read_archive(path));
}

torch::Tensor image_to_tensor(const ImageTensor& image, torch::Dtype dtype) {
  auto hwc = torch::from_blob(const_cast<float*>(image.data().data()),
                              {image.side(), image.side(), image.channels()}, torch::kFloat32);
  return hwc.permute({2, 0, 1}).to(dtype).contiguous();
}

torch::Tensor images_to_tensor(const std::vector<ImageTensor>& images, torch::Dtype dtype) {
  if (images.empty()) throw Error("images_to_tensor: empty batch");
  std::vector<torch::Tensor> parts;
  parts.reserve(images.size());
  for (const auto& img : images) parts.push_back(image_to_tensor(img, dtype));
  return torch::stack(parts);
}

ImageTensor tensor_to_image(const torch::Tensor& chw) {
  auto t = chw.detach().to(torch::kFloat32).clamp(-1.0, 1.0).permute({1, 2, 0}).contiguous();
  if (t.size(0) != t.size(1)) throw Error("tensor_to_image: image must be square");
  std::vector<float> data(t.data_ptr<float>(), t.data_ptr<float>() + t.numel());
  return ImageTensor(static_cast<int>(t.size(0)), static_cast<int>(t.size(2)), std::move(data));
}

std::vector<ImageTensor> tensor_to_images(const torch::Tensor& nchw) {
  std::vector<ImageTensor> out;
  for (std::int64_t i = 0; i < nchw.size(0); ++i) out.push_back(tensor_to_image(nchw[i]));
  return out;
}

torch::Tensor code_to_tensor(const ClassStyleCode& code, torch::Dtype dtype) {
  return torch::from_blob(const_cast<float*>(code.values.data()),
                          {static_cast<std::int64_t>(code.values.size())}, torch::kFloat32)
      .to(dtype)
      .clone();
}

ClassStyleCode tensor_to_code(const torch::Tensor& vec) {
  auto t = vec.detach().to(torch::kFloat32).contiguous();
  return ClassStyleCode(std::vector<float>(t.data_ptr<float>(), t.data_ptr<float>() + t.numel()));
}

torch::Tensor indiv_to_tensor(const IndividualStyleCode& code, torch::Dtype dtype) {
  return torch::from_blob(const_cast<float*>(code.values.data()),
                          {code.height, code.width, code.features}, torch::kFloat32)
      .permute({2, 0, 1})
      .to(dtype)
      .contiguous();
}

IndividualStyleCode tensor_to_indiv(const torch::Tensor& chw) {
  auto t = chw.detach().to(torch::kFloat32).permute({1, 2, 0}).contiguous();
  return IndividualStyleCode(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)),
                             static_cast<int>(t.size(2)),
                             std::vector<float>(t.data_ptr<float>(), t.data_ptr<float>() + t.numel()));
}

void check_image(const ModelBundle& bundle, const ImageTensor& x) {
  if (x.side() != bundle.config.side || x.channels() != bundle.config.channels) {
    throw Error("image " + std::to_string(x.side()) + "x" + std::to_string(x.side()) + "x" +
                std::to_string(x.channels()) + " does not match model input " +
                std::to_string(bundle.config.side) + "x" + std::to_string(bundle.config.side) +
                "x" + std::to_string(bundle.config.channels));
  }
}

torch::Tensor encode_class_batch(const ModelBundle& bundle, const torch::Tensor& x) {
  torch::NoGradGuard guard;
  auto enc = bundle.enc_class;
  return chunked(x.size(0), [&](std::int64_t s, std::int64_t n) {
    return enc->forward(x.narrow(0, s, n));
  });
}

torch::Tensor encode_indiv_batch(const ModelBundle& bundle, const torch::Tensor& x) {
  torch::NoGradGuard guard;
  auto enc = bundle.enc_indiv;
  return chunked(x.size(0), [&](std::int64_t s, std::int64_t n) {
    return enc->forward(x.narrow(0, s, n));
  });
}

torch::Tensor decode_batch(const ModelBundle& bundle, const torch::Tensor& codes,
                           const torch::Tensor& indiv) {
  if (codes.size(0) != indiv.size(0)) throw Error("decode_batch: batch sizes differ");
  torch::NoGradGuard guard;
  auto dec = bundle.decoder;
  return chunked(codes.size(0), [&](std::int64_t s, std::int64_t n) {
    return dec->forward(codes.narrow(0, s, n), indiv.narrow(0, s, n));
  });
}

ClassStyleCode encode_class(const ModelBundle& bundle, const ImageTensor& x) {
  check_image(bundle, x);
  return tensor_to_code(encode_class_batch(bundle, image_to_tensor(x, bundle.dtype()).unsqueeze(0))[0]);
}

IndividualStyleCode encode_indiv(const ModelBundle& bundle, const ImageTensor& x) {
  check_image(bundle, x);
  return tensor_to_indiv(encode_indiv_batch(bundle, image_to_tensor(x, bundle.dtype()).unsqueeze(0))[0]);
}

ImageTensor decode(const ModelBundle& bundle, const ClassStyleCode& c,
                   const IndividualStyleCode& s) {
  if (static_cast<int>(c.dim()) != bundle.config.code_dim) {
    throw Error("decode: class-style code has length " + std::to_string(c.dim()) + ", model expects " +
                std::to_string(bundle.config.code_dim));
  }
  if (s.height != bundle.config.indiv_side() || s.width != bundle.config.indiv_side() ||
      s.features != bundle.config.indiv_features()) {
    throw Error("decode: individual-style code shape does not match the model");
  }
  auto out = decode_batch(bundle, code_to_tensor(c, bundle.dtype()).unsqueeze(0),
                          indiv_to_tensor(s, bundle.dtype()).unsqueeze(0));
  return tensor_to_image(out[0]);
}

DiscriminatorLogits discriminate(const ModelBundle& bundle, const ImageTensor& x) {
  check_image(bundle, x);
  torch::NoGradGuard guard;
  auto d = bundle.disc;
  auto out = d->forward(image_to_tensor(x, bundle.dtype()).unsqueeze(0));
  auto r = out.real_logits[0].to(torch::kFloat64).contiguous();
  auto c = out.class_logits[0].to(torch::kFloat64).contiguous();
  return {std::vector<double>(r.data_ptr<double>(), r.data_ptr<double>() + r.numel()),
          std::vector<double>(c.data_ptr<double>(), c.data_ptr<double>() + c.numel())};
}

}  // namespace cae::nets
