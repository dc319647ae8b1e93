#include "cae/service/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

#include "cae/explain/explain.hpp"

namespace cae::service {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw Error("config key '" + key + "': cannot parse '" + v + "' as a number");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty()) {
    throw Error("config key '" + key + "': cannot parse '" + v + "' as a real number");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

struct Field {
  std::function<void(AppConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const AppConfig&)> get;
};

#define CAE_INT(key, member)                                                               \
  {key, Field{[](AppConfig& c, const std::string& k, const std::string& v) {              \
                c.member = parse_number<decltype(c.member)>(k, v);                        \
              },                                                                          \
              [](const AppConfig& c) { return std::to_string(c.member); }}}
#define CAE_REAL(key, member)                                                              \
  {key, Field{[](AppConfig& c, const std::string& k, const std::string& v) {              \
                c.member = parse_double(k, v);                                            \
              },                                                                          \
              [](const AppConfig& c) { return fmt(c.member); }}}
#define CAE_BOOL(key, member)                                                              \
  {key, Field{[](AppConfig& c, const std::string& k, const std::string& v) {              \
                c.member = parse_bool(k, v);                                              \
              },                                                                          \
              [](const AppConfig& c) { return std::string(c.member ? "true" : "false"); }}}
#define CAE_STR(key, member)                                                               \
  {key, Field{[](AppConfig& c, const std::string&, const std::string& v) { c.member = v; }, \
              [](const AppConfig& c) { return c.member; }}}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> f = {
      CAE_STR("data_root", data_root),
      CAE_INT("image_side", train.net.side),
      CAE_INT("channels", train.net.channels),
      CAE_INT("code_dim", train.net.code_dim),
      CAE_INT("class_count", train.net.class_count),
      CAE_INT("width", train.net.width),
      CAE_INT("res_blocks", train.net.res_blocks),
      CAE_INT("mlp_hidden", train.net.mlp_hidden),
      CAE_INT("disc_res_blocks", train.net.disc_res_blocks),
      CAE_REAL("learning_rate", train.learning_rate),
      CAE_REAL("weight_decay", train.weight_decay),
      CAE_REAL("beta1", train.beta1),
      CAE_REAL("beta2", train.beta2),
      CAE_INT("batch_pairs", train.batch_pairs),
      CAE_INT("iterations", train.iterations),
      CAE_INT("seed", train.seed),
      CAE_REAL("flip_probability", train.flip_probability),
      CAE_INT("checkpoint_every", train.checkpoint_every),
      CAE_INT("log_every", train.log_every),
      CAE_BOOL("deterministic", train.deterministic),
      CAE_REAL("weight_recon_image", train.gen_weights.recon_image),
      CAE_REAL("weight_recon_class", train.gen_weights.recon_class),
      CAE_REAL("weight_recon_indiv", train.gen_weights.recon_indiv),
      CAE_REAL("weight_cycle", train.gen_weights.cycle),
      CAE_REAL("weight_adversarial", train.gen_weights.adversarial),
      CAE_REAL("weight_classification", train.gen_weights.classification),
      CAE_REAL("weight_disc_adversarial", train.disc_weights.adversarial),
      CAE_REAL("weight_disc_classification", train.disc_weights.classification),
      CAE_INT("port", port),
      CAE_STR("classifier", classifier),
      CAE_INT("n_steps", n_steps),
      CAE_STR("weighting", weighting),
  };
  return f;
}

#undef CAE_INT
#undef CAE_REAL
#undef CAE_BOOL
#undef CAE_STR

const Field& field(const std::string& key) {
  for (const auto& [k, f] : fields()) {
    if (k == key) return f;
  }
  throw Error("unknown config key '" + key + "'");
}

}  // namespace

void AppConfig::validate() const {
  train.validate();
  if (port < 0 || port > 65535) throw Error("port must lie in [0, 65535]");
  if (n_steps < 2) throw Error("n_steps must be at least 2");
  explain::weighting_from_string(weighting);
  if (classifier.empty()) throw Error("classifier must not be empty");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, f] : fields()) keys.push_back(k);
  return keys;
}

void set_config_value(AppConfig& cfg, const std::string& key, const std::string& value) {
  field(key).set(cfg, key, value);
}

std::string get_config_value(const AppConfig& cfg, const std::string& key) {
  return field(key).get(cfg);
}

AppConfig parse_app_config(const std::string& text) {
  AppConfig cfg;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error("config line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      throw Error("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

AppConfig load_app_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_app_config(ss.str());
}

std::string app_config_to_text(const AppConfig& cfg) {
  std::string out;
  for (const auto& [k, f] : fields()) out += k + " = " + f.get(cfg) + "\n";
  return out;
}

}  // namespace cae::service
