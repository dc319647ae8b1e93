#include "cae/service/service.hpp"

#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "cae/core/base64.hpp"
#include "cae/core/dataset_io.hpp"
#include "cae/core/image_ops.hpp"

namespace cae::service {

using nlohmann::json;

namespace {

// A request problem reported back to the client.
struct RequestError {
  int status;
  std::string field;
  std::string message;
};

[[noreturn]] void bad(const std::string& field, const std::string& message) {
  throw RequestError{400, field, message};
}

HttpResponse json_response(int status, const json& j) { return {status, j.dump(), "application/json"}; }

HttpResponse error_response(const RequestError& e) {
  json j;
  j["error"] = e.message;
  if (!e.field.empty()) j["field"] = e.field;
  return json_response(e.status, j);
}

json parse_body(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    bad("", std::string("body is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) bad("", "body must be a JSON object");
  return j;
}

std::vector<float> float_array(const json& j, const std::string& field, std::size_t expected) {
  if (!j.is_array()) bad(field, "expected an array of numbers");
  if (expected && j.size() != expected) {
    bad(field, "expected " + std::to_string(expected) + " numbers, got " + std::to_string(j.size()));
  }
  std::vector<float> out;
  for (const auto& v : j) {
    if (!v.is_number()) bad(field, "expected an array of numbers");
    out.push_back(v.get<float>());
  }
  return out;
}

std::string string_field(const json& j, const std::string& field) {
  if (!j.contains(field)) bad(field, "missing");
  if (!j[field].is_string()) bad(field, "expected a string");
  return j[field].get<std::string>();
}

int int_field(const json& j, const std::string& field) {
  if (!j[field].is_number_integer()) bad(field, "expected an integer");
  return j[field].get<int>();
}

json code_json(const ClassStyleCode& c) { return c.values; }

json vector_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

class Handlers {
 public:
  explicit Handlers(const SessionState& s) : s_(s) {}

  void check_model(const json& req) const {
    if (req.contains("model_hash") &&
        (!req["model_hash"].is_string() || req["model_hash"].get<std::string>() != s_.model_hash)) {
      throw RequestError{409, "model_hash",
                         "request targets a different model (loaded: " + s_.model_hash + ")"};
    }
  }

  const LabeledSample& sample(const json& req, const std::string& field) const {
    const auto id = string_field(req, field);
    const auto* s = s_.samples.find(id);
    if (!s) throw RequestError{404, field, "unknown sample id '" + id + "'"};
    return *s;
  }

  ClassStyleCode code_of(const LabeledSample& s) const {
    const auto* row = s_.table.find(s.id);
    return row ? row->code : nets::encode_class(s_.bundle, s.image);
  }

  // {"code": [...]} | {"class": k} | {"sample_id": id} | {"point": [x, y]}
  ClassStyleCode endpoint(const json& req, const std::string& field, std::optional<int>* cls) const {
    if (!req.contains(field)) bad(field, "missing");
    const auto& e = req[field];
    if (!e.is_object()) bad(field, "expected an object with code, class, sample_id or point");
    const auto d = static_cast<std::size_t>(s_.bundle.config.code_dim);
    if (e.contains("code")) return ClassStyleCode(float_array(e["code"], field + ".code", d));
    if (e.contains("class")) {
      const int k = int_field(e, "class");
      if (k < 0 || k >= s_.bundle.config.class_count) bad(field + ".class", "class out of range");
      if (s_.table.rows_of_class(k).empty()) bad(field + ".class", "class has no codes");
      if (cls) *cls = k;
      return manifold::class_centroid(s_.table, k);
    }
    if (e.contains("sample_id")) {
      const auto& s = sample(e, "sample_id");
      if (cls) *cls = s.label.index;
      return code_of(s);
    }
    if (e.contains("point")) {
      const auto p = float_array(e["point"], field + ".point", static_cast<std::size_t>(s_.projection.k()));
      Eigen::VectorXd v(s_.projection.k());
      for (int i = 0; i < v.size(); ++i) v[i] = p[static_cast<std::size_t>(i)];
      return s_.projection.back_project(v);
    }
    bad(field, "expected one of code, class, sample_id, point");
  }

  explain::CounterfactualSeries series(const json& req) const {
    check_model(req);
    const auto& source = sample(req, "source_id");
    int n = s_.default_steps;
    if (req.contains("n_steps")) {
      n = int_field(req, "n_steps");
      if (n < 2) bad("n_steps", "must be at least 2");
      if (n > 256) bad("n_steps", "must be at most 256");
    }
    std::optional<int> end_class;
    const auto start = req.contains("start") ? endpoint(req, "start", nullptr) : code_of(source);
    const auto end = endpoint(req, "end", &end_class);
    int dst = end_class ? *end_class
                        : explain::default_destination(source.label.index, s_.bundle.config.class_count);
    if (req.contains("destination_class")) {
      dst = int_field(req, "destination_class");
      if (dst < 0 || dst >= s_.bundle.config.class_count) bad("destination_class", "out of range");
    }
    return explain::generate_series(s_.bundle, source, manifold::build_path(start, end, n),
                                    *s_.classifier, dst);
  }

  HttpResponse meta() const {
    json j;
    j["class_count"] = s_.bundle.config.class_count;
    j["code_dim"] = s_.bundle.config.code_dim;
    j["side"] = s_.bundle.config.side;
    j["channels"] = s_.bundle.config.channels;
    j["class_names"] = s_.bundle.meta.class_names;
    j["model_hash"] = s_.model_hash;
    j["sample_count"] = s_.samples.size();
    j["default_steps"] = s_.default_steps;
    return json_response(200, j);
  }

  HttpResponse codes() const {
    json j;
    j["model_hash"] = s_.model_hash;
    j["code_dim"] = s_.table.code_dim;
    j["class_count"] = s_.table.class_count;
    j["class_names"] = s_.table.class_names;
    j["projection"] = {{"mean", vector_json(s_.projection.mean)},
                       {"explained", s_.projection.explained}};
    json axes = json::array();
    for (int i = 0; i < s_.projection.k(); ++i) {
      axes.push_back(vector_json(s_.projection.axes.row(i).transpose()));
    }
    j["projection"]["axes"] = axes;
    json rows = json::array();
    for (const auto& r : s_.table.rows) {
      rows.push_back({{"id", r.id},
                      {"label", r.label.index},
                      {"code", code_json(r.code)},
                      {"xy", vector_json(s_.projection.project(r.code))}});
    }
    j["rows"] = rows;
    return json_response(200, j);
  }

  HttpResponse encode(const json& req) const {
    check_model(req);
    ImageTensor image;
    std::string id;
    if (req.contains("image")) {
      try {
        image = image_from_base64_png(string_field(req, "image"), s_.bundle.config.side,
                                      s_.bundle.config.channels);
      } catch (const Error& e) {
        bad("image", e.what());
      }
    } else if (req.contains("sample_id")) {
      const auto& s = sample(req, "sample_id");
      image = s.image;
      id = s.id;
    } else {
      bad("image", "expected image or sample_id");
    }
    const auto code = nets::encode_class(s_.bundle, image);
    const auto indiv = nets::encode_indiv(s_.bundle, image);
    json j;
    if (!id.empty()) j["sample_id"] = id;
    j["code"] = code_json(code);
    j["xy"] = vector_json(s_.projection.project(code));
    j["indiv_shape"] = {indiv.height, indiv.width, indiv.features};
    j["probs"] = s_.classifier->predict(image);
    return json_response(200, j);
  }

  HttpResponse decode(const json& req) const {
    check_model(req);
    const auto& source = sample(req, "source_id");
    if (!req.contains("code")) bad("code", "missing");
    const ClassStyleCode code(float_array(req["code"], "code",
                                          static_cast<std::size_t>(s_.bundle.config.code_dim)));
    const auto frame = nets::decode(s_.bundle, code, nets::encode_indiv(s_.bundle, source.image));
    json j;
    j["source_id"] = source.id;
    j["image"] = image_to_base64_png(frame);
    j["probs"] = s_.classifier->predict(frame);
    return json_response(200, j);
  }

  HttpResponse path(const json& req) const {
    return {200, series_to_json(series(req)), "application/json"};
  }

  HttpResponse saliency(const json& req) const {
    auto w = explain::Weighting::kProbDelta;
    if (req.contains("weighting")) {
      try {
        w = explain::weighting_from_string(string_field(req, "weighting"));
      } catch (const Error& e) {
        bad("weighting", e.what());
      }
    }
    const auto s = series(req);
    return {200, saliency_to_json(s, explain::saliency_map(s, w)), "application/json"};
  }

 private:
  const SessionState& s_;
};

}  // namespace

std::shared_ptr<const SessionState> SessionState::create(
    nets::ModelBundle bundle, Dataset samples,
    std::shared_ptr<const explain::BlackBoxClassifier> classifier, int default_steps) {
  if (!classifier) throw Error("session needs a classifier");
  auto s = std::make_shared<SessionState>();
  s->bundle = std::move(bundle);
  s->samples = std::move(samples);
  s->classifier = std::move(classifier);
  s->model_hash = s->bundle.model_hash();
  s->default_steps = default_steps;
  s->table = manifold::extract_codes(s->bundle, s->samples);
  const int k = std::min<int>(2, s->bundle.config.code_dim);
  if (static_cast<int>(s->table.rows.size()) < k) throw Error("session needs at least two samples");
  s->projection = manifold::fit_pca(s->table, k);
  s->validate();
  return s;
}

void SessionState::validate() const {
  if (table.model_hash != model_hash || bundle.model_hash() != model_hash) {
    throw Error("code table was extracted with a different model");
  }
  if (projection.code_dim() != bundle.config.code_dim) throw Error("projection does not match the model");
  if (!classifier || classifier->class_count() != bundle.config.class_count) {
    throw Error("classifier does not cover the model's classes");
  }
  if (default_steps < 2) throw Error("default_steps must be at least 2");
}

std::string image_to_base64_png(const ImageTensor& image) {
  return base64_encode(encode_png(to_raw(image)));
}

ImageTensor image_from_base64_png(const std::string& text, int side, int channels) {
  const auto raw = decode_png(base64_decode(text));
  if (raw.channels != channels) {
    throw Error("image has " + std::to_string(raw.channels) + " channels, model expects " +
                std::to_string(channels));
  }
  return normalize_image(raw, side);
}

std::string series_to_json(const explain::CounterfactualSeries& series) {
  json j;
  j["source_id"] = series.source_id;
  j["source_class"] = series.source_class;
  j["destination_class"] = series.destination_class;
  j["n_steps"] = series.path.n_steps;
  json points = json::array();
  for (const auto& p : series.path.points()) points.push_back(code_json(p));
  j["points"] = points;
  json frames = json::array();
  for (const auto& f : series.frames) frames.push_back(image_to_base64_png(f));
  j["frames"] = frames;
  j["probs"] = series.probs;
  return j.dump();
}

std::string saliency_to_json(const explain::CounterfactualSeries& series,
                             const explain::SaliencyResult& result) {
  json j = json::parse(explain::saliency_summary(series, result));
  j["saliency"] = {{"side", result.saliency.side}, {"values", result.saliency.values}};
  // Overlay on frame 0 as the client receives it, so it can be rebuilt from the payloads.
  const auto& f0 = series.frames.front();
  const auto wire = image_from_base64_png(image_to_base64_png(f0), f0.side(), f0.channels());
  j["overlay"] = base64_encode(encode_png(explain::overlay_image(wire, result.saliency)));
  return j.dump();
}

Service::Service(std::shared_ptr<const SessionState> state) : state_(std::move(state)) {
  if (!state_) throw Error("service needs a session");
  state_->validate();
}

HttpResponse Service::handle(const std::string& method, const std::string& path,
                             const std::string& body) const {
  torch::NoGradGuard guard;
  const Handlers h(*state_);
  try {
    if (method == "GET" && path == "/v1/meta") return h.meta();
    if (method == "GET" && path == "/v1/codes") return h.codes();
    if (method == "POST") {
      if (path == "/v1/encode") return h.encode(parse_body(body));
      if (path == "/v1/decode") return h.decode(parse_body(body));
      if (path == "/v1/path") return h.path(parse_body(body));
      if (path == "/v1/saliency") return h.saliency(parse_body(body));
    }
    const bool known = path == "/v1/meta" || path == "/v1/codes" || path == "/v1/encode" ||
                       path == "/v1/decode" || path == "/v1/path" || path == "/v1/saliency";
    return error_response({known ? 405 : 404, "", (known ? "method not allowed: " : "no such endpoint: ") + path});
  } catch (const RequestError& e) {
    return error_response(e);
  } catch (const json::exception& e) {
    return error_response({400, "", std::string("malformed payload: ") + e.what()});
  } catch (const Error& e) {
    return error_response({400, "", e.what()});
  } catch (const std::exception& e) {
    return error_response({500, "", e.what()});
  }
}

struct HttpServer::Impl {
  std::shared_ptr<const Service> service;
  httplib::Server server;
  std::thread thread;
};

HttpServer::HttpServer(std::shared_ptr<const Service> service) : impl_(std::make_unique<Impl>()) {
  impl_->service = std::move(service);
  auto svc = impl_->service;
  auto route = [svc](const httplib::Request& req, httplib::Response& res) {
    const auto out = svc->handle(req.method, req.path, req.body);
    res.status = out.status;
    res.set_content(out.body, out.content_type);
  };
  impl_->server.Get(R"(/v1/.*)", route);
  impl_->server.Post(R"(/v1/.*)", route);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void HttpServer::serve_forever(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) {
    throw Error("cannot listen on " + host + ":" + std::to_string(port));
  }
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace cae::service
