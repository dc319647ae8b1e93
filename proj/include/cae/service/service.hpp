#pragma once

#include <memory>
#include <string>

#include "cae/explain/classifier.hpp"
#include "cae/explain/explain.hpp"
#include "cae/manifold/manifold.hpp"
#include "cae/nets/bundle.hpp"

namespace cae::service {

/// Everything one service instance serves. Immutable after create().
struct SessionState {
  nets::ModelBundle bundle;
  Dataset samples;
  manifold::CodeTable table;
  manifold::ProjectionModel projection;
  std::shared_ptr<const explain::BlackBoxClassifier> classifier;
  std::string model_hash;
  int default_steps = explain::kDefaultSteps;

  /// Extracts the code table of `samples` and fits a 2-D projection.
  static std::shared_ptr<const SessionState> create(
      nets::ModelBundle bundle, Dataset samples,
      std::shared_ptr<const explain::BlackBoxClassifier> classifier,
      int default_steps = explain::kDefaultSteps);

  /// Table, projection and classifier must belong to the loaded model.
  void validate() const;
};

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// Serialized library results; the endpoints return exactly these.
std::string image_to_base64_png(const ImageTensor& image);
ImageTensor image_from_base64_png(const std::string& text, int side, int channels);
std::string series_to_json(const explain::CounterfactualSeries& series);
std::string saliency_to_json(const explain::CounterfactualSeries& series,
                             const explain::SaliencyResult& result);

/// Request routing for /v1/{meta,codes,encode,decode,path,saliency}.
/// Malformed payloads give 400 with {"error", "field"}; unknown ids 404;
/// a request "model_hash" other than the loaded model's gives 409.
class Service {
 public:
  explicit Service(std::shared_ptr<const SessionState> state);

  HttpResponse handle(const std::string& method, const std::string& path,
                      const std::string& body) const;
  const SessionState& state() const { return *state_; }

 private:
  std::shared_ptr<const SessionState> state_;
};

/// httplib server around a Service. start() binds (port 0 picks a free
/// port) and serves on a background thread; serve_forever() blocks.
class HttpServer {
 public:
  explicit HttpServer(std::shared_ptr<const Service> service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  int start(const std::string& host, int port);
  void serve_forever(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cae::service
