#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cae/train/trainer.hpp"

namespace cae::service {

/// Everything the command-line tool and the service read from a config file.
/// Image side, d_c, K and channels live in train.net.
struct AppConfig {
  std::string data_root;
  int port = 8080;
  std::string classifier = "disc";
  int n_steps = 10;
  std::string weighting = "prob_delta";
  train::TrainConfig train;

  void validate() const;
};

/// Known keys in file order, for documentation and round-trips.
std::vector<std::string> config_keys();

/// Sets one key with typed parsing. Throws cae::Error for unknown keys and
/// unparsable values.
void set_config_value(AppConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const AppConfig& cfg, const std::string& key);

/// Flat `key = value` lines; `#` starts a comment. Unknown keys are rejected.
AppConfig parse_app_config(const std::string& text);
AppConfig load_app_config(const std::filesystem::path& path);
std::string app_config_to_text(const AppConfig& cfg);

}  // namespace cae::service
