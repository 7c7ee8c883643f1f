#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "statprec/eval_harness.hpp"

namespace statprec::cli {

// Bad flags, presets, config files or values. Maps to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GmmSettings {
  int max_iters = 300;
  double tol = 1e-5;
  double floor_rel = 1e-6;
  SpectralUpdate update = SpectralUpdate::kLatentSpectrum;
};

struct GnnSettings {
  int hidden_layers = 5;
  int width = 128;
  double beta = 0.1;
  int epochs = 500;
  int batch_size = 100;
  double learning_rate = 1e-3;
  double snr_min_db = 0.0;
  double snr_max_db = 20.0;
  int users = 0;   // training J; 0 means the largest J of the system grid
  int pilots = 0;  // n_p of the gmm-y training observations; 0 means the first grid entry
};

struct EvalSettings {
  std::vector<std::string> methods;  // empty means all
  int iterations = kDefaultIterations;
  bool include_timing = false;
  std::string report = "report.csv";
};

struct CliConfig {
  std::string preset = "full";
  SystemConfig system;
  GmmSettings gmm;
  GnnSettings gnn;
  EvalSettings eval;

  int training_users() const;
  int training_pilots() const;
};

std::vector<std::string> preset_names();
CliConfig preset_config(const std::string& name);

// Overlays a TOML document on `config`. Unknown sections or keys and wrongly typed
// values throw ConfigError naming `source` and the offending key.
void apply_toml(CliConfig& config, const std::string& text, const std::string& source);
void apply_toml_file(CliConfig& config, const std::string& path);

// TOML rendering of every key, accepted back by apply_toml.
std::string dump_toml(const CliConfig& config);

// Throws ConfigError. Also resolves method names.
void validate(const CliConfig& config);
std::vector<MethodSpec> resolve_methods(const CliConfig& config);

}  // namespace statprec::cli
