#pragma once

#include <iosfwd>
#include <string>

#include "cli_config.hpp"

namespace statprec::cli {

struct RunOptions {
  std::string out_dir = "out";
  bool dry_run = false;
  bool resume = false;  // fit-gmm: continue from the saved model
  bool smoke = false;   // train-gnn: 10 scenarios, 1 epoch
  FeedbackSource feedback = FeedbackSource::kGenie;
};

// Artifact names inside the output directory.
struct Paths {
  std::string dir;

  std::string gmm_data() const { return dir + "/gmm_data.bin"; }
  std::string train() const { return dir + "/train.bin"; }
  std::string val() const { return dir + "/val.bin"; }
  std::string test(int users) const { return dir + "/test_J" + std::to_string(users) + ".bin"; }
  std::string gmm_model() const { return dir + "/gmm.model"; }
  std::string em_log() const { return dir + "/gmm_em_log.csv"; }
  std::string gnn_model(FeedbackSource s) const {
    return dir + "/gnn_" + feedback_source_name(s) + ".model";
  }
  std::string gnn_log(FeedbackSource s) const {
    return dir + "/gnn_" + feedback_source_name(s) + "_log.csv";
  }
  std::string report(const std::string& name) const { return dir + "/" + name; }
};

// Each command prints a short summary to `out`. Runtime failures throw std::exception
// types other than ConfigError.
void cmd_gen_data(const CliConfig& config, const RunOptions& options, std::ostream& out);
void cmd_fit_gmm(const CliConfig& config, const RunOptions& options, std::ostream& out);
void cmd_train_gnn(const CliConfig& config, const RunOptions& options, std::ostream& out);
void cmd_evaluate(const CliConfig& config, const RunOptions& options, std::ostream& out);

}  // namespace statprec::cli
