#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "statprec/channels.hpp"
#include "statprec/gmm_prior.hpp"
#include "statprec/gnn_precoder.hpp"

namespace statprec {

inline constexpr int kFormatVersion = 1;

// Binary files hold little-endian 8-byte floats, complex values as (re, im) pairs.
// Every dataset `path` has a JSON sidecar at `path + ".json"`.

struct DatasetInfo {
  ArrayGeometry geometry;
  ChannelModel channel_model;
  std::uint64_t seed = 0;
  double normalization_scale = 1.0;
};

void write_channel_dataset(const std::string& path, const std::vector<CVec>& channels,
                           const DatasetInfo& info);
std::vector<CVec> read_channel_dataset(const std::string& path, DatasetInfo* info = nullptr);

// Stores the channels plus each user's cluster parameters, from which the genie
// covariances are rebuilt on load.
void write_scenario_dataset(const std::string& path, const std::vector<Scenario>& scenarios,
                            const DatasetInfo& info);
std::vector<Scenario> read_scenario_dataset(const std::string& path, DatasetInfo* info = nullptr);

// One JSON header line, then weights (K) and spectra (L x K, column-major).
void save_gmm(const std::string& path, const GmmModel& model);
GmmModel load_gmm(const std::string& path);

// One JSON header line, then the flat parameter vector in GnnModel order.
void save_gnn(const std::string& path, const GnnModel& model);
GnnModel load_gnn(const std::string& path);

void write_training_log(const std::string& path, const std::vector<TrainLogRow>& log);
std::vector<TrainLogRow> read_training_log(const std::string& path);

// EM log CSV: iteration,log_likelihood.
void write_em_log(const std::string& path, const std::vector<double>& log_likelihood,
                  int first_iteration = 0, bool append = false);
std::vector<double> read_em_log(const std::string& path);

// Writes `content` to `path` through a temporary file and rename.
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace statprec
