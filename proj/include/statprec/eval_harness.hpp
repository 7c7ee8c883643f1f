#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "statprec/baselines.hpp"
#include "statprec/channels.hpp"
#include "statprec/gmm_prior.hpp"
#include "statprec/gnn_precoder.hpp"
#include "statprec/pilots.hpp"

namespace statprec {

enum class MethodKind {
  kGnnGenie,
  kSwmmseGenie,
  kGnnGmmH,
  kGnnGmmY,
  kSwmmseGmmH,
  kSwmmseGmmY,
  kIwmmseDftLs,
  kIwmmseDftGmmEst,
};

inline constexpr int kDefaultIterations = 300;
inline constexpr const char* kToolVersion = "0.1.0";

// A pipeline plus its iteration cap. Names are "SWMMSE-GMM-y" or "SWMMSE-GMM-y@100".
struct MethodSpec {
  MethodKind kind = MethodKind::kGnnGenie;
  int max_iters = kDefaultIterations;

  static MethodSpec parse(const std::string& name);
  std::string name() const;

  bool uses_gnn() const;
  bool uses_gmm() const;
  bool uses_observation() const;
  bool iterative() const;
  bool operator==(const MethodSpec&) const = default;
};

// Canonical base names, in legend order.
std::vector<std::string> method_names();

struct SystemConfig {
  ArrayGeometry geometry = ArrayGeometry::ula(64);
  ChannelModel channel;
  double rho = 1.0;
  std::vector<double> snr_db = {10.0};
  std::vector<int> pilots = {16};
  int bits = 6;
  std::vector<int> users = {16};
  std::size_t d_train = 2400;
  std::size_t d_val = 300;
  std::size_t d_test = 500;
  std::size_t m_gmm = 100000;
  std::uint64_t seed = 1;
  PilotSelection pilot_selection = PilotSelection::kLowestIndex;
  double iwmmse_tol = 1e-9;

  void validate() const;
};

// JSON echo of every field, used for provenance and the config hash.
std::string describe_config(const SystemConfig& config);

// Seed streams derived from SystemConfig::seed.
enum class SeedStream : std::uint64_t {
  kGmmData = 1,
  kTrain = 2,
  kValidation = 3,
  kTest = 4,
  kGmmInit = 5,
  kGnnInit = 6,
  kGnnTrain = 7,
  kEvaluation = 8,
};

std::uint64_t stream_seed(const SystemConfig& config, SeedStream stream);

// Test scenarios for a user count J; the seed depends on J so each J has its own set.
std::vector<Scenario> make_test_set(const SystemConfig& config, int users);

// Models are borrowed; genie- and feedback-trained networks are distinct artifacts.
struct ModelSet {
  const GmmModel* gmm = nullptr;
  const GnnModel* gnn_genie = nullptr;
  const GnnModel* gnn_gmm_h = nullptr;
  const GnnModel* gnn_gmm_y = nullptr;

  // Throws std::invalid_argument naming the first missing model of `method`.
  void require(const MethodSpec& method) const;
};

// Everything that is fixed at one (n_p, SNR) grid point, built once and shared.
class GridPoint {
 public:
  GridPoint(const SystemConfig& config, const ModelSet& models, int pilots, double snr_db);

  const SystemConfig& config() const { return *config_; }
  const ModelSet& models() const { return *models_; }
  const PilotMatrix& pilot_matrix() const { return pilots_; }
  const Codebook& codebook() const { return codebook_; }
  double snr_db() const { return snr_db_; }
  double noise_var() const { return noise_var_; }
  // Null when no GMM is loaded.
  const ObservationCache* cache() const { return cache_ ? &*cache_ : nullptr; }

 private:
  const SystemConfig* config_;
  const ModelSet* models_;
  PilotMatrix pilots_;
  Codebook codebook_;
  double snr_db_;
  double noise_var_;
  std::optional<ObservationCache> cache_;
};

struct PipelineResult {
  CMat precoders;
  double rate = 0.0;
};

// Labels of the executed steps, in order.
using PipelineTrace = std::vector<std::string>;

// Runs one method on one scenario. Pilot noise and SWMMSE sample draws depend only on
// `scenario_seed` and the user index, so every method sees the same realisations.
PipelineResult run_pipeline(const MethodSpec& method, const Scenario& scenario,
                            const GridPoint& point, std::uint64_t scenario_seed,
                            PipelineTrace* trace = nullptr);

struct ReportRow {
  std::string method;
  int users = 0;
  double snr_db = 0.0;
  int pilots = 0;
  int bits = 0;
  double mean_rate = 0.0;
  double stderr_rate = 0.0;
  double mean_runtime_ms = 0.0;
  std::string scenario_hash;

  bool operator==(const ReportRow&) const = default;
};

struct EvalReport {
  std::vector<ReportRow> rows;
  std::string provenance;  // JSON object text
  // Per-scenario rates of each row, same order as `rows` (not written to disk).
  std::vector<std::vector<double>> per_scenario;
};

// Evaluates every method at every (J, n_p, SNR) of the config. `test_sets` maps J to its
// scenarios; missing entries are generated with make_test_set.
EvalReport evaluate(const std::vector<MethodSpec>& methods, const SystemConfig& config,
                    const ModelSet& models, std::map<int, std::vector<Scenario>> test_sets = {});

// Per-scenario rates of one method at one grid point, in scenario order.
std::vector<double> evaluate_point(const MethodSpec& method, const std::vector<Scenario>& test_set,
                                   const GridPoint& point, std::uint64_t seed,
                                   std::vector<double>* runtimes_ms = nullptr);

struct EmitOptions {
  bool include_timing = false;  // otherwise the runtime column is written as 0
};

inline constexpr const char* kReportHeader =
    "method,J,snr_db,n_p,B,mean_rate_bits,stderr,mean_runtime_ms,scenario_hash";

// Writes the CSV at `path` and the provenance JSON at `path + ".json"`.
void emit_report(const EvalReport& report, const std::string& path, const EmitOptions& options = {});
std::vector<ReportRow> load_report(const std::string& path);

// ---- GNN training sets ----

enum class FeedbackSource { kGenie, kGmmChannel, kGmmObservation };

FeedbackSource parse_feedback_source(const std::string& text);  // genie, gmm-h, gmm-y
std::string feedback_source_name(FeedbackSource source);

// Channels of each scenario plus an input provider for the chosen feedback source.
// gmm-y draws a fresh pilot observation at the presented noise level.
TrainingSet make_training_set(const std::vector<Scenario>& scenarios, FeedbackSource source,
                              const GmmModel* gmm, const PilotMatrix* pilots);

}  // namespace statprec
