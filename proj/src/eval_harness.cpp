#include "statprec/eval_harness.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "statprec/hashing.hpp"
#include "statprec/io.hpp"
#include "statprec/sum_rate.hpp"

namespace statprec {

using nlohmann::json;

namespace {

struct MethodEntry {
  MethodKind kind;
  const char* name;
};

constexpr MethodEntry kMethods[] = {
    {MethodKind::kGnnGenie, "GNN-genie"},
    {MethodKind::kSwmmseGenie, "SWMMSE-genie"},
    {MethodKind::kGnnGmmH, "GNN-GMM-h"},
    {MethodKind::kGnnGmmY, "GNN-GMM-y"},
    {MethodKind::kSwmmseGmmH, "SWMMSE-GMM-h"},
    {MethodKind::kSwmmseGmmY, "SWMMSE-GMM-y"},
    {MethodKind::kIwmmseDftLs, "IWMMSE-DFT-LS"},
    {MethodKind::kIwmmseDftGmmEst, "IWMMSE-DFT-GMMest"},
};

// Per-user RNG streams below a scenario seed.
constexpr std::uint64_t kNoiseStream = 1;
constexpr std::uint64_t kSampleStream = 2;

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

const char* selection_name(PilotSelection s) {
  return s == PilotSelection::kEquispaced ? "equispaced" : "lowest";
}

std::vector<CVec> rows_of(const GmmModel& gmm, const std::vector<int>& indices) {
  std::vector<CVec> rows;
  rows.reserve(indices.size());
  for (int k : indices) rows.push_back(gmm.covariance_row(k));
  return rows;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stderr_of(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

}  // namespace

MethodSpec MethodSpec::parse(const std::string& text) {
  std::string base = text;
  MethodSpec spec;
  if (const auto at = text.find('@'); at != std::string::npos) {
    base = text.substr(0, at);
    const std::string cap = text.substr(at + 1);
    int value = 0;
    const auto res = std::from_chars(cap.data(), cap.data() + cap.size(), value);
    if (res.ec != std::errc() || res.ptr != cap.data() + cap.size() || value < 1)
      throw std::invalid_argument("method '" + text + "': iteration cap must be a positive integer");
    spec.max_iters = value;
  }
  for (const auto& m : kMethods)
    if (base == m.name) {
      spec.kind = m.kind;
      if (spec.max_iters != kDefaultIterations && !spec.iterative())
        throw std::invalid_argument("method '" + text + "' takes no iteration cap");
      return spec;
    }
  std::string valid;
  for (const auto& m : kMethods) valid += std::string(valid.empty() ? "" : ", ") + m.name;
  throw std::invalid_argument("unknown method '" + base + "'; valid methods: " + valid);
}

std::string MethodSpec::name() const {
  for (const auto& m : kMethods)
    if (m.kind == kind) {
      std::string out = m.name;
      if (iterative() && max_iters != kDefaultIterations) out += "@" + std::to_string(max_iters);
      return out;
    }
  throw std::logic_error("MethodSpec: unknown kind");
}

bool MethodSpec::uses_gnn() const {
  return kind == MethodKind::kGnnGenie || kind == MethodKind::kGnnGmmH ||
         kind == MethodKind::kGnnGmmY;
}

bool MethodSpec::uses_gmm() const {
  return kind == MethodKind::kGnnGmmH || kind == MethodKind::kGnnGmmY ||
         kind == MethodKind::kSwmmseGmmH || kind == MethodKind::kSwmmseGmmY ||
         kind == MethodKind::kIwmmseDftGmmEst;
}

bool MethodSpec::uses_observation() const {
  return kind == MethodKind::kGnnGmmY || kind == MethodKind::kSwmmseGmmY ||
         kind == MethodKind::kIwmmseDftLs || kind == MethodKind::kIwmmseDftGmmEst;
}

bool MethodSpec::iterative() const { return !uses_gnn(); }

std::vector<std::string> method_names() {
  std::vector<std::string> out;
  for (const auto& m : kMethods) out.emplace_back(m.name);
  return out;
}

void SystemConfig::validate() const {
  geometry.validate();
  if (!(rho > 0.0) || !std::isfinite(rho)) throw std::invalid_argument("rho must be positive");
  if (snr_db.empty()) throw std::invalid_argument("SNR grid is empty");
  for (double s : snr_db)
    if (!std::isfinite(s)) throw std::invalid_argument("SNR grid must be finite");
  if (pilots.empty()) throw std::invalid_argument("pilot list is empty");
  for (int p : pilots)
    if (p < 1 || p > geometry.antennas())
      throw std::invalid_argument("pilot count " + std::to_string(p) + " outside [1, N]");
  if (bits < 0 || bits > 20) throw std::invalid_argument("B must be in [0, 20]");
  if (users.empty()) throw std::invalid_argument("user list is empty");
  for (int j : users)
    if (j < 1) throw std::invalid_argument("user counts must be >= 1");
  if (d_train < 1 || d_val < 1 || d_test < 1 || m_gmm < 1)
    throw std::invalid_argument("dataset sizes must be >= 1");
  if (!(channel.angular_spread > 0.0)) throw std::invalid_argument("angular spread must be positive");
  if (channel.grid_size < kMinGridSize)
    throw std::invalid_argument("grid size must be >= " + std::to_string(kMinGridSize));
  if (!(iwmmse_tol >= 0.0)) throw std::invalid_argument("IWMMSE tolerance must be >= 0");
  if (pilot_selection == PilotSelection::kEquispaced && geometry.kind != ArrayKind::kUla)
    throw std::invalid_argument("equispaced pilot selection is ULA-only");
}

std::string describe_config(const SystemConfig& c) {
  const json j = {
      {"geometry", format_geometry(c.geometry)},
      {"rho", c.rho},
      {"snr_db", c.snr_db},
      {"pilots", c.pilots},
      {"bits", c.bits},
      {"users", c.users},
      {"d_train", c.d_train},
      {"d_val", c.d_val},
      {"d_test", c.d_test},
      {"m_gmm", c.m_gmm},
      {"seed", c.seed},
      {"pilot_selection", selection_name(c.pilot_selection)},
      {"iwmmse_tol", c.iwmmse_tol},
      {"channel",
       {{"angular_spread_rad", c.channel.angular_spread},
        {"grid_size", c.channel.grid_size},
        {"azimuth_range_rad", c.channel.azimuth_range},
        {"elevation_range_rad", c.channel.elevation_range}}}};
  return j.dump();
}

std::uint64_t stream_seed(const SystemConfig& config, SeedStream stream) {
  return derive_seed(config.seed, static_cast<std::uint64_t>(stream));
}

std::vector<Scenario> make_test_set(const SystemConfig& config, int users) {
  return generate_scenarios(config.geometry, config.d_test, users, config.channel,
                            derive_seed(stream_seed(config, SeedStream::kTest),
                                        static_cast<std::uint64_t>(users)));
}

void ModelSet::require(const MethodSpec& method) const {
  const std::string name = method.name();
  if (method.uses_gmm() && !gmm) throw std::invalid_argument(name + ": no GMM loaded");
  if (method.kind == MethodKind::kGnnGenie && !gnn_genie)
    throw std::invalid_argument(name + ": no genie-trained GNN loaded");
  if (method.kind == MethodKind::kGnnGmmH && !gnn_gmm_h)
    throw std::invalid_argument(name + ": no GNN trained on GMM-h feedback loaded");
  if (method.kind == MethodKind::kGnnGmmY && !gnn_gmm_y)
    throw std::invalid_argument(name + ": no GNN trained on GMM-y feedback loaded");
}

GridPoint::GridPoint(const SystemConfig& config, const ModelSet& models, int pilots, double snr_db)
    : config_(&config),
      models_(&models),
      pilots_(build_pilot_matrix(config.geometry, pilots, config.rho, config.pilot_selection)),
      codebook_(build_dft_codebook(config.geometry, config.bits)),
      snr_db_(snr_db),
      noise_var_(db_to_noise_var(snr_db)) {
  if (models.gmm) {
    if (models.gmm->dictionary().geometry() != config.geometry)
      throw std::invalid_argument("GMM geometry does not match the system geometry");
    cache_.emplace(*models.gmm, pilots_, noise_var_);
  }
  for (const GnnModel* g : {models.gnn_genie, models.gnn_gmm_h, models.gnn_gmm_y})
    if (g && g->shape().antennas != config.geometry.antennas())
      throw std::invalid_argument("GNN antenna count does not match the system geometry");
}

PipelineResult run_pipeline(const MethodSpec& method, const Scenario& scenario,
                            const GridPoint& point, std::uint64_t scenario_seed,
                            PipelineTrace* trace) {
  const ModelSet& models = point.models();
  models.require(method);
  const SystemConfig& config = point.config();
  const int n = config.geometry.antennas();
  const int users = scenario.user_count();
  if (users < 1) throw std::invalid_argument("run_pipeline: scenario has no users");
  for (const auto& u : scenario.users)
    if (u.channel.size() != n || u.genie_row.size() != n)
      throw std::invalid_argument("run_pipeline: scenario dimension does not match N = " +
                                  std::to_string(n));
  auto step = [trace](const char* label) {
    if (trace) trace->emplace_back(label);
  };
  const double noise_var = point.noise_var();
  const double rho = config.rho;
  const std::vector<CVec> channels = scenario.channels();

  std::vector<CVec> observations;
  if (method.uses_observation()) {
    for (int j = 0; j < users; ++j) {
      Rng rng(derive_seed(scenario_seed, kNoiseStream, static_cast<std::uint64_t>(j)));
      observations.push_back(observe(point.pilot_matrix(), channels[j], noise_var, rng).y);
    }
    step("observe");
  }

  std::vector<int> feedback;
  if (method.kind == MethodKind::kGnnGmmH || method.kind == MethodKind::kSwmmseGmmH) {
    for (const auto& h : channels) feedback.push_back(feedback_index_csi(*models.gmm, h));
    step("infer_feedback_index");
    step("send_feedback");
  } else if (method.kind == MethodKind::kGnnGmmY || method.kind == MethodKind::kSwmmseGmmY) {
    for (const auto& y : observations) feedback.push_back(feedback_index_obs(*point.cache(), y));
    step("infer_feedback_index");
    step("send_feedback");
  }

  CMat v;
  switch (method.kind) {
    case MethodKind::kGnnGenie:
    case MethodKind::kGnnGmmH:
    case MethodKind::kGnnGmmY: {
      const GnnModel& gnn = method.kind == MethodKind::kGnnGenie ? *models.gnn_genie
                            : method.kind == MethodKind::kGnnGmmH ? *models.gnn_gmm_h
                                                                  : *models.gnn_gmm_y;
      std::vector<CVec> rows;
      if (method.kind == MethodKind::kGnnGenie) {
        rows = scenario.genie_rows();
      } else {
        rows = rows_of(*models.gmm, feedback);
      }
      step("extract_first_row");
      RMat features = extract_features(gnn, rows);
      step("extract_features");
      v = forward_from_features(gnn, std::move(features), rho);
      step("gnn_forward");
      break;
    }
    case MethodKind::kSwmmseGenie:
    case MethodKind::kSwmmseGmmH:
    case MethodKind::kSwmmseGmmY: {
      std::vector<ChannelSampler> samplers;
      for (int j = 0; j < users; ++j) {
        CMat c = method.kind == MethodKind::kSwmmseGenie
                     ? complete_from_first_row(config.geometry, scenario.users[j].genie_row)
                     : models.gmm->covariance(feedback[static_cast<std::size_t>(j)]);
        samplers.emplace_back(std::move(c),
                              derive_seed(scenario_seed, kSampleStream, static_cast<std::uint64_t>(j)));
      }
      step("build_covariances");
      v = swmmse(samplers, rho, noise_var, method.max_iters);
      step("swmmse");
      break;
    }
    case MethodKind::kIwmmseDftLs:
    case MethodKind::kIwmmseDftGmmEst: {
      std::vector<CVec> quantized;
      for (const auto& y : observations) {
        const CVec estimate = method.kind == MethodKind::kIwmmseDftLs
                                  ? ls_estimate(point.pilot_matrix(), y)
                                  : gmm_channel_estimate(*point.cache(), y);
        const int k = dft_feedback(estimate, point.codebook());
        quantized.push_back(point.codebook().words.col(k));
      }
      step("estimate_channel");
      step("send_feedback");
      v = iwmmse(quantized, rho, noise_var, method.max_iters, config.iwmmse_tol).precoders;
      step("iwmmse");
      break;
    }
  }
  const double rate = sum_rate(channels, v, noise_var);
  step("sum_rate");
  return {std::move(v), rate};
}

std::vector<double> evaluate_point(const MethodSpec& method, const std::vector<Scenario>& test_set,
                                   const GridPoint& point, std::uint64_t seed,
                                   std::vector<double>* runtimes_ms) {
  if (test_set.empty()) throw std::invalid_argument("evaluate: test set is empty");
  point.models().require(method);
  const auto count = static_cast<std::int64_t>(test_set.size());
  std::vector<double> rates(test_set.size()), times(test_set.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t d = 0; d < count; ++d) {
    try {
      const auto start = std::chrono::steady_clock::now();
      const auto result = run_pipeline(method, test_set[static_cast<std::size_t>(d)], point,
                                       derive_seed(seed, static_cast<std::uint64_t>(d)));
      const auto stop = std::chrono::steady_clock::now();
      rates[static_cast<std::size_t>(d)] = result.rate;
      times[static_cast<std::size_t>(d)] =
          std::chrono::duration<double, std::milli>(stop - start).count();
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  if (runtimes_ms) *runtimes_ms = std::move(times);
  return rates;
}

EvalReport evaluate(const std::vector<MethodSpec>& methods, const SystemConfig& config,
                    const ModelSet& models, std::map<int, std::vector<Scenario>> test_sets) {
  config.validate();
  for (const auto& m : methods) models.require(m);
  EvalReport report;
  json hashes = json::object();
  for (int users : config.users) {
    auto it = test_sets.find(users);
    if (it == test_sets.end()) it = test_sets.emplace(users, make_test_set(config, users)).first;
    const auto& test_set = it->second;
    if (test_set.empty()) throw std::invalid_argument("evaluate: test set is empty");
    const std::string hash = scenario_hash(test_set);
    hashes[std::to_string(users)] = hash;
    const std::uint64_t seed =
        derive_seed(stream_seed(config, SeedStream::kEvaluation), static_cast<std::uint64_t>(users));
    for (int pilots : config.pilots)
      for (double snr : config.snr_db) {
        const GridPoint point(config, models, pilots, snr);
        for (const auto& method : methods) {
          std::vector<double> times;
          auto rates = evaluate_point(method, test_set, point, seed, &times);
          ReportRow row;
          row.method = method.name();
          row.users = users;
          row.snr_db = snr;
          row.pilots = pilots;
          row.bits = config.bits;
          row.mean_rate = mean_of(rates);
          row.stderr_rate = stderr_of(rates, row.mean_rate);
          row.mean_runtime_ms = mean_of(times);
          row.scenario_hash = hash;
          if (!std::isfinite(row.mean_rate) || row.mean_rate < 0.0)
            throw std::runtime_error(row.method + ": invalid mean sum-rate");
          report.rows.push_back(std::move(row));
          report.per_scenario.push_back(std::move(rates));
        }
      }
  }
  json methods_json = json::array();
  for (const auto& m : methods) methods_json.push_back(m.name());
  const std::string config_text = describe_config(config);
  const json provenance = {{"tool", "statprec"},
                           {"tool_version", kToolVersion},
                           {"config", json::parse(config_text)},
                           {"config_hash", sha1_hex(config_text)},
                           {"methods", methods_json},
                           {"seeds",
                            {{"base", config.seed},
                             {"test", stream_seed(config, SeedStream::kTest)},
                             {"evaluation", stream_seed(config, SeedStream::kEvaluation)}}},
                           {"scenario_hashes", hashes}};
  report.provenance = provenance.dump();
  return report;
}

void emit_report(const EvalReport& report, const std::string& path, const EmitOptions& options) {
  std::string csv = std::string(kReportHeader) + "\n";
  for (const auto& r : report.rows) {
    csv += r.method + "," + std::to_string(r.users) + "," + format_number(r.snr_db) + "," +
           std::to_string(r.pilots) + "," + std::to_string(r.bits) + "," +
           format_number(r.mean_rate) + "," + format_number(r.stderr_rate) + "," +
           format_number(options.include_timing ? r.mean_runtime_ms : 0.0) + "," +
           r.scenario_hash + "\n";
  }
  json provenance = report.provenance.empty() ? json::object() : json::parse(report.provenance);
  provenance["runtime_column"] = options.include_timing ? "measured" : "zeroed";
  write_text_file(path, csv);
  write_text_file(path + ".json", provenance.dump(2) + "\n");
}

std::vector<ReportRow> load_report(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader)
    throw std::runtime_error("'" + path + "': unexpected report header");
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> c;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) c.push_back(cell);
    if (c.size() != 9) throw std::runtime_error("'" + path + "': malformed report row");
    ReportRow r;
    r.method = c[0];
    r.users = std::stoi(c[1]);
    r.snr_db = std::stod(c[2]);
    r.pilots = std::stoi(c[3]);
    r.bits = std::stoi(c[4]);
    r.mean_rate = std::stod(c[5]);
    r.stderr_rate = std::stod(c[6]);
    r.mean_runtime_ms = std::stod(c[7]);
    r.scenario_hash = c[8];
    rows.push_back(std::move(r));
  }
  return rows;
}

FeedbackSource parse_feedback_source(const std::string& text) {
  if (text == "genie") return FeedbackSource::kGenie;
  if (text == "gmm-h") return FeedbackSource::kGmmChannel;
  if (text == "gmm-y") return FeedbackSource::kGmmObservation;
  throw std::invalid_argument("unknown training mode '" + text + "' (genie, gmm-h, gmm-y)");
}

std::string feedback_source_name(FeedbackSource source) {
  switch (source) {
    case FeedbackSource::kGenie: return "genie";
    case FeedbackSource::kGmmChannel: return "gmm-h";
    case FeedbackSource::kGmmObservation: return "gmm-y";
  }
  return "";
}

TrainingSet make_training_set(const std::vector<Scenario>& scenarios, FeedbackSource source,
                              const GmmModel* gmm, const PilotMatrix* pilots) {
  if (scenarios.empty()) throw std::invalid_argument("training set: no scenarios");
  if (source != FeedbackSource::kGenie && !gmm)
    throw std::invalid_argument("training set: GMM feedback needs a GMM");
  if (source == FeedbackSource::kGmmObservation && !pilots)
    throw std::invalid_argument("training set: gmm-y feedback needs a pilot matrix");

  TrainingSet set;
  for (const auto& s : scenarios) set.channels.push_back(s.channels());
  auto shared = std::make_shared<const std::vector<Scenario>>(scenarios);

  switch (source) {
    case FeedbackSource::kGenie:
      set.inputs = [shared](std::size_t d, double, Rng&) { return (*shared)[d].genie_rows(); };
      break;
    case FeedbackSource::kGmmChannel: {
      // Feedback does not depend on the noise level, so it is computed once.
      auto rows = std::make_shared<std::vector<std::vector<CVec>>>();
      for (const auto& s : scenarios) {
        std::vector<int> idx;
        for (const auto& u : s.users) idx.push_back(feedback_index_csi(*gmm, u.channel));
        rows->push_back(rows_of(*gmm, idx));
      }
      set.inputs = [rows](std::size_t d, double, Rng&) { return (*rows)[d]; };
      break;
    }
    case FeedbackSource::kGmmObservation: {
      auto projected = project_model(*gmm, *pilots);
      const PilotMatrix p = *pilots;
      set.inputs = [shared, projected, gmm, p](std::size_t d, double noise_var, Rng& rng) {
        const ObservationCache cache(*gmm, projected, noise_var);
        std::vector<int> idx;
        for (const auto& u : (*shared)[d].users)
          idx.push_back(cache.feedback_index(observe(p, u.channel, noise_var, rng).y));
        return rows_of(*gmm, idx);
      };
      break;
    }
  }
  return set;
}

}  // namespace statprec
