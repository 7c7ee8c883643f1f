#include "commands.hpp"

#include <filesystem>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "statprec/hashing.hpp"
#include "statprec/io.hpp"

namespace statprec::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void scale_scenarios(std::vector<Scenario>& scenarios, double scale) {
  for (auto& s : scenarios)
    for (auto& u : s.users) {
      u.channel *= scale;
      u.genie_row *= scale * scale;
    }
}

void print_plan(std::ostream& out, const CliConfig& config, const std::vector<std::string>& reads,
                const std::vector<std::string>& writes) {
  out << "# dry run: nothing is written\n" << dump_toml(config);
  for (const auto& r : reads)
    out << "read  " << r << (fs::exists(r) ? "" : "  (missing)") << "\n";
  for (const auto& w : writes) out << "write " << w << "\n";
}

void require_file(const std::string& path, const std::string& hint) {
  if (!fs::exists(path)) throw std::runtime_error("missing " + path + " (" + hint + ")");
}

void check_geometry(const ArrayGeometry& found, const CliConfig& config, const std::string& path) {
  if (!(found == config.system.geometry))
    throw std::runtime_error(path + ": geometry " + format_geometry(found) +
                             " does not match the configured " +
                             format_geometry(config.system.geometry));
}

PilotMatrix training_pilots(const CliConfig& config) {
  return build_pilot_matrix(config.system.geometry, config.training_pilots(), config.system.rho,
                            config.system.pilot_selection);
}

}  // namespace

void cmd_gen_data(const CliConfig& config, const RunOptions& options, std::ostream& out) {
  const Paths p{options.out_dir};
  const SystemConfig& sys = config.system;
  const int train_users = config.training_users();
  std::vector<std::string> writes = {p.gmm_data(), p.train(), p.val()};
  for (int j : sys.users) writes.push_back(p.test(j));
  if (options.dry_run) {
    print_plan(out, config, {}, writes);
    return;
  }

  DatasetInfo info{sys.geometry, sys.channel, stream_seed(sys, SeedStream::kGmmData), 1.0};
  spdlog::info("drawing {} channels for the GMM", sys.m_gmm);
  auto data = generate_dataset(sys.geometry, sys.m_gmm, sys.channel, info.seed);
  info.normalization_scale = normalize_dataset(data);
  write_channel_dataset(p.gmm_data(), data, info);
  out << p.gmm_data() << ": M=" << sys.m_gmm << " geometry=" << format_geometry(sys.geometry)
      << " scale=" << std::setprecision(17) << info.normalization_scale << "\n";

  // Scenario sets share the GMM set's scale so that E||h||^2 = N holds throughout.
  auto write_set = [&](const std::string& path, std::vector<Scenario> set, std::uint64_t seed) {
    scale_scenarios(set, info.normalization_scale);
    DatasetInfo si = info;
    si.seed = seed;
    write_scenario_dataset(path, set, si);
    out << path << ": D=" << set.size() << " J=" << set.front().user_count() << "\n";
  };
  const auto train_seed = stream_seed(sys, SeedStream::kTrain);
  const auto val_seed = stream_seed(sys, SeedStream::kValidation);
  write_set(p.train(), generate_scenarios(sys.geometry, sys.d_train, train_users, sys.channel, train_seed),
            train_seed);
  write_set(p.val(), generate_scenarios(sys.geometry, sys.d_val, train_users, sys.channel, val_seed),
            val_seed);
  for (int j : sys.users)
    write_set(p.test(j), make_test_set(sys, j),
              derive_seed(stream_seed(sys, SeedStream::kTest), static_cast<std::uint64_t>(j)));
}

void cmd_fit_gmm(const CliConfig& config, const RunOptions& options, std::ostream& out) {
  const Paths p{options.out_dir};
  std::vector<std::string> reads = {p.gmm_data()};
  if (options.resume) reads.push_back(p.gmm_model());
  if (options.dry_run) {
    print_plan(out, config, reads, {p.gmm_model(), p.em_log()});
    return;
  }
  require_file(p.gmm_data(), "run gen-data first");
  DatasetInfo info;
  const auto data = read_channel_dataset(p.gmm_data(), &info);
  check_geometry(info.geometry, config, p.gmm_data());

  EmOptions em;
  em.max_iters = config.gmm.max_iters;
  em.tol = config.gmm.tol;
  em.floor_rel = config.gmm.floor_rel;
  em.update = config.gmm.update;
  em.on_iteration = [](int it, double ll) { spdlog::debug("EM iteration {}: {:.12g}", it, ll); };

  const int components = 1 << config.system.bits;
  EmResult result = [&] {
    if (!options.resume) {
      spdlog::info("fitting K={} components to {} channels", components, data.size());
      Rng rng(stream_seed(config.system, SeedStream::kGmmInit));
      return fit_em(data, components, SpectralDictionary(config.system.geometry), em, rng);
    }
    require_file(p.gmm_model(), "nothing to resume");
    GmmModel start = load_gmm(p.gmm_model());
    if (start.components() != components || !(start.dictionary().geometry() == config.system.geometry))
      throw std::runtime_error(p.gmm_model() + ": checkpoint does not match the configured K and geometry");
    spdlog::info("resuming EM from {}", p.gmm_model());
    return continue_em(data, start, em);
  }();

  if (options.resume && fs::exists(p.em_log())) {
    const auto previous = read_em_log(p.em_log());
    // Entry 0 of a resumed fit repeats the checkpoint's final value.
    const std::vector<double> fresh(result.log_likelihood.begin() + 1, result.log_likelihood.end());
    write_em_log(p.em_log(), fresh, static_cast<int>(previous.size()), true);
  } else {
    write_em_log(p.em_log(), result.log_likelihood);
  }
  save_gmm(p.gmm_model(), result.model);
  out << p.gmm_model() << ": K=" << components << " iterations=" << result.iterations
      << " converged=" << (result.converged ? "yes" : "no") << " log_likelihood="
      << std::setprecision(12) << result.log_likelihood.back()
      << " sha1=" << git_blob_sha1_file(p.gmm_model()) << "\n";
}

void cmd_train_gnn(const CliConfig& config, const RunOptions& options, std::ostream& out) {
  const Paths p{options.out_dir};
  const FeedbackSource source = options.feedback;
  std::vector<std::string> reads = {p.train(), p.val()};
  if (source != FeedbackSource::kGenie) reads.push_back(p.gmm_model());
  if (options.dry_run) {
    print_plan(out, config, reads, {p.gnn_model(source), p.gnn_log(source)});
    out << "feedback " << feedback_source_name(source) << (options.smoke ? " (smoke)" : "") << "\n";
    return;
  }
  require_file(p.train(), "run gen-data first");
  require_file(p.val(), "run gen-data first");
  DatasetInfo info;
  auto train_set = read_scenario_dataset(p.train(), &info);
  check_geometry(info.geometry, config, p.train());
  auto val_set = read_scenario_dataset(p.val(), &info);
  check_geometry(info.geometry, config, p.val());

  TrainConfig tc;
  tc.epochs = config.gnn.epochs;
  tc.batch_size = config.gnn.batch_size;
  tc.learning_rate = config.gnn.learning_rate;
  tc.snr_min_db = config.gnn.snr_min_db;
  tc.snr_max_db = config.gnn.snr_max_db;
  tc.rho = config.system.rho;
  tc.seed = stream_seed(config.system, SeedStream::kGnnTrain);
  if (options.smoke) {
    train_set.resize(std::min<std::size_t>(train_set.size(), 10));
    val_set.resize(std::min<std::size_t>(val_set.size(), 10));
    tc.epochs = 1;
  }
  tc.on_epoch = [](const TrainLogRow& row) {
    spdlog::debug("epoch {}: train {:.6f} val {:.6f}", row.epoch, row.train_rate, row.val_rate);
    if (row.epoch % 10 == 0) spdlog::info("epoch {}: val sum-rate {:.6f}", row.epoch, row.val_rate);
  };

  std::optional<GmmModel> gmm;
  if (source != FeedbackSource::kGenie) {
    require_file(p.gmm_model(), "run fit-gmm first");
    gmm = load_gmm(p.gmm_model());
    check_geometry(gmm->dictionary().geometry(), config, p.gmm_model());
  }
  const PilotMatrix pilots = training_pilots(config);
  const GmmModel* gmm_ptr = gmm ? &*gmm : nullptr;
  const PilotMatrix* pilot_ptr = source == FeedbackSource::kGmmObservation ? &pilots : nullptr;

  const GnnShape shape = GnnShape::make(config.system.geometry.antennas(), config.gnn.hidden_layers,
                                        config.gnn.width, config.gnn.beta);
  Rng init(stream_seed(config.system, SeedStream::kGnnInit));
  spdlog::info("training {} GNN on {} scenarios for {} epochs", feedback_source_name(source),
               train_set.size(), tc.epochs);
  TrainResult result;
  try {
    result = train(glorot_init(shape, init), make_training_set(train_set, source, gmm_ptr, pilot_ptr),
                   make_training_set(val_set, source, gmm_ptr, pilot_ptr), tc);
  } catch (const TrainingDiverged& e) {
    write_training_log(p.gnn_log(source), e.log());
    throw;
  }
  save_gnn(p.gnn_model(source), result.model);
  write_training_log(p.gnn_log(source), result.log);
  out << p.gnn_model(source) << ": feedback=" << feedback_source_name(source)
      << " best_epoch=" << result.best_epoch << " val_rate=" << std::setprecision(8)
      << result.best_val_rate << " initial_val_rate=" << result.initial_val_rate
      << " sha1=" << git_blob_sha1_file(p.gnn_model(source)) << "\n";
}

void cmd_evaluate(const CliConfig& config, const RunOptions& options, std::ostream& out) {
  const Paths p{options.out_dir};
  const auto methods = resolve_methods(config);
  bool need_gmm = false;
  std::set<FeedbackSource> networks;
  for (const auto& m : methods) {
    need_gmm = need_gmm || m.uses_gmm();
    if (m.kind == MethodKind::kGnnGenie) networks.insert(FeedbackSource::kGenie);
    if (m.kind == MethodKind::kGnnGmmH) networks.insert(FeedbackSource::kGmmChannel);
    if (m.kind == MethodKind::kGnnGmmY) networks.insert(FeedbackSource::kGmmObservation);
  }
  std::vector<std::string> reads;
  if (need_gmm) reads.push_back(p.gmm_model());
  for (auto s : networks) reads.push_back(p.gnn_model(s));
  for (int j : config.system.users) reads.push_back(p.test(j));
  const std::string report_path = p.report(config.eval.report);
  if (options.dry_run) {
    print_plan(out, config, reads, {report_path, report_path + ".json"});
    for (const auto& m : methods) out << "method " << m.name() << "\n";
    return;
  }
  for (const auto& r : reads) require_file(r, "produce it with gen-data, fit-gmm or train-gnn");

  std::optional<GmmModel> gmm;
  std::map<FeedbackSource, GnnModel> nets;
  ModelSet models;
  json model_hashes = json::object();
  if (need_gmm) {
    gmm = load_gmm(p.gmm_model());
    models.gmm = &*gmm;
    model_hashes[fs::path(p.gmm_model()).filename().string()] = git_blob_sha1_file(p.gmm_model());
  }
  for (auto s : networks) {
    nets.emplace(s, load_gnn(p.gnn_model(s)));
    model_hashes[fs::path(p.gnn_model(s)).filename().string()] = git_blob_sha1_file(p.gnn_model(s));
  }
  if (nets.count(FeedbackSource::kGenie)) models.gnn_genie = &nets.at(FeedbackSource::kGenie);
  if (nets.count(FeedbackSource::kGmmChannel)) models.gnn_gmm_h = &nets.at(FeedbackSource::kGmmChannel);
  if (nets.count(FeedbackSource::kGmmObservation))
    models.gnn_gmm_y = &nets.at(FeedbackSource::kGmmObservation);

  std::map<int, std::vector<Scenario>> test_sets;
  json dataset_hashes = json::object();
  for (int j : config.system.users) {
    DatasetInfo info;
    auto set = read_scenario_dataset(p.test(j), &info);
    check_geometry(info.geometry, config, p.test(j));
    if (set.size() != config.system.d_test || set.front().user_count() != j)
      throw std::runtime_error(p.test(j) + ": expected D=" + std::to_string(config.system.d_test) +
                               " scenarios with J=" + std::to_string(j) + "; rerun gen-data");
    dataset_hashes[fs::path(p.test(j)).filename().string()] = git_blob_sha1_file(p.test(j));
    test_sets.emplace(j, std::move(set));
  }

  spdlog::info("evaluating {} methods", methods.size());
  EvalReport report = evaluate(methods, config.system, models, std::move(test_sets));
  json provenance = json::parse(report.provenance);
  provenance["preset"] = config.preset;
  provenance["model_hashes"] = model_hashes;
  provenance["dataset_hashes"] = dataset_hashes;
  report.provenance = provenance.dump();
  emit_report(report, report_path, {.include_timing = config.eval.include_timing});

  out << std::left << std::setw(22) << "method" << std::setw(5) << "J" << std::setw(6) << "n_p"
      << std::setw(9) << "snr_db" << "mean_rate  stderr\n";
  for (const auto& r : report.rows)
    out << std::left << std::setw(22) << r.method << std::setw(5) << r.users << std::setw(6)
        << r.pilots << std::setw(9) << r.snr_db << std::fixed << std::setprecision(4)
        << r.mean_rate << "  " << r.stderr_rate << std::defaultfloat << "\n";
  out << "wrote " << report_path << "\n";
}

}  // namespace statprec::cli
