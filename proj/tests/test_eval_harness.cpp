#include <gtest/gtest.h>

#include <filesystem>

#include <omp.h>

#include "statprec/eval_harness.hpp"
#include "statprec/hashing.hpp"
#include "statprec/io.hpp"
#include "statprec/sum_rate.hpp"
#include "test_util.hpp"

namespace statprec {
namespace {

namespace fs = std::filesystem;

struct Bench {
  SystemConfig config;
  GmmModel gmm;
  GnnModel genie, gmm_h, gmm_y;
  ModelSet models;

  static GmmModel fit(const SystemConfig& c) {
    const auto data = generate_dataset(c.geometry, 600, c.channel, 1);
    EmOptions opt;
    opt.max_iters = 8;
    Rng rng(2);
    return fit_em(data, 1 << c.bits, SpectralDictionary(c.geometry), opt, rng).model;
  }
  static GnnModel net(std::uint64_t seed) {
    Rng rng(seed);
    return glorot_init(GnnShape::make(8, 2, 8), rng);
  }

  Bench() : config(make_config()), gmm(fit(config)), genie(net(3)), gmm_h(net(4)), gmm_y(net(5)) {
    models = {&gmm, &genie, &gmm_h, &gmm_y};
  }
  static SystemConfig make_config() {
    SystemConfig c;
    c.geometry = ArrayGeometry::ula(8);
    c.bits = 2;
    c.pilots = {4};
    c.snr_db = {10.0};
    c.users = {3};
    c.d_test = 6;
    return c;
  }
};

std::vector<MethodSpec> all_methods(int iters = 20) {
  std::vector<MethodSpec> out;
  for (const auto& n : method_names()) {
    MethodSpec m = MethodSpec::parse(n);
    if (m.iterative()) m.max_iters = iters;
    out.push_back(m);
  }
  return out;
}

TEST(MethodSpec, ParseAndName) {
  EXPECT_EQ(method_names().size(), 8u);
  for (const auto& n : method_names()) EXPECT_EQ(MethodSpec::parse(n).name(), n);
  const MethodSpec m = MethodSpec::parse("SWMMSE-GMM-y@100");
  EXPECT_EQ(m.kind, MethodKind::kSwmmseGmmY);
  EXPECT_EQ(m.max_iters, 100);
  EXPECT_EQ(m.name(), "SWMMSE-GMM-y@100");
  EXPECT_EQ(MethodSpec::parse("IWMMSE-DFT-LS@300").name(), "IWMMSE-DFT-LS");
  try {
    MethodSpec::parse("GNN-magic");
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("IWMMSE-DFT-GMMest"), std::string::npos);
  }
  EXPECT_THROW(MethodSpec::parse("GNN-genie@5"), std::invalid_argument);
  EXPECT_THROW(MethodSpec::parse("SWMMSE-genie@0"), std::invalid_argument);
  EXPECT_THROW(MethodSpec::parse("SWMMSE-genie@x"), std::invalid_argument);
}

TEST(SystemConfig, Validates) {
  SystemConfig c;
  EXPECT_NO_THROW(c.validate());
  c.rho = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = SystemConfig{};
  c.snr_db = {std::numeric_limits<double>::infinity()};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = SystemConfig{};
  c.pilots = {65};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = SystemConfig{};
  c.d_test = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = SystemConfig{};
  c.users = {};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_EQ(db_to_noise_var(10.0), 0.1);
}

TEST(RunPipeline, FollowsFeedbackChainOrder) {
  Bench s;
  const auto test_set = make_test_set(s.config, 3);
  const GridPoint point(s.config, s.models, 4, 10.0);
  PipelineTrace trace;
  run_pipeline(MethodSpec::parse("GNN-GMM-y"), test_set[0], point, 1, &trace);
  EXPECT_EQ(trace, (PipelineTrace{"observe", "infer_feedback_index", "send_feedback",
                                  "extract_first_row", "extract_features", "gnn_forward",
                                  "sum_rate"}));
  trace.clear();
  run_pipeline(MethodSpec::parse("GNN-genie"), test_set[0], point, 1, &trace);
  EXPECT_EQ(trace.front(), "extract_first_row");
}

TEST(RunPipeline, GnnGmmYUsesTheSelectedComponentRows) {
  Bench s;
  const auto test_set = make_test_set(s.config, 3);
  const GridPoint point(s.config, s.models, 4, 10.0);
  const auto& scenario = test_set[2];
  const std::uint64_t seed = 44;
  std::vector<CVec> rows;
  for (int j = 0; j < 3; ++j) {
    Rng rng(derive_seed(seed, 1, static_cast<std::uint64_t>(j)));
    const CVec y = observe(point.pilot_matrix(), scenario.users[j].channel, point.noise_var(), rng).y;
    rows.push_back(s.gmm.covariance_row(feedback_index_obs(*point.cache(), y)));
  }
  const auto r = run_pipeline(MethodSpec::parse("GNN-GMM-y"), scenario, point, seed);
  EXPECT_TRUE(r.precoders == forward(s.gmm_y, rows, 1.0));
}

TEST(RunPipeline, AllMethodsFeasibleAndCapped) {
  Bench s;
  const auto test_set = make_test_set(s.config, 3);
  for (double snr : {0.0, 20.0}) {
    const GridPoint point(s.config, s.models, 4, snr);
    for (const auto& m : all_methods())
      for (std::size_t d = 0; d < test_set.size(); ++d) {
        const auto r = run_pipeline(m, test_set[d], point, d);
        EXPECT_LE(total_power(r.precoders), 1.0 + 1e-8) << m.name();
        EXPECT_GE(r.rate, 0.0);
        EXPECT_LE(r.rate, single_user_rate_cap(test_set[d].channels(), 1.0, point.noise_var()));
        const auto again = run_pipeline(m, test_set[d], point, d);
        EXPECT_EQ(again.rate, r.rate) << m.name();
      }
  }
}

TEST(RunPipeline, MissingModelsAndDimensions) {
  Bench s;
  ModelSet partial;
  partial.gnn_genie = &s.genie;
  const GridPoint point(s.config, partial, 4, 10.0);
  const auto test_set = make_test_set(s.config, 2);
  EXPECT_NO_THROW(run_pipeline(MethodSpec::parse("GNN-genie"), test_set[0], point, 1));
  EXPECT_NO_THROW(run_pipeline(MethodSpec::parse("IWMMSE-DFT-LS"), test_set[0], point, 1));
  EXPECT_THROW(run_pipeline(MethodSpec::parse("GNN-GMM-h"), test_set[0], point, 1),
               std::invalid_argument);
  EXPECT_THROW(run_pipeline(MethodSpec::parse("IWMMSE-DFT-GMMest"), test_set[0], point, 1),
               std::invalid_argument);
  Scenario wrong = test_set[0];
  wrong.users[0].channel = CVec::Zero(5);
  EXPECT_THROW(run_pipeline(MethodSpec::parse("GNN-genie"), wrong, point, 1), std::invalid_argument);

  SystemConfig other = s.config;
  other.geometry = ArrayGeometry::ula(4);
  other.pilots = {2};
  EXPECT_THROW(GridPoint(other, s.models, 2, 10.0), std::invalid_argument);
}

// Single-user rank-1 statistics: SWMMSE should match the matched filter's average rate.
TEST(RunPipeline, SwmmseGenieRankOneMatchesMatchedFilter) {
  SystemConfig c = Bench::make_config();
  c.users = {1};
  ModelSet none;
  const GridPoint point(c, none, 4, 0.0);
  ClusterParameters cluster;
  cluster.azimuth = 0.2;
  cluster.spread = 1e-9;
  const CMat cov = cluster_covariance(c.geometry, cluster);
  const CVec a = cov.col(0);
  const CMat mf = a.conjugate() / a.norm();
  Rng rng(3);
  double swmmse_rate = 0.0, mf_rate = 0.0;
  for (int d = 0; d < 300; ++d) {
    Scenario s;
    s.users.resize(1);
    s.users[0].cluster = cluster;
    s.users[0].genie_row = first_row(cov);
    s.users[0].channel = sample_channel(cov, rng);
    swmmse_rate += run_pipeline(MethodSpec::parse("SWMMSE-genie"), s, point, d).rate;
    mf_rate += sum_rate({s.users[0].channel}, mf, point.noise_var());
  }
  EXPECT_NEAR(swmmse_rate / mf_rate, 1.0, 0.02);
}

TEST(Evaluate, SinglePointSingleRow) {
  Bench s;
  const auto report = evaluate({MethodSpec::parse("GNN-genie")}, s.config, s.models);
  ASSERT_EQ(report.rows.size(), 1u);
  const auto& row = report.rows[0];
  EXPECT_EQ(row.method, "GNN-genie");
  EXPECT_EQ(row.users, 3);
  EXPECT_EQ(row.pilots, 4);
  EXPECT_EQ(row.bits, 2);
  EXPECT_EQ(row.snr_db, 10.0);
  EXPECT_EQ(row.scenario_hash.size(), 16u);
  ASSERT_EQ(report.per_scenario[0].size(), 6u);
  double mean = 0.0;
  for (double r : report.per_scenario[0]) mean += r / 6.0;
  EXPECT_NEAR(row.mean_rate, mean, 1e-12);
  EXPECT_GT(row.stderr_rate, 0.0);
}

TEST(Evaluate, GridShapeAndPairedScenarios) {
  Bench s;
  s.config.users = {1, 3};
  s.config.snr_db = {0.0, 10.0};
  s.config.pilots = {2, 4};
  const auto methods = all_methods(10);
  const auto report = evaluate(methods, s.config, s.models);
  ASSERT_EQ(report.rows.size(), methods.size() * 2 * 2 * 2);
  for (const auto& row : report.rows) {
    EXPECT_TRUE(std::isfinite(row.mean_rate));
    EXPECT_GE(row.mean_rate, 0.0);
  }
  EXPECT_EQ(report.rows[0].scenario_hash, report.rows[methods.size() - 1].scenario_hash);
  EXPECT_NE(report.rows.front().scenario_hash, report.rows.back().scenario_hash);
  EXPECT_EQ(report.rows.front().scenario_hash, scenario_hash(make_test_set(s.config, 1)));
}

TEST(Evaluate, IndependentOfThreadCount) {
  Bench s;
  const auto methods = all_methods(10);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto a = evaluate(methods, s.config, s.models);
  omp_set_num_threads(3);
  const auto b = evaluate(methods, s.config, s.models);
  omp_set_num_threads(saved);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].mean_rate, b.rows[i].mean_rate) << a.rows[i].method;
    EXPECT_EQ(a.per_scenario[i], b.per_scenario[i]);
  }
}

TEST(EmitReport, HeaderOnlyDeterministicAndRoundTrip) {
  const fs::path dir = fs::temp_directory_path() / "statprec_report_test";
  fs::remove_all(dir);
  EvalReport empty;
  emit_report(empty, (dir / "empty.csv").string());
  EXPECT_EQ(read_text_file((dir / "empty.csv").string()), std::string(kReportHeader) + "\n");
  EXPECT_TRUE(load_report((dir / "empty.csv").string()).empty());

  Bench s;
  const auto methods = std::vector<MethodSpec>{MethodSpec::parse("GNN-genie"),
                                               MethodSpec::parse("IWMMSE-DFT-LS@15")};
  const auto r1 = evaluate(methods, s.config, s.models);
  const auto r2 = evaluate(methods, s.config, s.models);
  emit_report(r1, (dir / "a.csv").string());
  emit_report(r2, (dir / "b.csv").string());
  EXPECT_EQ(read_text_file((dir / "a.csv").string()), read_text_file((dir / "b.csv").string()));
  EXPECT_EQ(read_text_file((dir / "a.csv.json").string()),
            read_text_file((dir / "b.csv.json").string()));

  emit_report(r1, (dir / "timed.csv").string(), {.include_timing = true});
  const auto loaded = load_report((dir / "timed.csv").string());
  ASSERT_EQ(loaded.size(), r1.rows.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) EXPECT_EQ(loaded[i], r1.rows[i]);
  const auto zeroed = load_report((dir / "a.csv").string());
  EXPECT_EQ(zeroed[1].method, "IWMMSE-DFT-LS@15");
  EXPECT_EQ(zeroed[1].mean_runtime_ms, 0.0);
  EXPECT_EQ(zeroed[1].mean_rate, r1.rows[1].mean_rate);
  fs::remove_all(dir);
}

TEST(TrainingSets, ModesSelectInputs) {
  Bench s;
  const auto scenarios = make_test_set(s.config, 3);
  const auto pilots = build_pilot_matrix(s.config.geometry, 4);
  Rng rng(1);
  const TrainingSet genie = make_training_set(scenarios, FeedbackSource::kGenie, nullptr, nullptr);
  EXPECT_TRUE(genie.inputs(1, 0.1, rng)[2] == scenarios[1].users[2].genie_row);

  const TrainingSet h = make_training_set(scenarios, FeedbackSource::kGmmChannel, &s.gmm, nullptr);
  const int k = feedback_index_csi(s.gmm, scenarios[1].users[0].channel);
  EXPECT_TRUE(h.inputs(1, 0.1, rng)[0] == s.gmm.covariance_row(k));

  const TrainingSet y = make_training_set(scenarios, FeedbackSource::kGmmObservation, &s.gmm, &pilots);
  Rng a(5), b(5);
  const auto rows = y.inputs(0, 0.1, a);
  ASSERT_EQ(rows.size(), 3u);
  Rng replay(5);
  const ObservationCache cache(s.gmm, pilots, 0.1);
  for (int j = 0; j < 3; ++j) {
    const CVec obs = observe(pilots, scenarios[0].users[j].channel, 0.1, replay).y;
    EXPECT_TRUE(rows[j] == s.gmm.covariance_row(cache.feedback_index(obs)));
  }
  EXPECT_THROW(make_training_set(scenarios, FeedbackSource::kGmmObservation, &s.gmm, nullptr),
               std::invalid_argument);
  EXPECT_EQ(parse_feedback_source("gmm-y"), FeedbackSource::kGmmObservation);
  EXPECT_THROW(parse_feedback_source("oracle"), std::invalid_argument);
}

}  // namespace
}  // namespace statprec
