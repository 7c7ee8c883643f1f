#include <cstdlib>
#include <iostream>

#include <omp.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cli11/CLI11.hpp"
#include "commands.hpp"

namespace {

using namespace statprec;
using namespace statprec::cli;

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("statprec");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  const char* env = std::getenv("STATPREC_LOG");
  if (!env || !*env) return;
  const std::string value = env;
  for (auto level : {spdlog::level::trace, spdlog::level::debug, spdlog::level::info,
                     spdlog::level::warn, spdlog::level::err, spdlog::level::critical,
                     spdlog::level::off}) {
    const auto name = spdlog::level::to_string_view(level);
    if (value == std::string(name.data(), name.size()) || (value == "error" && level == spdlog::level::err)) {
      spdlog::set_level(level);
      return;
    }
  }
  spdlog::warn("ignoring STATPREC_LOG={} (use trace, debug, info, warn, error or off)", value);
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();

  CLI::App app{"Statistical multi-user precoder design with a GNN and GMM feedback"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string preset = "full";
  std::optional<std::uint64_t> seed;
  int threads = 0;
  RunOptions options;
  std::vector<std::string> methods;
  std::string feedback = "genie";

  app.add_option("--config", config_path, "TOML config file")->check(CLI::ExistingFile);
  app.add_option("--preset", preset, "base setup: full, fig2, fig3a, fig3b or desk");
  app.add_option("--seed", seed, "master seed (overrides system.seed)");
  app.add_option("--threads", threads, "OpenMP worker cap")->check(CLI::PositiveNumber);
  app.add_option("--out", options.out_dir, "artifact directory")->capture_default_str();
  app.add_flag("--dry-run", options.dry_run, "print the resolved config and plan, write nothing");

  auto* gen = app.add_subcommand("gen-data", "generate GMM, training, validation and test sets");
  auto* fit = app.add_subcommand("fit-gmm", "fit the structured GMM with EM");
  fit->add_flag("--resume", options.resume, "continue from the saved model");
  auto* trn = app.add_subcommand("train-gnn", "train a GNN precoder");
  trn->add_option("--feedback", feedback, "training inputs: genie, gmm-h or gmm-y")
      ->capture_default_str();
  trn->add_flag("--smoke", options.smoke, "10 scenarios, 1 epoch");
  auto* eval = app.add_subcommand("evaluate", "evaluate methods and write the report");
  eval->add_option("--methods", methods, "comma-separated method names")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  CliConfig config;
  try {
    config = preset_config(preset);
    if (!config_path.empty()) apply_toml_file(config, config_path);
    if (seed) config.system.seed = *seed;
    if (!methods.empty()) config.eval.methods = methods;
    try {
      options.feedback = parse_feedback_source(feedback);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    validate(config);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  if (threads > 0) omp_set_num_threads(threads);

  try {
    if (*gen) cmd_gen_data(config, options, std::cout);
    if (*fit) cmd_fit_gmm(config, options, std::cout);
    if (*trn) cmd_train_gnn(config, options, std::cout);
    if (*eval) cmd_evaluate(config, options, std::cout);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
