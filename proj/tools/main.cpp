// Command-line front end: one subcommand per pipeline stage plus dataset
// inspection. Exit codes: 0 success, 1 usage error, 2 runtime failure,
// 3 verification failure.

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ranklab/errors.hpp"
#include "ranklab/objectives.hpp"
#include "ranklab/pipeline.hpp"

namespace {

struct CliOverrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> objective;
  std::optional<std::string> out_dir;
};

void add_common_options(CLI::App* cmd, CliOverrides& overrides) {
  cmd->add_option("--config", overrides.config_path,
                  "JSON config file; built-in defaults when omitted")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", overrides.seed, "override the run seed");
  cmd->add_option("--threads", overrides.threads,
                  "worker thread cap (never affects results)");
  cmd->add_option("--objective", overrides.objective,
                  "training objective: rankdpo, dpo, sft, weighted_sft, dpo_gain");
  cmd->add_option("--out", overrides.out_dir, "artifact output directory");
}

ranklab::RunConfig resolve_config(const CliOverrides& overrides) {
  ranklab::RunConfig config = overrides.config_path.empty()
                                  ? ranklab::default_toy_config()
                                  : ranklab::load_config(overrides.config_path);
  if (overrides.seed) config.seed = *overrides.seed;
  if (overrides.threads) config.threads = *overrides.threads;
  if (overrides.objective) {
    config.train.objective = ranklab::objective_from_string(*overrides.objective);
  }
  if (overrides.out_dir) config.out_dir = *overrides.out_dir;
  config.validate();
  return config;
}

int exit_code_for(const ranklab::FormatError& error) {
  // A checksum that fails to verify is a verification failure; everything else
  // wrong with a file is a runtime failure.
  return error.kind() == ranklab::FormatError::Kind::checksum_mismatch ? 3 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale lab for ranking-based preference tuning of a toy "
               "conditional diffusion model"};
  app.require_subcommand(1);

  CliOverrides overrides;
  std::string dataset_file;

  CLI::App* pretrain =
      app.add_subcommand("pretrain", "train the candidate generators");
  CLI::App* datagen =
      app.add_subcommand("datagen", "build the ranked preference dataset");
  CLI::App* train =
      app.add_subcommand("train", "preference-tune the base generator");
  CLI::App* eval_cmd = app.add_subcommand(
      "eval", "win rate and ranking agreement for the tuned policy");
  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference verification of every objective");
  CLI::App* pipeline = app.add_subcommand(
      "pipeline", "pretrain, datagen, train and eval in one run");
  CLI::App* inspect =
      app.add_subcommand("inspect", "print statistics for a stored dataset");
  inspect->add_option("dataset", dataset_file, "dataset file to inspect")
      ->required();

  for (CLI::App* cmd : {pretrain, datagen, train, eval_cmd, gradcheck, pipeline}) {
    add_common_options(cmd, overrides);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& help) {
    return app.exit(help);
  } catch (const CLI::CallForAllHelp& help) {
    return app.exit(help);
  } catch (const CLI::ParseError& error) {
    app.exit(error);
    return 1;
  }

  if (inspect->parsed()) {
    try {
      ranklab::cmd_inspect(dataset_file, std::cout);
      return 0;
    } catch (const ranklab::FormatError& error) {
      std::cerr << "error: " << error.what() << "\n";
      return exit_code_for(error);
    } catch (const std::exception& error) {
      std::cerr << "error: " << error.what() << "\n";
      return 2;
    }
  }

  ranklab::RunConfig config;
  try {
    config = resolve_config(overrides);
  } catch (const std::exception& error) {
    std::cerr << "error: " << error.what() << "\n";
    return 1;
  }

  try {
    if (pretrain->parsed()) {
      ranklab::cmd_pretrain(config, std::cout);
    } else if (datagen->parsed()) {
      ranklab::cmd_datagen(config, std::cout);
    } else if (train->parsed()) {
      ranklab::cmd_train(config, std::cout);
    } else if (eval_cmd->parsed()) {
      ranklab::cmd_eval(config, std::cout);
    } else if (gradcheck->parsed()) {
      if (!ranklab::cmd_gradcheck(config, std::cout)) return 3;
    } else if (pipeline->parsed()) {
      ranklab::run_pipeline(config, std::cout);
    }
  } catch (const ranklab::FormatError& error) {
    std::cerr << "error: " << error.what() << "\n";
    return exit_code_for(error);
  } catch (const std::exception& error) {
    std::cerr << "error: " << error.what() << "\n";
    return 2;
  }
  return 0;
}
