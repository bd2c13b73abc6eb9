#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <doctest.h>

// Exercises the installed command-line binary end to end through a shell, the
// way a user would drive it: argument parsing, exit codes, and the log lines
// and artifacts each subcommand produces.

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::filesystem::path fresh_dir(const std::string& name) {
  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / "ranklab_cli_test" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

CliResult run_cli(const std::string& args, const std::filesystem::path& scratch) {
  const auto out_path = scratch / "cli_stdout.txt";
  const auto err_path = scratch / "cli_stderr.txt";
  const std::string command = std::string(RANKLAB_BIN_PATH) + " " + args + " >" +
                              out_path.string() + " 2>" + err_path.string();
  const int status = std::system(command.c_str());
  CliResult result;
  result.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = slurp(out_path);
  result.err = slurp(err_path);
  return result;
}

// Same shape as the micro config used by the library-level pipeline tests.
std::filesystem::path write_micro_config(const std::filesystem::path& dir) {
  const auto path = dir / "micro.json";
  std::ofstream out(path);
  out << R"({
    "seed": 42,
    "world": {"num_conditions": 4},
    "schedule": {"steps": 20},
    "model": {"time_embed_dim": 4, "cond_embed_dim": 3},
    "generators": [
      {"id": "gen0", "seed": 0, "hidden": [8, 8], "train_steps": 30,
       "batch_size": 16, "learning_rate": 0.001},
      {"id": "gen1", "seed": 1, "hidden": [8, 8], "train_steps": 15,
       "batch_size": 16, "learning_rate": 0.001}
    ],
    "ensemble": {"n": 3, "noise_scale": 0.05},
    "data": {"num_prompts": 12, "file": "ds.jsonl"},
    "train": {"objective": "rankdpo", "steps": 4, "batch_size": 4,
              "learning_rate": 0.001, "beta": 1.0},
    "eval": {"samples_per_condition": 3, "ranking_trials": 1}
  })";
  return path;
}

}  // namespace

TEST_CASE("cli: help works and usage errors exit with code 1") {
  const auto dir = fresh_dir("usage");
  const CliResult help = run_cli("--help", dir);
  CHECK(help.code == 0);
  CHECK(help.out.find("pretrain") != std::string::npos);
  CHECK(help.out.find("pipeline") != std::string::npos);
  CHECK(help.out.find("inspect") != std::string::npos);

  CHECK(run_cli("", dir).code == 1);                  // subcommand required
  CHECK(run_cli("bogus", dir).code == 1);             // unknown subcommand
  CHECK(run_cli("inspect", dir).code == 1);           // missing required arg
  CHECK(run_cli("train --config /nonexistent.json", dir).code == 1);

  const CliResult bad_objective = run_cli("train --objective nonsense", dir);
  CHECK(bad_objective.code == 1);
  CHECK(bad_objective.err.find("error:") != std::string::npos);

  const CliResult bad_threads =
      run_cli("pretrain --threads 0 --out " + dir.string(), dir);
  CHECK(bad_threads.code == 1);
  CHECK(bad_threads.err.find("error:") != std::string::npos);
}

TEST_CASE("cli: staged commands run the micro pipeline end to end") {
  const auto dir = fresh_dir("stages");
  const auto config = write_micro_config(dir);
  const std::string common =
      " --config " + config.string() + " --out " + dir.string();

  // Stages out of order fail as runtime errors.
  const CliResult early = run_cli("datagen" + common, dir);
  CHECK(early.code == 2);
  CHECK(early.err.find("missing generator checkpoint") != std::string::npos);

  const CliResult pretrain = run_cli("pretrain" + common, dir);
  CHECK(pretrain.code == 0);
  CHECK(pretrain.out.find("pretrained gen0") != std::string::npos);
  CHECK(pretrain.out.find("pretrained gen1") != std::string::npos);

  const CliResult datagen = run_cli("datagen" + common, dir);
  CHECK(datagen.code == 0);
  CHECK(datagen.out.find("dataset: records=12") != std::string::npos);
  REQUIRE(std::filesystem::exists(dir / "ds.jsonl"));

  const CliResult train = run_cli("train" + common, dir);
  CHECK(train.code == 0);
  CHECK(train.out.find("trained rankdpo") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "rankdpo.ckpt"));
  CHECK(std::filesystem::exists(dir / "rankdpo_metrics.jsonl"));

  const CliResult eval = run_cli("eval" + common, dir);
  CHECK(eval.code == 0);
  CHECK(eval.out.find("win_rate rankdpo vs ref:gen0") != std::string::npos);
  CHECK(eval.out.find("kendall_tau:") != std::string::npos);
  CHECK(eval.out.find("ndcg:") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "eval_win_rate.json"));
  CHECK(std::filesystem::exists(dir / "tau_series.tsv"));

  const CliResult inspect =
      run_cli("inspect " + (dir / "ds.jsonl").string(), dir);
  CHECK(inspect.code == 0);
  CHECK(inspect.out.find("records: 12") != std::string::npos);
  CHECK(inspect.out.find("mean rank of gen0:") != std::string::npos);

  const CliResult inspect_missing =
      run_cli("inspect " + (dir / "nope.jsonl").string(), dir);
  CHECK(inspect_missing.code == 2);
}

TEST_CASE("cli: the pipeline command reproduces the staged artifacts") {
  const auto staged = fresh_dir("combined_ref");
  const auto combined = fresh_dir("combined");
  const auto config = write_micro_config(staged);
  for (const char* stage : {"pretrain", "datagen", "train", "eval"}) {
    const CliResult result = run_cli(
        std::string(stage) + " --config " + config.string() + " --out " +
            staged.string(),
        staged);
    REQUIRE(result.code == 0);
  }
  const CliResult pipeline = run_cli(
      "pipeline --config " + config.string() + " --out " + combined.string(),
      combined);
  CHECK(pipeline.code == 0);
  CHECK(slurp(combined / "ds.jsonl") == slurp(staged / "ds.jsonl"));
  CHECK(slurp(combined / "rankdpo.ckpt") == slurp(staged / "rankdpo.ckpt"));
  CHECK(slurp(combined / "eval_win_rate.json") ==
        slurp(staged / "eval_win_rate.json"));

  // A different seed flows through to the artifacts.
  const auto reseeded = fresh_dir("combined_seed");
  const CliResult other = run_cli(
      "pipeline --config " + config.string() + " --seed 43 --out " +
          reseeded.string(),
      reseeded);
  CHECK(other.code == 0);
  CHECK(slurp(reseeded / "ds.jsonl") != slurp(staged / "ds.jsonl"));
}

TEST_CASE("cli: gradient verification passes and corruption is detected") {
  const auto dir = fresh_dir("verify");
  const CliResult gradcheck = run_cli("gradcheck", dir);
  CHECK(gradcheck.code == 0);
  CHECK(gradcheck.out.find("gradcheck rankdpo:") != std::string::npos);
  CHECK(gradcheck.out.find(" pass") != std::string::npos);
  CHECK(gradcheck.out.find("FAIL") == std::string::npos);
  CHECK(gradcheck.out.find("anchor: loss=") != std::string::npos);

  // Flip one payload byte in a stored checkpoint: reading it back must be
  // reported as a verification failure, not a generic runtime error.
  const auto config = write_micro_config(dir);
  const std::string common =
      " --config " + config.string() + " --out " + dir.string();
  REQUIRE(run_cli("pretrain" + common, dir).code == 0);
  const auto target = dir / "gen0.ckpt";
  std::string bytes = slurp(target);
  REQUIRE(!bytes.empty());
  bytes.back() = static_cast<char>(bytes.back() ^ 0x01);
  {
    std::ofstream out(target, std::ios::binary | std::ios::trunc);
    out << bytes;
  }
  const CliResult corrupted = run_cli("datagen" + common, dir);
  CHECK(corrupted.code == 3);
  CHECK(corrupted.err.find("checksum") != std::string::npos);
}
