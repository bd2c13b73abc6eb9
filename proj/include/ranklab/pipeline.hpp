#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "ranklab/dataset.hpp"
#include "ranklab/denoiser.hpp"
#include "ranklab/evaluate.hpp"
#include "ranklab/objectives.hpp"
#include "ranklab/rewards.hpp"
#include "ranklab/schedule.hpp"
#include "ranklab/world.hpp"

namespace ranklab {

// Ring-of-Gaussians world parameters.
struct WorldSpec {
  int dim = 2;
  int num_conditions = 8;
  double radius = 4.0;
  double variance = 0.25;

  ToyWorld build() const;
};

// One candidate generator: its own seed, capacity, and training budget. The
// budget spread is what makes the candidates differ in quality.
struct GeneratorSpec {
  std::string id;
  std::uint64_t seed = 0;
  std::vector<int> hidden = {64, 64, 64};
  int train_steps = 3000;
  int batch_size = 128;
  double learning_rate = 1e-3;
};

struct EnsembleSpec {
  int n = 5;
  double noise_scale = 0.05;
};

struct DataSpec {
  int num_prompts = 2048;
  std::string file = "dataset.jsonl";
};

struct EvalSpec {
  int samples_per_condition = 100;
  int ranking_trials = 2;
};

// Every knob of the end-to-end run. One config file (plus the global seed)
// fully determines all artifacts.
struct RunConfig {
  std::uint64_t seed = 42;
  int threads = 1;
  std::string out_dir = "out";
  WorldSpec world;
  ScheduleKind schedule_kind = ScheduleKind::linear_vp;
  int schedule_steps = 100;
  int time_embed_dim = 32;
  int cond_embed_dim = 8;
  std::vector<GeneratorSpec> generators;
  EnsembleSpec ensemble;
  DataSpec data;
  TrainConfig train;
  EvalSpec eval;
  int checkpoint_every = 0;  // 0: final checkpoint only

  void validate() const;

  // Architecture shared by dataset generation and preference training,
  // derived from the world, the schedule, and the given hidden widths.
  Architecture architecture(const std::vector<int>& hidden) const;
};

// The calibrated defaults: 4 generators with a 4x budget spread, 5 rewards,
// 2048 prompts, ranking objective.
RunConfig default_toy_config();

// JSON config file over the defaults; unknown keys are rejected. CLI-style
// overrides (seed, threads, objective, out) are applied by the caller.
RunConfig load_config(const std::string& path);
RunConfig config_from_json_text(const std::string& text);

// Artifact locations under config.out_dir.
std::filesystem::path generator_checkpoint_path(const RunConfig& config,
                                                const std::string& id);
std::filesystem::path dataset_file_path(const RunConfig& config);
std::filesystem::path policy_checkpoint_path(const RunConfig& config,
                                             Objective objective);
std::filesystem::path metrics_file_path(const RunConfig& config,
                                        Objective objective);

// Trains and stores the k candidate generators. Rerunning with the same
// config rewrites identical bytes.
void cmd_pretrain(const RunConfig& config, std::ostream& log);

struct DatagenSummary {
  int num_records = 0;
  int k = 0;
  int n = 0;
  double mean_phi = 0.0;
  double tie_fraction = 0.0;  // tied candidate pairs / all candidate pairs
};

DatagenSummary dataset_summary(const PreferenceDataset& dataset);

// Builds the ranked dataset from the stored generator checkpoints.
DatagenSummary cmd_datagen(const RunConfig& config, std::ostream& log);

// Preference-trains the configured objective from the base generator, writing
// the policy checkpoint and a per-step metrics log.
void cmd_train(const RunConfig& config, std::ostream& log);

struct EvalSummary {
  WinRateReport policy_vs_ref;
  RankingAgreementReport agreement_before;  // policy == reference baseline
  RankingAgreementReport agreement_after;
};

// Head-to-head win rate of the trained policy against its frozen reference
// under the held-out judge, plus ranking agreement before/after training.
EvalSummary cmd_eval(const RunConfig& config, std::ostream& log);

// Central-difference gradient verification for every objective on a tiny
// network, plus the exact zero-score anchor. Used by the `gradcheck` command
// and the acceptance suite.
struct GradCheckEntry {
  std::string objective;
  double max_rel_error = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool all_pass = false;
  double anchor_loss = 0.0;      // ranking loss at theta == theta_ref
  double anchor_expected = 0.0;  // ln(2) * mean total pair weight
};

GradCheckReport run_gradient_checks(std::uint64_t seed, double tolerance,
                                    int params_to_check = 100);

// Prints the report; false when any objective fails the tolerance.
bool cmd_gradcheck(const RunConfig& config, std::ostream& log);

// Prints dataset statistics for a stored dataset file.
void cmd_inspect(const std::string& dataset_file, std::ostream& out);

struct PipelineSummary {
  DatagenSummary datagen;
  EvalSummary eval;
};

// pretrain -> datagen -> train -> eval, identical to running the four
// commands in sequence with the same config.
PipelineSummary run_pipeline(const RunConfig& config, std::ostream& log);

// Max relative error between the analytic gradient and central finite
// differences of `loss_of`, over `count` parameter indices drawn by `rng`
// (h: the perturbation size). Exposed for the verification tooling.
double max_fd_rel_error(const DenoiserParams& theta,
                        const std::function<double(const DenoiserParams&)>& loss_of,
                        std::span<const double> analytic_grad, int count,
                        double h, Rng& rng);

}  // namespace ranklab
