#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ranklab/dataset.hpp"
#include "ranklab/denoiser.hpp"
#include "ranklab/optimizer.hpp"
#include "ranklab/schedule.hpp"

namespace ranklab {

enum class Objective { rankdpo, dpo, sft, weighted_sft, dpo_gain };

std::string to_string(Objective objective);
Objective objective_from_string(const std::string& name);

// Preference-strength gain: 2^phi - 1, mapping [0, 1] onto [0, 1].
double gain(double phi);

// Rank discount: ln(1 + rank) for rank >= 1. Better ranks discount less, so
// 1/discount weights the top of the ranking most heavily.
double discount(int rank);

// Pairwise weight matrix: delta(i, j) = |gain_i - gain_j| *
// |1/discount(rank_i) - 1/discount(rank_j)|. Symmetric, non-negative, zero
// diagonal, zero whenever two candidates share the same preference strength.
struct PairWeights {
  int k = 0;
  std::vector<double> delta;  // k*k, row-major

  double at(int i, int j) const {
    return delta[static_cast<std::size_t>(i) * static_cast<std::size_t>(k) +
                 static_cast<std::size_t>(j)];
  }
  // Total weight over unordered pairs i < j.
  double unordered_sum() const;
};

PairWeights pair_weights(const std::vector<double>& phi,
                         const std::vector<int>& tau);

// Noising randomness for one record: a single timestep shared by every
// candidate, and an independent noise vector per candidate.
struct RecordDraw {
  int t = 1;
  std::vector<std::vector<double>> eps;  // [candidate][dim]
};

// Draw order: t first, then candidate noises in candidate order.
RecordDraw make_record_draw(int k, int dim, int total_steps, Rng& rng);

// Implicit per-candidate reward: how much better the model explains the
// candidate's noise than the frozen reference does. Lower is more preferred.
//   s_i = |eps_i - predict(theta, x_t_i)|^2 - |eps_i - predict(ref, x_t_i)|^2
struct ScoreVector {
  std::vector<double> s;
  int t = 1;
  std::vector<std::vector<double>> eps;
};

// The scalar core of the score: both prediction errors compared directly.
double score_from_predictions(std::span<const double> eps,
                              std::span<const double> pred_theta,
                              std::span<const double> pred_ref);

ScoreVector score_vector_at(const DenoiserParams& theta,
                            const DenoiserParams& theta_ref,
                            const RankedPreferenceRecord& record,
                            const NoiseSchedule& schedule,
                            const RecordDraw& draw);

ScoreVector score_vector(const DenoiserParams& theta,
                         const DenoiserParams& theta_ref,
                         const RankedPreferenceRecord& record,
                         const NoiseSchedule& schedule, Rng& rng);

struct PrefLossResult {
  double loss = 0.0;
  std::vector<double> grad;
  // Mean per-record total pair weight; with identical policies the loss
  // equals ln(2) times this value.
  double sum_delta = 0.0;
};

struct RankDpoOptions {
  double beta = 0.5;
  // Divide each record's pair sum by its pair count. Off by default: the
  // ranking loss sums pairwise terms unnormalized.
  bool normalize_pairs = false;
  // Test hook: replaces the computed pair weights per record when set.
  std::function<PairWeights(const RankedPreferenceRecord&)> weights_override;
};

// Ranking loss over all unordered candidate pairs, each weighted by delta and
// oriented so the better-ranked candidate's score is pushed down:
//   loss = mean_records sum_pairs delta * -log sigmoid(-beta * (s_best - s_worst))
// The reference model contributes no gradient. `draws` must align with
// `batch`; `threads` splits records across workers without changing results.
PrefLossResult rankdpo_loss_and_grad_at(const DenoiserParams& theta,
                                        const DenoiserParams& theta_ref,
                                        std::span<const RankedPreferenceRecord> batch,
                                        const NoiseSchedule& schedule,
                                        std::span<const RecordDraw> draws,
                                        const RankDpoOptions& options,
                                        int threads = 1);

PrefLossResult rankdpo_loss_and_grad(const DenoiserParams& theta,
                                     const DenoiserParams& theta_ref,
                                     std::span<const RankedPreferenceRecord> batch,
                                     const NoiseSchedule& schedule, double beta,
                                     Rng& rng);

// Pairwise preference loss on each record's (best, worst) candidate pair:
//   loss = mean_records -log sigmoid(-beta * (s_best - s_worst))
PrefLossResult dpo_loss_and_grad_at(const DenoiserParams& theta,
                                    const DenoiserParams& theta_ref,
                                    std::span<const RankedPreferenceRecord> batch,
                                    const NoiseSchedule& schedule,
                                    std::span<const RecordDraw> draws,
                                    double beta, int threads = 1);

PrefLossResult dpo_loss_and_grad(const DenoiserParams& theta,
                                 const DenoiserParams& theta_ref,
                                 std::span<const RankedPreferenceRecord> batch,
                                 const NoiseSchedule& schedule, double beta,
                                 Rng& rng);

// Denoising loss on each record's rank-1 candidate only (mean over records).
PrefLossResult sft_loss_and_grad_at(const DenoiserParams& theta,
                                    std::span<const RankedPreferenceRecord> batch,
                                    const NoiseSchedule& schedule,
                                    std::span<const RecordDraw> draws,
                                    int threads = 1);

PrefLossResult sft_loss_and_grad(const DenoiserParams& theta,
                                 std::span<const RankedPreferenceRecord> batch,
                                 const NoiseSchedule& schedule, Rng& rng);

// Candidate -> non-negative weights for one record; defaults to the stored
// preference strengths when absent.
using WeightSource =
    std::function<std::vector<double>(const RankedPreferenceRecord&)>;

// Per record, the weighted mean of per-candidate denoising losses; records
// whose weights sum to zero contribute zero.
PrefLossResult weighted_sft_loss_and_grad_at(
    const DenoiserParams& theta, std::span<const RankedPreferenceRecord> batch,
    const NoiseSchedule& schedule, std::span<const RecordDraw> draws,
    const WeightSource& weight_source = {}, int threads = 1);

PrefLossResult weighted_sft_loss_and_grad(
    const DenoiserParams& theta, std::span<const RankedPreferenceRecord> batch,
    const NoiseSchedule& schedule, Rng& rng,
    const WeightSource& weight_source = {});

// (best, worst) pairwise loss scaled per record by the gain gap
// |gain(phi_best) - gain(phi_worst)|.
PrefLossResult dpo_gain_loss_and_grad_at(const DenoiserParams& theta,
                                         const DenoiserParams& theta_ref,
                                         std::span<const RankedPreferenceRecord> batch,
                                         const NoiseSchedule& schedule,
                                         std::span<const RecordDraw> draws,
                                         double beta, int threads = 1);

PrefLossResult dpo_gain_loss_and_grad(const DenoiserParams& theta,
                                      const DenoiserParams& theta_ref,
                                      std::span<const RankedPreferenceRecord> batch,
                                      const NoiseSchedule& schedule, double beta,
                                      Rng& rng);

struct TrainConfig {
  Objective objective = Objective::rankdpo;
  int steps = 400;
  int batch_size = 64;
  // Calibrated for the default toy world; see default_toy_config().
  double learning_rate = 3e-4;
  double beta = 0.5;
  std::uint64_t seed = 0;
  AdamConfig adam;
  bool normalize_pairs = false;

  void validate() const;
};

struct StepMetrics {
  int step = 0;
  Objective objective = Objective::rankdpo;
  double loss = 0.0;
  double grad_norm = 0.0;
  double sum_delta = 0.0;
  double wall_ms = 0.0;
};

using MetricsSink = std::function<void(const StepMetrics&)>;

// Observes the updated parameters after each optimizer step (0-based step
// index); used for interval checkpointing.
using StepObserver = std::function<void(int step, const DenoiserParams&)>;

// One metrics line in the structured log format consumed by `inspect`-style
// tooling; wall_ms is the only field allowed to vary between identical runs.
std::string format_metrics_line(const StepMetrics& metrics);

// Runs `steps` optimizer updates of the configured objective starting from
// theta_init, with theta_ref frozen throughout. Batches are drawn with
// replacement from per-step substreams of config.seed, so the trajectory is
// bit-reproducible for a given seed and independent of `threads`. Throws
// TrainingDiverged if the loss leaves the finite range.
DenoiserParams train_preference(const PreferenceDataset& dataset,
                                const DenoiserParams& theta_init,
                                const DenoiserParams& theta_ref,
                                const NoiseSchedule& schedule,
                                const TrainConfig& config, int threads = 1,
                                const MetricsSink& sink = {},
                                const StepObserver& observer = {});

}  // namespace ranklab
