#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ranklab/dataset.hpp"
#include "ranklab/denoiser.hpp"
#include "ranklab/rewards.hpp"
#include "ranklab/schedule.hpp"
#include "ranklab/world.hpp"

namespace ranklab {

// A conditional generator under evaluation: one point per call.
using ConditionalSampler =
    std::function<std::vector<double>(int condition, Rng& rng)>;

// Ancestral sampling from trained weights as a ConditionalSampler. The
// parameters are captured by value, so the sampler outlives its source.
ConditionalSampler model_sampler(const DenoiserParams& params,
                                 const NoiseSchedule& schedule);

// One head-to-head comparison, logged so reports can be recounted externally.
struct ComparisonOutcome {
  int condition = 0;
  int sample_index = 0;
  int votes_a = 0;  // judge members preferring a's sample
  int votes_b = 0;  // members preferring b's sample; member ties count here
  bool a_won = false;

  bool operator==(const ComparisonOutcome&) const = default;
};

struct WinRateReport {
  std::string model_a;
  std::string model_b;
  int conditions = 0;
  int samples_per_condition = 0;
  double win_fraction_a = 0.0;
  double half_width = 0.0;  // 95% binomial confidence half-width
  std::vector<ComparisonOutcome> outcomes;  // condition-major, sample order
};

// Paired comparison under a judge ensemble: per condition and sample index,
// draw one point from each model (shared condition, independent noise), let
// every judge member vote, and count a majority win for a. Member ties and
// overall vote ties both favor b, keeping the estimate conservative for a.
// Deterministic given the rng's seed; `threads` never changes results.
WinRateReport win_rate(const ConditionalSampler& sampler_a,
                       const ConditionalSampler& sampler_b,
                       const std::string& name_a, const std::string& name_b,
                       const RewardEnsemble& judge, const ToyWorld& world,
                       const std::vector<int>& conditions,
                       int samples_per_condition, const Rng& rng,
                       int threads = 1);

// Convenience overload for two trained checkpoints.
WinRateReport win_rate(const DenoiserParams& theta_a,
                       const DenoiserParams& theta_b,
                       const std::string& name_a, const std::string& name_b,
                       const RewardEnsemble& judge, const ToyWorld& world,
                       const NoiseSchedule& schedule,
                       const std::vector<int>& conditions,
                       int samples_per_condition, const Rng& rng,
                       int threads = 1);

// Noise-free blend of alignment and quality, never part of the training
// ensemble, used as the default judge for held-out evaluation.
RewardEnsemble held_out_judge();

// Rank-correlation between two rankings of the same items: mean of
// sign-agreement over distinct pairs, in [-1, 1]; pairs tied in either
// ranking contribute zero.
double kendall_tau(const std::vector<int>& rank_a,
                   const std::vector<int>& rank_b);

// Same correlation computed against raw scores (lower score = better), so
// tied scores genuinely contribute zero instead of being broken by index.
double kendall_tau_scores(const std::vector<double>& scores,
                          const std::vector<int>& tau);

// Discounted cumulative gain of the model ranking relative to the ideal
// ranking, in [0, 1]. All-zero gains count as perfect agreement.
double ndcg(const std::vector<double>& gains, const std::vector<int>& model_rank,
            const std::vector<int>& ideal_rank);

struct RankingAgreementReport {
  int records = 0;
  int trials = 0;
  double mean_kendall_tau = 0.0;  // in [-1, 1]
  double mean_ndcg = 0.0;         // in [0, 1]
};

// How well the model's implicit candidate scores reproduce each record's
// stored ranking: per record and trial, compute the score vector (lowest
// score = most preferred), rank by it, and compare against tau. Averages
// Kendall-tau and nDCG over records x trials.
RankingAgreementReport ranking_agreement(const DenoiserParams& theta,
                                         const DenoiserParams& theta_ref,
                                         const PreferenceDataset& dataset,
                                         const NoiseSchedule& schedule,
                                         int trials, const Rng& rng,
                                         int threads = 1);

// Report serialization: a one-line structured summary, a per-comparison log
// (one line per outcome, tab-separated), and a (step, value) series emitter
// for external plotting.
std::string format_win_rate_report(const WinRateReport& report);
void write_win_rate_report(const std::string& path, const WinRateReport& report);
void write_comparison_log(const std::string& path, const WinRateReport& report);
std::string format_ranking_agreement(const RankingAgreementReport& report);
void write_series(const std::string& path,
                  const std::vector<std::pair<int, double>>& series);

}  // namespace ranklab
