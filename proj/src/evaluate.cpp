#include "ranklab/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "ranklab/diffusion.hpp"
#include "ranklab/objectives.hpp"
#include "ranklab/parallel.hpp"

namespace ranklab {

ConditionalSampler model_sampler(const DenoiserParams& params,
                                 const NoiseSchedule& schedule) {
  params.validate();
  schedule.validate();
  if (params.arch.total_steps != schedule.total_steps)
    throw std::invalid_argument("sampler: schedule step count mismatch");
  return [params, schedule](int condition, Rng& rng) {
    return ancestral_sample(params, schedule, condition, rng);
  };
}

WinRateReport win_rate(const ConditionalSampler& sampler_a,
                       const ConditionalSampler& sampler_b,
                       const std::string& name_a, const std::string& name_b,
                       const RewardEnsemble& judge, const ToyWorld& world,
                       const std::vector<int>& conditions,
                       int samples_per_condition, const Rng& rng, int threads) {
  if (!sampler_a || !sampler_b)
    throw std::invalid_argument("win_rate: missing sampler");
  if (conditions.empty())
    throw std::invalid_argument("win_rate: no conditions to evaluate");
  if (samples_per_condition < 1)
    throw std::invalid_argument("win_rate: need at least one sample");
  judge.validate();
  world.validate();
  for (int c : conditions)
    if (!world.valid_condition(c))
      throw std::invalid_argument("win_rate: condition out of range");

  WinRateReport report;
  report.model_a = name_a;
  report.model_b = name_b;
  report.conditions = static_cast<int>(conditions.size());
  report.samples_per_condition = samples_per_condition;

  // Outcomes land in per-condition slots so the log order and the win count
  // are independent of scheduling.
  std::vector<std::vector<ComparisonOutcome>> slots(conditions.size());
  parallel_for(conditions.size(), threads, [&](std::size_t ci) {
    const int condition = conditions[ci];
    Rng cond_rng = rng.stream("eval.win.cond", static_cast<std::uint64_t>(ci));
    auto& out = slots[ci];
    out.resize(static_cast<std::size_t>(samples_per_condition));
    for (int s = 0; s < samples_per_condition; ++s) {
      const std::vector<double> xa = sampler_a(condition, cond_rng);
      const std::vector<double> xb = sampler_b(condition, cond_rng);
      int votes_a = 0;
      int votes_b = 0;
      for (const RewardModel& member : judge.models) {
        const double ra = score(member, world, Sample{xa, condition});
        const double rb = score(member, world, Sample{xb, condition});
        if (ra > rb)
          ++votes_a;
        else
          ++votes_b;  // ties go to b
      }
      ComparisonOutcome& outcome = out[static_cast<std::size_t>(s)];
      outcome.condition = condition;
      outcome.sample_index = s;
      outcome.votes_a = votes_a;
      outcome.votes_b = votes_b;
      outcome.a_won = votes_a > votes_b;  // vote ties also go to b
    }
  });

  long long wins = 0;
  for (auto& slot : slots) {
    for (const auto& outcome : slot)
      if (outcome.a_won) ++wins;
    report.outcomes.insert(report.outcomes.end(), slot.begin(), slot.end());
  }
  const double total =
      static_cast<double>(conditions.size()) * samples_per_condition;
  const double p = static_cast<double>(wins) / total;
  report.win_fraction_a = p;
  report.half_width = 1.96 * std::sqrt(p * (1.0 - p) / total);
  return report;
}

WinRateReport win_rate(const DenoiserParams& theta_a,
                       const DenoiserParams& theta_b,
                       const std::string& name_a, const std::string& name_b,
                       const RewardEnsemble& judge, const ToyWorld& world,
                       const NoiseSchedule& schedule,
                       const std::vector<int>& conditions,
                       int samples_per_condition, const Rng& rng, int threads) {
  return win_rate(model_sampler(theta_a, schedule),
                  model_sampler(theta_b, schedule), name_a, name_b, judge,
                  world, conditions, samples_per_condition, rng, threads);
}

RewardEnsemble held_out_judge() {
  RewardModel judge;
  judge.id = "held_out_judge";
  judge.kind = RewardKind::mixed;
  judge.mix_weight = 0.5;
  judge.noise_scale = 0.0;
  judge.noise_seed = 0;
  return RewardEnsemble{{judge}};
}

double kendall_tau(const std::vector<int>& rank_a,
                   const std::vector<int>& rank_b) {
  if (rank_a.size() != rank_b.size())
    throw std::invalid_argument("kendall_tau: length mismatch");
  const int k = static_cast<int>(rank_a.size());
  if (k < 2) throw std::invalid_argument("kendall_tau: need k >= 2");
  long long acc = 0;
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      const int da = rank_a[static_cast<std::size_t>(i)] -
                     rank_a[static_cast<std::size_t>(j)];
      const int db = rank_b[static_cast<std::size_t>(i)] -
                     rank_b[static_cast<std::size_t>(j)];
      const int sa = (da > 0) - (da < 0);
      const int sb = (db > 0) - (db < 0);
      acc += sa * sb;
    }
  }
  return static_cast<double>(acc) / (static_cast<double>(k) * (k - 1) / 2.0);
}

double kendall_tau_scores(const std::vector<double>& scores,
                          const std::vector<int>& tau) {
  if (scores.size() != tau.size())
    throw std::invalid_argument("kendall_tau: length mismatch");
  const int k = static_cast<int>(scores.size());
  if (k < 2) throw std::invalid_argument("kendall_tau: need k >= 2");
  long long acc = 0;
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      const double ds = scores[static_cast<std::size_t>(i)] -
                        scores[static_cast<std::size_t>(j)];
      const int dt = tau[static_cast<std::size_t>(i)] -
                     tau[static_cast<std::size_t>(j)];
      const int ss = (ds > 0.0) - (ds < 0.0);
      const int st = (dt > 0) - (dt < 0);
      acc += ss * st;
    }
  }
  return static_cast<double>(acc) / (static_cast<double>(k) * (k - 1) / 2.0);
}

double ndcg(const std::vector<double>& gains,
            const std::vector<int>& model_rank,
            const std::vector<int>& ideal_rank) {
  if (gains.size() != model_rank.size() || gains.size() != ideal_rank.size())
    throw std::invalid_argument("ndcg: length mismatch");
  double dcg = 0.0;
  double ideal = 0.0;
  for (std::size_t i = 0; i < gains.size(); ++i) {
    if (!(gains[i] >= 0.0))
      throw std::invalid_argument("ndcg: negative gain");
    dcg += gains[i] / discount(model_rank[i]);
    ideal += gains[i] / discount(ideal_rank[i]);
  }
  if (ideal == 0.0) return 1.0;  // no gain anywhere: nothing to misorder
  return dcg / ideal;
}

namespace {

// Ascending-score ranking: rank 1 for the lowest score, ties broken by
// ascending index (lower score = more preferred).
std::vector<int> rank_ascending(const std::vector<double>& values) {
  std::vector<int> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return values[static_cast<std::size_t>(a)] <
           values[static_cast<std::size_t>(b)];
  });
  std::vector<int> rank(values.size());
  for (int r = 0; r < static_cast<int>(order.size()); ++r)
    rank[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = r + 1;
  return rank;
}

}  // namespace

RankingAgreementReport ranking_agreement(const DenoiserParams& theta,
                                         const DenoiserParams& theta_ref,
                                         const PreferenceDataset& dataset,
                                         const NoiseSchedule& schedule,
                                         int trials, const Rng& rng,
                                         int threads) {
  dataset.validate();
  if (trials < 1) throw std::invalid_argument("ranking_agreement: trials < 1");

  const std::size_t n_records = dataset.records.size();
  std::vector<double> tau_slot(n_records, 0.0);
  std::vector<double> ndcg_slot(n_records, 0.0);
  parallel_for(n_records, threads, [&](std::size_t ri) {
    const RankedPreferenceRecord& record = dataset.records[ri];
    std::vector<double> record_gains(record.phi.size());
    for (std::size_t i = 0; i < record.phi.size(); ++i)
      record_gains[i] = gain(record.phi[i]);
    double tau_sum = 0.0;
    double ndcg_sum = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
      Rng trial_rng = rng.stream(
          "eval.rank", static_cast<std::uint64_t>(ri) *
                               static_cast<std::uint64_t>(trials) +
                           static_cast<std::uint64_t>(trial));
      const ScoreVector sv =
          score_vector(theta, theta_ref, record, schedule, trial_rng);
      tau_sum += kendall_tau_scores(sv.s, record.tau);
      ndcg_sum += ndcg(record_gains, rank_ascending(sv.s), record.tau);
    }
    tau_slot[ri] = tau_sum / trials;
    ndcg_slot[ri] = ndcg_sum / trials;
  });

  RankingAgreementReport report;
  report.records = static_cast<int>(n_records);
  report.trials = trials;
  for (std::size_t i = 0; i < n_records; ++i) {
    report.mean_kendall_tau += tau_slot[i];
    report.mean_ndcg += ndcg_slot[i];
  }
  report.mean_kendall_tau /= static_cast<double>(n_records);
  report.mean_ndcg /= static_cast<double>(n_records);
  return report;
}

std::string format_win_rate_report(const WinRateReport& report) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "{\"model_a\":\"%s\",\"model_b\":\"%s\",\"conditions\":%d,"
                "\"samples_per_condition\":%d,\"win_fraction_a\":%.17g,"
                "\"half_width\":%.17g}",
                report.model_a.c_str(), report.model_b.c_str(),
                report.conditions, report.samples_per_condition,
                report.win_fraction_a, report.half_width);
  return std::string(buf);
}

void write_win_rate_report(const std::string& path,
                           const WinRateReport& report) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw std::runtime_error("report: cannot open for write: " + path);
  file << format_win_rate_report(report) << '\n';
  if (!file) throw std::runtime_error("report: write failed: " + path);
}

void write_comparison_log(const std::string& path,
                          const WinRateReport& report) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw std::runtime_error("log: cannot open for write: " + path);
  file << "condition\tsample\tvotes_a\tvotes_b\twinner\n";
  for (const ComparisonOutcome& outcome : report.outcomes)
    file << outcome.condition << '\t' << outcome.sample_index << '\t'
         << outcome.votes_a << '\t' << outcome.votes_b << '\t'
         << (outcome.a_won ? 'a' : 'b') << '\n';
  if (!file) throw std::runtime_error("log: write failed: " + path);
}

std::string format_ranking_agreement(const RankingAgreementReport& report) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "{\"records\":%d,\"trials\":%d,\"mean_kendall_tau\":%.17g,"
                "\"mean_ndcg\":%.17g}",
                report.records, report.trials, report.mean_kendall_tau,
                report.mean_ndcg);
  return std::string(buf);
}

void write_series(const std::string& path,
                  const std::vector<std::pair<int, double>>& series) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw std::runtime_error("series: cannot open for write: " + path);
  file << "step\tvalue\n";
  for (const auto& [step, value] : series) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%d\t%.17g\n", step, value);
    file << buf;
  }
  if (!file) throw std::runtime_error("series: write failed: " + path);
}

}  // namespace ranklab
