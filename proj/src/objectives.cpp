#include "ranklab/objectives.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "ranklab/diffusion.hpp"
#include "ranklab/errors.hpp"
#include "ranklab/parallel.hpp"

namespace ranklab {

std::string to_string(Objective objective) {
  switch (objective) {
    case Objective::rankdpo: return "rankdpo";
    case Objective::dpo: return "dpo";
    case Objective::sft: return "sft";
    case Objective::weighted_sft: return "weighted_sft";
    case Objective::dpo_gain: return "dpo_gain";
  }
  throw std::logic_error("unknown Objective");
}

Objective objective_from_string(const std::string& name) {
  if (name == "rankdpo") return Objective::rankdpo;
  if (name == "dpo") return Objective::dpo;
  if (name == "sft") return Objective::sft;
  if (name == "weighted_sft") return Objective::weighted_sft;
  if (name == "dpo_gain") return Objective::dpo_gain;
  throw std::invalid_argument("unknown objective: " + name);
}

double gain(double phi) {
  if (!(phi >= 0.0 && phi <= 1.0))
    throw std::invalid_argument("gain: phi outside [0, 1]");
  return std::exp2(phi) - 1.0;
}

double discount(int rank) {
  if (rank < 1) throw std::invalid_argument("discount: rank < 1");
  return std::log1p(static_cast<double>(rank));
}

double PairWeights::unordered_sum() const {
  double total = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j) total += at(i, j);
  return total;
}

PairWeights pair_weights(const std::vector<double>& phi,
                         const std::vector<int>& tau) {
  const int k = static_cast<int>(phi.size());
  if (k < 2) throw std::invalid_argument("pair_weights: need k >= 2");
  if (tau.size() != phi.size())
    throw std::invalid_argument("pair_weights: phi/tau length mismatch");
  std::vector<bool> seen(static_cast<std::size_t>(k), false);
  for (int r : tau) {
    if (r < 1 || r > k || seen[static_cast<std::size_t>(r - 1)])
      throw std::invalid_argument("pair_weights: tau is not a permutation");
    seen[static_cast<std::size_t>(r - 1)] = true;
  }
  std::vector<double> g(phi.size());
  std::vector<double> inv_d(phi.size());
  for (std::size_t i = 0; i < phi.size(); ++i) {
    g[i] = gain(phi[i]);
    inv_d[i] = 1.0 / discount(tau[i]);
  }
  PairWeights weights;
  weights.k = k;
  weights.delta.assign(static_cast<std::size_t>(k) * static_cast<std::size_t>(k),
                       0.0);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      if (i == j) continue;
      const double value =
          std::abs(g[static_cast<std::size_t>(i)] - g[static_cast<std::size_t>(j)]) *
          std::abs(inv_d[static_cast<std::size_t>(i)] -
                   inv_d[static_cast<std::size_t>(j)]);
      weights.delta[static_cast<std::size_t>(i) * static_cast<std::size_t>(k) +
                    static_cast<std::size_t>(j)] = value;
    }
  }
  return weights;
}

RecordDraw make_record_draw(int k, int dim, int total_steps, Rng& rng) {
  if (k < 1 || dim < 1 || total_steps < 1)
    throw std::invalid_argument("make_record_draw: non-positive extent");
  RecordDraw draw;
  draw.t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(total_steps)));
  draw.eps.resize(static_cast<std::size_t>(k));
  for (auto& eps : draw.eps) {
    eps.resize(static_cast<std::size_t>(dim));
    for (double& e : eps) e = rng.normal();
  }
  return draw;
}

double score_from_predictions(std::span<const double> eps,
                              std::span<const double> pred_theta,
                              std::span<const double> pred_ref) {
  if (eps.size() != pred_theta.size() || eps.size() != pred_ref.size())
    throw std::invalid_argument("score: prediction length mismatch");
  double err_theta = 0.0;
  double err_ref = 0.0;
  for (std::size_t d = 0; d < eps.size(); ++d) {
    const double a = eps[d] - pred_theta[d];
    const double b = eps[d] - pred_ref[d];
    err_theta += a * a;
    err_ref += b * b;
  }
  return err_theta - err_ref;
}

namespace {

double softplus(double u) {
  return u > 0.0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u));
}

double sigmoid(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

void check_score_inputs(const DenoiserParams& theta,
                        const DenoiserParams& theta_ref,
                        const NoiseSchedule& schedule) {
  if (!(theta.arch == theta_ref.arch))
    throw std::invalid_argument("score: architecture mismatch");
  if (theta.arch.total_steps != schedule.total_steps)
    throw std::invalid_argument("score: schedule step count mismatch");
}

void check_draw(const RankedPreferenceRecord& record, const RecordDraw& draw,
                int dim, int total_steps) {
  if (draw.t < 1 || draw.t > total_steps)
    throw std::invalid_argument("score: draw timestep out of range");
  if (static_cast<int>(draw.eps.size()) != record.k())
    throw std::invalid_argument("score: draw noise count != k");
  for (const auto& eps : draw.eps)
    if (eps.size() != static_cast<std::size_t>(dim))
      throw std::invalid_argument("score: draw noise has wrong dimension");
}

// Forward passes for one candidate, keeping the policy cache for backward.
struct ScoredCandidate {
  double s = 0.0;
  ForwardCache cache;  // policy (theta) activations
};

void score_one(const DenoiserParams& theta, const DenoiserParams& theta_ref,
               std::span<const double> x, std::span<const double> eps, int t,
               int condition, const NoiseSchedule& schedule,
               ForwardCache& ref_cache, ScoredCandidate& out) {
  const std::vector<double> x_t = forward_noise(x, t, eps, schedule);
  denoiser_forward(theta, x_t, t, condition, out.cache);
  denoiser_forward(theta_ref, x_t, t, condition, ref_cache);
  out.s = score_from_predictions(eps, out.cache.out, ref_cache.out);
}

// Adds the gradient of (g * s_candidate) with respect to theta, where the
// candidate's policy forward pass is already cached.
void backward_score(const DenoiserParams& theta, const ScoredCandidate& scored,
                    std::span<const double> eps, int t, int condition, double g,
                    std::vector<double>& dout_buf, std::span<double> grad) {
  dout_buf.resize(eps.size());
  for (std::size_t d = 0; d < eps.size(); ++d)
    dout_buf[d] = 2.0 * g * (scored.cache.out[d] - eps[d]);
  denoiser_backward(theta, scored.cache, t, condition, dout_buf, grad);
}

// Shared batch-evaluation scaffolding: per-record losses and gradients go to
// per-record slots, then reduce in record order so results do not depend on
// the thread count.
template <typename PerRecord>
PrefLossResult reduce_batch(std::size_t batch_size, std::size_t param_count,
                            int threads, const PerRecord& per_record) {
  std::vector<double> losses(batch_size, 0.0);
  std::vector<double> weights(batch_size, 0.0);
  std::vector<std::vector<double>> grads(batch_size);
  parallel_for(batch_size, threads, [&](std::size_t i) {
    grads[i].assign(param_count, 0.0);
    per_record(i, losses[i], weights[i], grads[i]);
  });
  PrefLossResult result;
  result.grad.assign(param_count, 0.0);
  for (std::size_t i = 0; i < batch_size; ++i) {
    result.loss += losses[i];
    result.sum_delta += weights[i];
    for (std::size_t p = 0; p < param_count; ++p) result.grad[p] += grads[i][p];
  }
  const double inv_b = 1.0 / static_cast<double>(batch_size);
  result.loss *= inv_b;
  result.sum_delta *= inv_b;
  for (double& g : result.grad) g *= inv_b;
  return result;
}

void check_batch(const DenoiserParams& theta, const DenoiserParams& theta_ref,
                 std::span<const RankedPreferenceRecord> batch,
                 const NoiseSchedule& schedule,
                 std::span<const RecordDraw> draws) {
  check_score_inputs(theta, theta_ref, schedule);
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  if (draws.size() != batch.size())
    throw std::invalid_argument("loss: draw count != batch size");
}

std::vector<RecordDraw> draws_for(std::span<const RankedPreferenceRecord> batch,
                                  int dim, int total_steps, Rng& rng) {
  std::vector<RecordDraw> draws;
  draws.reserve(batch.size());
  for (const auto& record : batch)
    draws.push_back(make_record_draw(record.k(), dim, total_steps, rng));
  return draws;
}

}  // namespace

ScoreVector score_vector_at(const DenoiserParams& theta,
                            const DenoiserParams& theta_ref,
                            const RankedPreferenceRecord& record,
                            const NoiseSchedule& schedule,
                            const RecordDraw& draw) {
  check_score_inputs(theta, theta_ref, schedule);
  record.validate(theta.arch.dim);
  check_draw(record, draw, theta.arch.dim, schedule.total_steps);
  ScoreVector sv;
  sv.t = draw.t;
  sv.eps = draw.eps;
  sv.s.resize(static_cast<std::size_t>(record.k()));
  ForwardCache ref_cache;
  ScoredCandidate scored;
  for (int i = 0; i < record.k(); ++i) {
    score_one(theta, theta_ref, record.candidates[static_cast<std::size_t>(i)],
              draw.eps[static_cast<std::size_t>(i)], draw.t, record.condition,
              schedule, ref_cache, scored);
    sv.s[static_cast<std::size_t>(i)] = scored.s;
  }
  return sv;
}

ScoreVector score_vector(const DenoiserParams& theta,
                         const DenoiserParams& theta_ref,
                         const RankedPreferenceRecord& record,
                         const NoiseSchedule& schedule, Rng& rng) {
  const RecordDraw draw = make_record_draw(record.k(), theta.arch.dim,
                                           schedule.total_steps, rng);
  return score_vector_at(theta, theta_ref, record, schedule, draw);
}

PrefLossResult rankdpo_loss_and_grad_at(const DenoiserParams& theta,
                                        const DenoiserParams& theta_ref,
                                        std::span<const RankedPreferenceRecord> batch,
                                        const NoiseSchedule& schedule,
                                        std::span<const RecordDraw> draws,
                                        const RankDpoOptions& options,
                                        int threads) {
  check_batch(theta, theta_ref, batch, schedule, draws);
  if (!(options.beta > 0.0) || !std::isfinite(options.beta))
    throw std::invalid_argument("loss: beta must be positive and finite");
  const int dim = theta.arch.dim;
  return reduce_batch(
      batch.size(), theta.values.size(), threads,
      [&](std::size_t r, double& loss, double& weight,
          std::vector<double>& grad) {
        const RankedPreferenceRecord& record = batch[r];
        const RecordDraw& draw = draws[r];
        record.validate(dim);
        check_draw(record, draw, dim, schedule.total_steps);
        const int k = record.k();

        std::vector<ScoredCandidate> scored(static_cast<std::size_t>(k));
        ForwardCache ref_cache;
        for (int i = 0; i < k; ++i)
          score_one(theta, theta_ref, record.candidates[static_cast<std::size_t>(i)],
                    draw.eps[static_cast<std::size_t>(i)], draw.t,
                    record.condition, schedule, ref_cache,
                    scored[static_cast<std::size_t>(i)]);

        const PairWeights weights = options.weights_override
                                        ? options.weights_override(record)
                                        : pair_weights(record.phi, record.tau);
        if (weights.k != k)
          throw std::invalid_argument("loss: pair-weight size mismatch");
        const double denom =
            options.normalize_pairs ? static_cast<double>(k * (k - 1) / 2) : 1.0;

        // One term per unordered pair, oriented better-ranked vs worse-ranked.
        std::vector<double> g(static_cast<std::size_t>(k), 0.0);
        for (int i = 0; i < k; ++i) {
          for (int j = i + 1; j < k; ++j) {
            const bool i_better = record.tau[static_cast<std::size_t>(i)] <
                                  record.tau[static_cast<std::size_t>(j)];
            const int w = i_better ? i : j;
            const int l = i_better ? j : i;
            const double delta = weights.at(i, j);
            const double margin =
                options.beta * (scored[static_cast<std::size_t>(w)].s -
                                scored[static_cast<std::size_t>(l)].s);
            loss += delta * softplus(margin);
            weight += delta;
            const double coef = delta * options.beta * sigmoid(margin);
            g[static_cast<std::size_t>(w)] += coef;
            g[static_cast<std::size_t>(l)] -= coef;
          }
        }
        loss /= denom;
        weight /= denom;
        std::vector<double> dout;
        for (int i = 0; i < k; ++i) {
          const double gi = g[static_cast<std::size_t>(i)] / denom;
          if (gi == 0.0) continue;
          backward_score(theta, scored[static_cast<std::size_t>(i)],
                         draw.eps[static_cast<std::size_t>(i)], draw.t,
                         record.condition, gi, dout, grad);
        }
      });
}

PrefLossResult rankdpo_loss_and_grad(const DenoiserParams& theta,
                                     const DenoiserParams& theta_ref,
                                     std::span<const RankedPreferenceRecord> batch,
                                     const NoiseSchedule& schedule, double beta,
                                     Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  const auto draws =
      draws_for(batch, theta.arch.dim, schedule.total_steps, rng);
  RankDpoOptions options;
  options.beta = beta;
  return rankdpo_loss_and_grad_at(theta, theta_ref, batch, schedule, draws,
                                  options);
}

namespace {

// Common body of the (best, worst) pairwise losses; `pair_scale` multiplies
// both the loss term and its gradient (1 for plain pairwise, the gain gap for
// the gain-weighted variant).
PrefLossResult pairwise_loss_impl(const DenoiserParams& theta,
                                  const DenoiserParams& theta_ref,
                                  std::span<const RankedPreferenceRecord> batch,
                                  const NoiseSchedule& schedule,
                                  std::span<const RecordDraw> draws, double beta,
                                  bool gain_weighted, int threads) {
  check_batch(theta, theta_ref, batch, schedule, draws);
  if (!(beta > 0.0) || !std::isfinite(beta))
    throw std::invalid_argument("loss: beta must be positive and finite");
  const int dim = theta.arch.dim;
  return reduce_batch(
      batch.size(), theta.values.size(), threads,
      [&](std::size_t r, double& loss, double& weight,
          std::vector<double>& grad) {
        const RankedPreferenceRecord& record = batch[r];
        const RecordDraw& draw = draws[r];
        record.validate(dim);
        check_draw(record, draw, dim, schedule.total_steps);
        const int w = best_index(record);
        const int l = worst_index(record);

        const double pair_scale =
            gain_weighted
                ? std::abs(gain(record.phi[static_cast<std::size_t>(w)]) -
                           gain(record.phi[static_cast<std::size_t>(l)]))
                : 1.0;
        weight = pair_scale;
        if (pair_scale == 0.0) return;  // zero-gap records contribute nothing

        ScoredCandidate sw, sl;
        ForwardCache ref_cache;
        score_one(theta, theta_ref, record.candidates[static_cast<std::size_t>(w)],
                  draw.eps[static_cast<std::size_t>(w)], draw.t,
                  record.condition, schedule, ref_cache, sw);
        score_one(theta, theta_ref, record.candidates[static_cast<std::size_t>(l)],
                  draw.eps[static_cast<std::size_t>(l)], draw.t,
                  record.condition, schedule, ref_cache, sl);

        const double margin = beta * (sw.s - sl.s);
        loss = pair_scale * softplus(margin);
        const double coef = pair_scale * beta * sigmoid(margin);
        std::vector<double> dout;
        backward_score(theta, sw, draw.eps[static_cast<std::size_t>(w)], draw.t,
                       record.condition, coef, dout, grad);
        backward_score(theta, sl, draw.eps[static_cast<std::size_t>(l)], draw.t,
                       record.condition, -coef, dout, grad);
      });
}

}  // namespace

PrefLossResult dpo_loss_and_grad_at(const DenoiserParams& theta,
                                    const DenoiserParams& theta_ref,
                                    std::span<const RankedPreferenceRecord> batch,
                                    const NoiseSchedule& schedule,
                                    std::span<const RecordDraw> draws,
                                    double beta, int threads) {
  return pairwise_loss_impl(theta, theta_ref, batch, schedule, draws, beta,
                            /*gain_weighted=*/false, threads);
}

PrefLossResult dpo_loss_and_grad(const DenoiserParams& theta,
                                 const DenoiserParams& theta_ref,
                                 std::span<const RankedPreferenceRecord> batch,
                                 const NoiseSchedule& schedule, double beta,
                                 Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  const auto draws =
      draws_for(batch, theta.arch.dim, schedule.total_steps, rng);
  return dpo_loss_and_grad_at(theta, theta_ref, batch, schedule, draws, beta);
}

PrefLossResult dpo_gain_loss_and_grad_at(const DenoiserParams& theta,
                                         const DenoiserParams& theta_ref,
                                         std::span<const RankedPreferenceRecord> batch,
                                         const NoiseSchedule& schedule,
                                         std::span<const RecordDraw> draws,
                                         double beta, int threads) {
  return pairwise_loss_impl(theta, theta_ref, batch, schedule, draws, beta,
                            /*gain_weighted=*/true, threads);
}

PrefLossResult dpo_gain_loss_and_grad(const DenoiserParams& theta,
                                      const DenoiserParams& theta_ref,
                                      std::span<const RankedPreferenceRecord> batch,
                                      const NoiseSchedule& schedule, double beta,
                                      Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  const auto draws =
      draws_for(batch, theta.arch.dim, schedule.total_steps, rng);
  return dpo_gain_loss_and_grad_at(theta, theta_ref, batch, schedule, draws,
                                   beta);
}

namespace {

// Denoising loss and gradient for one candidate under the policy only.
double candidate_denoise_loss(const DenoiserParams& theta,
                              std::span<const double> x,
                              std::span<const double> eps, int t, int condition,
                              const NoiseSchedule& schedule, double weight,
                              ForwardCache& cache, std::vector<double>& dout,
                              std::vector<double>& grad) {
  const std::vector<double> x_t = forward_noise(x, t, eps, schedule);
  denoiser_forward(theta, x_t, t, condition, cache);
  double err = 0.0;
  dout.resize(eps.size());
  for (std::size_t d = 0; d < eps.size(); ++d) {
    const double diff = cache.out[d] - eps[d];
    err += diff * diff;
    dout[d] = 2.0 * weight * diff;
  }
  if (weight != 0.0)
    denoiser_backward(theta, cache, t, condition, dout, grad);
  return err;
}

void check_policy_batch(const DenoiserParams& theta,
                        std::span<const RankedPreferenceRecord> batch,
                        const NoiseSchedule& schedule,
                        std::span<const RecordDraw> draws) {
  if (theta.arch.total_steps != schedule.total_steps)
    throw std::invalid_argument("loss: schedule step count mismatch");
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  if (draws.size() != batch.size())
    throw std::invalid_argument("loss: draw count != batch size");
}

}  // namespace

PrefLossResult sft_loss_and_grad_at(const DenoiserParams& theta,
                                    std::span<const RankedPreferenceRecord> batch,
                                    const NoiseSchedule& schedule,
                                    std::span<const RecordDraw> draws,
                                    int threads) {
  check_policy_batch(theta, batch, schedule, draws);
  const int dim = theta.arch.dim;
  return reduce_batch(
      batch.size(), theta.values.size(), threads,
      [&](std::size_t r, double& loss, double& weight,
          std::vector<double>& grad) {
        const RankedPreferenceRecord& record = batch[r];
        const RecordDraw& draw = draws[r];
        record.validate(dim);
        check_draw(record, draw, dim, schedule.total_steps);
        const int w = best_index(record);
        ForwardCache cache;
        std::vector<double> dout;
        loss = candidate_denoise_loss(
            theta, record.candidates[static_cast<std::size_t>(w)],
            draw.eps[static_cast<std::size_t>(w)], draw.t, record.condition,
            schedule, 1.0, cache, dout, grad);
        weight = 0.0;  // no pair weights in this objective
      });
}

PrefLossResult sft_loss_and_grad(const DenoiserParams& theta,
                                 std::span<const RankedPreferenceRecord> batch,
                                 const NoiseSchedule& schedule, Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  const auto draws =
      draws_for(batch, theta.arch.dim, schedule.total_steps, rng);
  return sft_loss_and_grad_at(theta, batch, schedule, draws);
}

PrefLossResult weighted_sft_loss_and_grad_at(
    const DenoiserParams& theta, std::span<const RankedPreferenceRecord> batch,
    const NoiseSchedule& schedule, std::span<const RecordDraw> draws,
    const WeightSource& weight_source, int threads) {
  check_policy_batch(theta, batch, schedule, draws);
  const int dim = theta.arch.dim;
  return reduce_batch(
      batch.size(), theta.values.size(), threads,
      [&](std::size_t r, double& loss, double& weight,
          std::vector<double>& grad) {
        const RankedPreferenceRecord& record = batch[r];
        const RecordDraw& draw = draws[r];
        record.validate(dim);
        check_draw(record, draw, dim, schedule.total_steps);
        const std::vector<double> weights =
            weight_source ? weight_source(record) : record.phi;
        if (weights.size() != record.candidates.size())
          throw std::invalid_argument("loss: weight count != k");
        double wsum = 0.0;
        for (double v : weights) {
          if (!(v >= 0.0) || !std::isfinite(v))
            throw std::invalid_argument("loss: negative or non-finite weight");
          wsum += v;
        }
        weight = 0.0;  // no pair weights in this objective
        if (wsum == 0.0) return;  // fully tied record: no preferred candidate

        ForwardCache cache;
        std::vector<double> dout;
        for (int i = 0; i < record.k(); ++i) {
          const double wi = weights[static_cast<std::size_t>(i)] / wsum;
          const double err = candidate_denoise_loss(
              theta, record.candidates[static_cast<std::size_t>(i)],
              draw.eps[static_cast<std::size_t>(i)], draw.t, record.condition,
              schedule, wi, cache, dout, grad);
          loss += wi * err;
        }
      });
}

PrefLossResult weighted_sft_loss_and_grad(
    const DenoiserParams& theta, std::span<const RankedPreferenceRecord> batch,
    const NoiseSchedule& schedule, Rng& rng, const WeightSource& weight_source) {
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  const auto draws =
      draws_for(batch, theta.arch.dim, schedule.total_steps, rng);
  return weighted_sft_loss_and_grad_at(theta, batch, schedule, draws,
                                       weight_source);
}

void TrainConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("train config: steps < 1");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size < 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("train config: learning_rate must be positive");
  if (!(beta > 0.0) || !std::isfinite(beta))
    throw std::invalid_argument("train config: beta must be positive");
}

std::string format_metrics_line(const StepMetrics& metrics) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "{\"step\":%d,\"objective\":\"%s\",\"loss\":%.17g,"
                "\"grad_norm\":%.17g,\"sum_delta\":%.17g,\"wall_ms\":%.3f}",
                metrics.step, to_string(metrics.objective).c_str(), metrics.loss,
                metrics.grad_norm, metrics.sum_delta, metrics.wall_ms);
  return std::string(buf);
}

DenoiserParams train_preference(const PreferenceDataset& dataset,
                                const DenoiserParams& theta_init,
                                const DenoiserParams& theta_ref,
                                const NoiseSchedule& schedule,
                                const TrainConfig& config, int threads,
                                const MetricsSink& sink,
                                const StepObserver& observer) {
  config.validate();
  dataset.validate();
  theta_init.validate();
  theta_ref.validate();
  if (!(theta_init.arch == theta_ref.arch))
    throw std::invalid_argument("train: policy/reference architecture mismatch");
  if (theta_init.arch.dim != dataset.meta.dim)
    throw std::invalid_argument("train: model dim differs from dataset");
  if (theta_init.arch.num_conditions < dataset.meta.num_conditions)
    throw std::invalid_argument("train: model has too few conditions");
  if (schedule.total_steps != theta_init.arch.total_steps)
    throw std::invalid_argument("train: schedule step count mismatch");
  if (schedule.total_steps != dataset.meta.schedule_steps)
    throw std::invalid_argument("train: dataset was built for another schedule");

  DenoiserParams theta = theta_init;
  Adam optimizer(theta.values.size(), config.learning_rate, config.adam);
  const Rng base(config.seed);
  const std::size_t num_records = dataset.records.size();

  for (int step = 0; step < config.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng = base.stream("train.step", static_cast<std::uint64_t>(step));

    // Batch indices first, then the per-record noising draws, in batch order.
    std::vector<RankedPreferenceRecord> batch;
    batch.reserve(static_cast<std::size_t>(config.batch_size));
    for (int b = 0; b < config.batch_size; ++b)
      batch.push_back(
          dataset.records[rng.below(static_cast<std::uint64_t>(num_records))]);
    const auto draws =
        draws_for(batch, theta.arch.dim, schedule.total_steps, rng);

    PrefLossResult result;
    switch (config.objective) {
      case Objective::rankdpo: {
        RankDpoOptions options;
        options.beta = config.beta;
        options.normalize_pairs = config.normalize_pairs;
        result = rankdpo_loss_and_grad_at(theta, theta_ref, batch, schedule,
                                          draws, options, threads);
        break;
      }
      case Objective::dpo:
        result = dpo_loss_and_grad_at(theta, theta_ref, batch, schedule, draws,
                                      config.beta, threads);
        break;
      case Objective::sft:
        result = sft_loss_and_grad_at(theta, batch, schedule, draws, threads);
        break;
      case Objective::weighted_sft:
        result = weighted_sft_loss_and_grad_at(theta, batch, schedule, draws,
                                               {}, threads);
        break;
      case Objective::dpo_gain:
        result = dpo_gain_loss_and_grad_at(theta, theta_ref, batch, schedule,
                                           draws, config.beta, threads);
        break;
    }

    if (!std::isfinite(result.loss))
      throw TrainingDiverged(step, "preference loss became non-finite");

    optimizer.step(theta.values, result.grad);

    if (sink) {
      double norm2 = 0.0;
      for (double g : result.grad) norm2 += g * g;
      StepMetrics metrics;
      metrics.step = step;
      metrics.objective = config.objective;
      metrics.loss = result.loss;
      metrics.grad_norm = std::sqrt(norm2);
      metrics.sum_delta = result.sum_delta;
      metrics.wall_ms =
          std::chrono::duration<double, std::milli>(
              std::chrono::steady_clock::now() - t0)
              .count();
      sink(metrics);
    }
    if (observer) observer(step, theta);
  }
  return theta;
}

}  // namespace ranklab
