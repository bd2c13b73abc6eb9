#include "ranklab/diffusion.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ranklab/errors.hpp"

namespace ranklab {

std::vector<double> forward_noise(std::span<const double> x, int t,
                                  std::span<const double> eps,
                                  const NoiseSchedule& schedule) {
  if (t < 1 || t > schedule.total_steps)
    throw std::invalid_argument("forward_noise: timestep out of range");
  if (x.size() != eps.size())
    throw std::invalid_argument("forward_noise: x and eps length mismatch");
  const double a = schedule.alpha(t);
  const double s = schedule.sigma(t);
  std::vector<double> x_t(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) x_t[i] = a * x[i] + s * eps[i];
  return x_t;
}

NoiseDraw make_noise_draw(int dim, int total_steps, Rng& rng) {
  NoiseDraw draw;
  draw.t = rng.uniform_int(1, total_steps);
  draw.eps.resize(static_cast<std::size_t>(dim));
  for (auto& e : draw.eps) e = rng.normal();
  return draw;
}

LossGrad ddpm_loss_and_grad_at(const DenoiserParams& params,
                               std::span<const Sample> batch,
                               const NoiseSchedule& schedule,
                               std::span<const NoiseDraw> draws) {
  if (batch.empty()) throw std::invalid_argument("ddpm loss: empty batch");
  if (draws.size() != batch.size())
    throw std::invalid_argument("ddpm loss: one draw per batch element");

  LossGrad result;
  result.grad.assign(params.arch.param_count(), 0.0);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  ForwardCache cache;
  std::vector<double> d_out(static_cast<std::size_t>(params.arch.dim));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Sample& sample = batch[b];
    const NoiseDraw& draw = draws[b];
    const std::vector<double> x_t =
        forward_noise(sample.x, draw.t, draw.eps, schedule);
    denoiser_forward(params, x_t, draw.t, sample.condition, cache);
    double sq = 0.0;
    for (std::size_t i = 0; i < cache.out.size(); ++i) {
      const double r = cache.out[i] - draw.eps[i];
      sq += r * r;
      d_out[i] = 2.0 * r * inv_batch;
    }
    result.loss += sq * inv_batch;
    denoiser_backward(params, cache, draw.t, sample.condition, d_out,
                      result.grad);
  }
  return result;
}

LossGrad ddpm_loss_and_grad(const DenoiserParams& params,
                            std::span<const Sample> batch,
                            const NoiseSchedule& schedule, Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("ddpm loss: empty batch");
  std::vector<NoiseDraw> draws;
  draws.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b)
    draws.push_back(make_noise_draw(params.arch.dim, schedule.total_steps, rng));
  return ddpm_loss_and_grad_at(params, batch, schedule, draws);
}

std::vector<double> ancestral_sample(const DenoiserParams& params,
                                     const NoiseSchedule& schedule,
                                     int condition, Rng& rng) {
  const auto dim = static_cast<std::size_t>(params.arch.dim);
  std::vector<double> x(dim);
  for (auto& v : x) v = rng.normal();

  ForwardCache cache;
  for (int t = schedule.total_steps; t >= 1; --t) {
    const double abar_t = schedule.alpha(t) * schedule.alpha(t);
    const double abar_prev =
        t > 1 ? schedule.alpha(t - 1) * schedule.alpha(t - 1) : 1.0;
    const double step_alpha = abar_t / abar_prev;
    const double beta = 1.0 - step_alpha;

    denoiser_forward(params, x, t, condition, cache);

    const double sigma_t = schedule.sigma(t);
    const double one_minus_abar = 1.0 - abar_t;
    if (one_minus_abar <= 0.0) {
      // Noise-free step; the forward process was the identity here.
      for (auto& v : x) v /= std::sqrt(step_alpha);
      continue;
    }

    // Posterior mean via the predicted x0.
    const double coef_eps = beta / sigma_t;
    for (std::size_t i = 0; i < dim; ++i)
      x[i] = (x[i] - coef_eps * cache.out[i]) / std::sqrt(step_alpha);

    if (t > 1) {
      const double post_var = (1.0 - abar_prev) / one_minus_abar * beta;
      const double sd = std::sqrt(std::max(post_var, 0.0));
      for (auto& v : x) v += sd * rng.normal();
    }
  }
  return x;
}

DenoiserParams train_base(const ToyWorld& world, const BaseTrainConfig& config,
                          Rng& rng) {
  if (config.steps < 0) throw std::invalid_argument("train_base: bad step count");
  if (config.batch_size < 1)
    throw std::invalid_argument("train_base: bad batch size");
  world.validate();
  if (world.dim != config.arch.dim ||
      world.num_conditions() != config.arch.num_conditions)
    throw std::invalid_argument("train_base: world/architecture mismatch");

  const NoiseSchedule schedule = make_schedule(
      config.arch.total_steps, ScheduleKind::linear_vp);

  Rng init_rng = rng.stream("init");
  DenoiserParams params = DenoiserParams::init(config.arch, init_rng);
  Adam adam(params.values.size(), config.learning_rate, config.adam);

  std::vector<Sample> batch(static_cast<std::size_t>(config.batch_size));
  for (int step = 0; step < config.steps; ++step) {
    Rng step_rng = rng.stream("step", static_cast<std::uint64_t>(step));
    for (auto& sample : batch) sample = world.sample_pair(step_rng);
    const LossGrad lg = ddpm_loss_and_grad(params, batch, schedule, step_rng);
    if (!std::isfinite(lg.loss))
      throw TrainingDiverged(step, "train_base: non-finite loss at step " +
                                       std::to_string(step));
    adam.step(params.values, lg.grad);
  }
  return params;
}

}  // namespace ranklab
