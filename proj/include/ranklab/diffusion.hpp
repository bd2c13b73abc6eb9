#pragma once

#include <span>
#include <vector>

#include "ranklab/denoiser.hpp"
#include "ranklab/optimizer.hpp"
#include "ranklab/rng.hpp"
#include "ranklab/schedule.hpp"
#include "ranklab/world.hpp"

namespace ranklab {

// x_t = alpha_t x + sigma_t eps. Throws std::invalid_argument for t outside
// [1, T] or mismatched lengths.
std::vector<double> forward_noise(std::span<const double> x, int t,
                                  std::span<const double> eps,
                                  const NoiseSchedule& schedule);

// One denoising-loss draw: the sampled timestep and per-coordinate noise.
struct NoiseDraw {
  int t = 1;
  std::vector<double> eps;
};

// t ~ Uniform{1..T}, eps ~ N(0, I)^dim. Draw order: t first, then the eps
// coordinates in index order.
NoiseDraw make_noise_draw(int dim, int total_steps, Rng& rng);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// Mean over the batch of |eps - eps_hat(x_t, c)|^2 at the given draws, with
// the exact reverse-accumulation gradient. Deterministic.
LossGrad ddpm_loss_and_grad_at(const DenoiserParams& params,
                               std::span<const Sample> batch,
                               const NoiseSchedule& schedule,
                               std::span<const NoiseDraw> draws);

// Sampling wrapper: one independent (t, eps) draw per batch element, in batch
// order. Throws std::invalid_argument on an empty batch.
LossGrad ddpm_loss_and_grad(const DenoiserParams& params,
                            std::span<const Sample> batch,
                            const NoiseSchedule& schedule, Rng& rng);

// Ancestral reverse-process sampling from x_T ~ N(0, I) down to x_0 under
// condition c. Deterministic given the rng state.
std::vector<double> ancestral_sample(const DenoiserParams& params,
                                     const NoiseSchedule& schedule,
                                     int condition, Rng& rng);

struct BaseTrainConfig {
  Architecture arch;
  int steps = 3000;
  int batch_size = 128;
  double learning_rate = 1e-3;
  AdamConfig adam;
};

// Trains a denoiser on draws from the world using the denoising objective.
// Reproducible given the rng seed; throws TrainingDiverged if the loss goes
// non-finite.
DenoiserParams train_base(const ToyWorld& world, const BaseTrainConfig& config,
                          Rng& rng);

}  // namespace ranklab
