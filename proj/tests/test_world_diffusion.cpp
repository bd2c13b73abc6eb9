#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <doctest.h>

#include "ranklab/diffusion.hpp"
#include "ranklab/errors.hpp"
#include "ranklab/pipeline.hpp"
#include "ranklab/rng.hpp"
#include "ranklab/world.hpp"

using namespace ranklab;

namespace {

Architecture tiny_arch() {
  Architecture arch;
  arch.dim = 2;
  arch.num_conditions = 3;
  arch.total_steps = 10;
  arch.time_embed_dim = 4;
  arch.cond_embed_dim = 3;
  arch.hidden = {8, 8};
  return arch;
}

double gaussian_log_density(std::span<const double> x,
                            std::span<const double> mean, double variance) {
  const double d = static_cast<double>(x.size());
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = x[i] - mean[i];
    sq += diff * diff;
  }
  return -0.5 * d * std::log(2.0 * std::numbers::pi * variance) -
         sq / (2.0 * variance);
}

}  // namespace

TEST_CASE("world: ring construction and validation") {
  const ToyWorld world = ToyWorld::ring(2, 8, 4.0, 0.25);
  world.validate();
  CHECK(world.num_conditions() == 8);
  for (int c = 0; c < 8; ++c) {
    const std::vector<double> mu = world.condition_mean(c);
    REQUIRE(mu.size() == 2);
    CHECK(std::hypot(mu[0], mu[1]) == doctest::Approx(4.0).epsilon(1e-12));
  }
  // Means are distinct points on the circle.
  const std::vector<double> m0 = world.condition_mean(0);
  const std::vector<double> m1 = world.condition_mean(1);
  CHECK(std::hypot(m0[0] - m1[0], m0[1] - m1[1]) > 1.0);

  CHECK_THROWS_AS(ToyWorld::ring(1, 8, 4.0, 0.25), std::invalid_argument);
  CHECK_THROWS_AS(ToyWorld::ring(2, 0, 4.0, 0.25), std::invalid_argument);
  CHECK_THROWS_AS(ToyWorld::ring(2, 8, 4.0, 0.0), std::invalid_argument);
}

TEST_CASE("world: validate rejects broken mixtures") {
  ToyWorld world = ToyWorld::ring(2, 4, 3.0, 0.5);
  SUBCASE("weights must sum to 1") {
    world.mixtures[1][0].weight = 0.7;
    CHECK_THROWS_AS(world.validate(), std::invalid_argument);
  }
  SUBCASE("positive variance") {
    world.mixtures[2][0].variance = -0.1;
    CHECK_THROWS_AS(world.validate(), std::invalid_argument);
  }
  SUBCASE("mean dimension") {
    world.mixtures[0][0].mean.push_back(1.0);
    CHECK_THROWS_AS(world.validate(), std::invalid_argument);
  }
}

TEST_CASE("world: sample validation") {
  const ToyWorld world = ToyWorld::ring(2, 4, 3.0, 0.5);
  world.validate_sample(Sample{{0.5, -0.5}, 2});
  CHECK_THROWS_AS(world.validate_sample(Sample{{0.5, -0.5}, 4}),
                  std::invalid_argument);
  CHECK_THROWS_AS(world.validate_sample(Sample{{0.5, -0.5}, -1}),
                  std::invalid_argument);
  CHECK_THROWS_AS(world.validate_sample(Sample{{0.5}, 1}),
                  std::invalid_argument);
}

TEST_CASE("world: conditional draws match the target moments") {
  const ToyWorld world = ToyWorld::ring(2, 8, 4.0, 0.25);
  Rng rng(7);
  const int c = 3;
  const std::vector<double> mu = world.condition_mean(c);
  const int n = 20000;
  std::vector<double> mean(2, 0.0);
  std::vector<double> m2(2, 0.0);
  for (int i = 0; i < n; ++i) {
    const std::vector<double> x = world.sample_data(c, rng);
    for (int j = 0; j < 2; ++j) {
      mean[j] += x[j];
      m2[j] += x[j] * x[j];
    }
  }
  for (int j = 0; j < 2; ++j) {
    mean[j] /= n;
    const double var = m2[j] / n - mean[j] * mean[j];
    // 4 standard errors of the mean / variance estimators.
    const double se_mean = std::sqrt(0.25 / n);
    const double se_var = 0.25 * std::sqrt(2.0 / (n - 1));
    CHECK(std::abs(mean[j] - mu[j]) < 4.0 * se_mean);
    CHECK(std::abs(var - 0.25) < 4.0 * se_var);
  }
}

TEST_CASE("world: log densities match the closed form") {
  const ToyWorld world = ToyWorld::ring(3, 5, 2.0, 0.4);
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int c = static_cast<int>(rng.below(5));
    std::vector<double> x(3);
    for (double& v : x) v = 3.0 * rng.normal();

    const double expected_cond = gaussian_log_density(
        x, world.condition_mean(c), world.mixtures[static_cast<std::size_t>(c)][0].variance);
    CHECK(world.log_density_condition(c, x) ==
          doctest::Approx(expected_cond).epsilon(1e-12));

    // Global density: equal-weight mixture over conditions via logsumexp.
    double max_term = -1e300;
    std::vector<double> terms;
    for (int cc = 0; cc < 5; ++cc) {
      terms.push_back(world.log_density_condition(cc, x));
      max_term = std::max(max_term, terms.back());
    }
    double sum = 0.0;
    for (double t : terms) sum += std::exp(t - max_term);
    const double expected_global = max_term + std::log(sum) - std::log(5.0);
    CHECK(world.log_density_global(x) ==
          doctest::Approx(expected_global).epsilon(1e-12));
  }
}

TEST_CASE("forward_noise: exact linear combination") {
  const NoiseSchedule schedule = make_schedule(100, ScheduleKind::linear_vp);
  const std::vector<double> x = {1.5, -2.0};
  const std::vector<double> zero = {0.0, 0.0};
  const std::vector<double> eps = {0.25, 0.75};
  for (int t : {1, 17, 100}) {
    const std::vector<double> noise_free = forward_noise(x, t, zero, schedule);
    CHECK(noise_free[0] == schedule.alpha(t) * x[0]);
    CHECK(noise_free[1] == schedule.alpha(t) * x[1]);

    const std::vector<double> signal_free = forward_noise(zero, t, eps, schedule);
    CHECK(signal_free[0] == schedule.sigma(t) * eps[0]);
    CHECK(signal_free[1] == schedule.sigma(t) * eps[1]);

    const std::vector<double> both = forward_noise(x, t, eps, schedule);
    CHECK(both[0] == schedule.alpha(t) * x[0] + schedule.sigma(t) * eps[0]);
  }
  CHECK_THROWS_AS(forward_noise(x, 0, eps, schedule), std::invalid_argument);
  CHECK_THROWS_AS(forward_noise(x, 101, eps, schedule), std::invalid_argument);
  const std::vector<double> short_eps = {1.0};
  CHECK_THROWS_AS(forward_noise(x, 5, short_eps, schedule),
                  std::invalid_argument);
}

TEST_CASE("forward_noise: Monte-Carlo mean and variance preservation") {
  const NoiseSchedule schedule = make_schedule(100, ScheduleKind::linear_vp);
  const std::vector<double> x = {0.8, -1.2};
  Rng rng(23);
  for (int t : {5, 50, 100}) {
    const int n = 10000;
    std::vector<double> mean(2, 0.0);
    std::vector<double> m2(2, 0.0);
    for (int i = 0; i < n; ++i) {
      const std::vector<double> eps = {rng.normal(), rng.normal()};
      const std::vector<double> noised = forward_noise(x, t, eps, schedule);
      for (int j = 0; j < 2; ++j) {
        mean[j] += noised[j];
        m2[j] += noised[j] * noised[j];
      }
    }
    const double sg = schedule.sigma(t);
    for (int j = 0; j < 2; ++j) {
      mean[j] /= n;
      const double var = m2[j] / n - mean[j] * mean[j];
      const double se_mean = sg / std::sqrt(static_cast<double>(n));
      const double se_var = sg * sg * std::sqrt(2.0 / (n - 1));
      CHECK(std::abs(mean[j] - schedule.alpha(t) * x[j]) < 3.0 * se_mean);
      CHECK(std::abs(var - sg * sg) < 4.0 * se_var);
    }
  }
}

TEST_CASE("denoiser: deterministic shapes, init and checksums") {
  const Architecture arch = tiny_arch();
  arch.validate();
  const ParamLayout layout = make_layout(arch);
  CHECK(layout.total == arch.param_count());

  Rng rng_a(5);
  Rng rng_b(5);
  const DenoiserParams a = DenoiserParams::init(arch, rng_a);
  const DenoiserParams b = DenoiserParams::init(arch, rng_b);
  a.validate();
  CHECK(a.values == b.values);
  CHECK(a.values.size() == arch.param_count());
  CHECK(params_checksum_hex(a) == params_checksum_hex(b));

  DenoiserParams c = a;
  c.values[layout.time_table + 2] += 1e-9;
  CHECK(params_checksum_hex(c) != params_checksum_hex(a));

  const std::vector<double> x_t = {0.3, -0.7};
  const std::vector<double> p1 = denoise_predict(a, x_t, 3, 1);
  const std::vector<double> p2 = denoise_predict(a, x_t, 3, 1);
  REQUIRE(p1.size() == 2);
  CHECK(p1 == p2);
  CHECK(std::isfinite(p1[0]));
  CHECK(std::isfinite(p1[1]));
  CHECK_THROWS_AS(denoise_predict(a, x_t, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(denoise_predict(a, x_t, 11, 1), std::invalid_argument);
  CHECK_THROWS_AS(denoise_predict(a, x_t, 3, 3), std::invalid_argument);
  const std::vector<double> bad_x = {1.0};
  CHECK_THROWS_AS(denoise_predict(a, bad_x, 3, 1), std::invalid_argument);
}

TEST_CASE("denoiser: checkpoint round-trip and corruption detection") {
  const Architecture arch = tiny_arch();
  Rng rng(9);
  const DenoiserParams params = DenoiserParams::init(arch, rng);
  CheckpointInfo info;
  info.seed = 1234;
  info.schedule_kind = "linear_vp";
  info.schedule_steps = 10;

  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / "ranklab_ckpt_test";
  std::filesystem::create_directories(dir);
  const std::filesystem::path path = dir / "model.ckpt";
  save_checkpoint(path, params, info);

  const Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.params.arch == arch);
  CHECK(loaded.params.values == params.values);
  CHECK(loaded.info.seed == 1234);
  CHECK(loaded.info.schedule_kind == "linear_vp");
  CHECK(loaded.info.schedule_steps == 10);

  SUBCASE("flipped payload byte -> checksum mismatch") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-9, std::ios::end);
    char byte = 0;
    f.seekg(-9, std::ios::end);
    f.read(&byte, 1);
    byte = static_cast<char>(byte ^ 0x40);
    f.seekp(-9, std::ios::end);
    f.write(&byte, 1);
    f.close();
    try {
      load_checkpoint(path);
      FAIL("expected FormatError");
    } catch (const FormatError& error) {
      CHECK(error.kind() == FormatError::Kind::checksum_mismatch);
    }
  }
  SUBCASE("bad magic -> malformed") {
    const std::filesystem::path bad = dir / "bad_magic.ckpt";
    std::ofstream(bad) << "NOT_A_CKPT v1\n{}\n";
    try {
      load_checkpoint(bad);
      FAIL("expected FormatError");
    } catch (const FormatError& error) {
      CHECK(error.kind() == FormatError::Kind::malformed);
    }
  }
  SUBCASE("future version -> version_mismatch") {
    std::ifstream in(path, std::ios::binary);
    std::string contents((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
    in.close();
    const auto pos = contents.find(" v1\n");
    REQUIRE(pos != std::string::npos);
    contents.replace(pos, 4, " v9\n");
    const std::filesystem::path bad = dir / "bad_version.ckpt";
    std::ofstream(bad, std::ios::binary) << contents;
    try {
      load_checkpoint(bad);
      FAIL("expected FormatError");
    } catch (const FormatError& error) {
      CHECK(error.kind() == FormatError::Kind::version_mismatch);
    }
  }
}

TEST_CASE("ddpm loss: perfect predictor reaches exactly zero") {
  // With every weight zeroed the network's output equals the output-layer
  // bias, so setting that bias to the drawn noise makes the prediction exact.
  const Architecture arch = tiny_arch();
  DenoiserParams params;
  params.arch = arch;
  params.values.assign(arch.param_count(), 0.0);
  const ParamLayout layout = make_layout(arch);
  const ParamLayout::Layer& out_layer = layout.layers.back();
  params.values[out_layer.biases + 0] = 0.4;
  params.values[out_layer.biases + 1] = -1.1;

  const NoiseSchedule schedule = make_schedule(10, ScheduleKind::linear_vp);
  const std::vector<Sample> batch = {Sample{{0.2, 0.9}, 0},
                                     Sample{{-0.4, 0.1}, 2}};
  const std::vector<NoiseDraw> draws = {NoiseDraw{3, {0.4, -1.1}},
                                        NoiseDraw{7, {0.4, -1.1}}};
  const LossGrad result = ddpm_loss_and_grad_at(params, batch, schedule, draws);
  CHECK(result.loss == 0.0);
}

TEST_CASE("ddpm loss: matches an independent recomputation") {
  const Architecture arch = tiny_arch();
  Rng rng(31);
  const DenoiserParams params = DenoiserParams::init(arch, rng);
  const NoiseSchedule schedule = make_schedule(10, ScheduleKind::linear_vp);

  std::vector<Sample> batch;
  std::vector<NoiseDraw> draws;
  for (int i = 0; i < 5; ++i) {
    batch.push_back(Sample{{rng.normal(), rng.normal()},
                           static_cast<int>(rng.below(3))});
    draws.push_back(make_noise_draw(2, 10, rng));
  }
  const LossGrad result = ddpm_loss_and_grad_at(params, batch, schedule, draws);

  double expected = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::vector<double> x_t =
        forward_noise(batch[i].x, draws[i].t, draws[i].eps, schedule);
    const std::vector<double> pred =
        denoise_predict(params, x_t, draws[i].t, batch[i].condition);
    for (int j = 0; j < 2; ++j) {
      const double diff = draws[i].eps[static_cast<std::size_t>(j)] -
                          pred[static_cast<std::size_t>(j)];
      expected += diff * diff;
    }
  }
  expected /= static_cast<double>(batch.size());
  CHECK(result.loss == doctest::Approx(expected).epsilon(1e-14));

  std::vector<Sample> empty;
  CHECK_THROWS_AS(ddpm_loss_and_grad(params, empty, schedule, rng),
                  std::invalid_argument);
}

TEST_CASE("ddpm loss: gradient matches central finite differences") {
  const Architecture arch = tiny_arch();
  Rng rng(47);
  const DenoiserParams params = DenoiserParams::init(arch, rng);
  const NoiseSchedule schedule = make_schedule(10, ScheduleKind::linear_vp);

  std::vector<Sample> batch;
  std::vector<NoiseDraw> draws;
  for (int i = 0; i < 4; ++i) {
    batch.push_back(Sample{{rng.normal(), rng.normal()},
                           static_cast<int>(rng.below(3))});
    draws.push_back(make_noise_draw(2, 10, rng));
  }
  const LossGrad result = ddpm_loss_and_grad_at(params, batch, schedule, draws);
  REQUIRE(result.grad.size() == params.values.size());

  Rng pick(48);
  const double max_rel = max_fd_rel_error(
      params,
      [&](const DenoiserParams& p) {
        return ddpm_loss_and_grad_at(p, batch, schedule, draws).loss;
      },
      result.grad, 120, 1e-5, pick);
  CHECK(max_rel <= 1e-4);
}

TEST_CASE("ddpm loss: fresh network on unit-normal data is positive") {
  const Architecture arch = tiny_arch();
  Rng rng(53);
  const DenoiserParams params = DenoiserParams::init(arch, rng);
  const NoiseSchedule schedule = make_schedule(10, ScheduleKind::linear_vp);
  std::vector<Sample> batch;
  for (int i = 0; i < 64; ++i) {
    batch.push_back(Sample{{rng.normal(), rng.normal()},
                           static_cast<int>(rng.below(3))});
  }
  const LossGrad result = ddpm_loss_and_grad(params, batch, schedule, rng);
  CHECK(result.loss > 0.2);
  CHECK(result.loss < 100.0);
  CHECK(std::isfinite(result.loss));
}

TEST_CASE("ancestral sampling: finite and bit-identical given the seed") {
  const Architecture arch = tiny_arch();
  Rng init_rng(61);
  const DenoiserParams params = DenoiserParams::init(arch, init_rng);
  const NoiseSchedule schedule = make_schedule(10, ScheduleKind::linear_vp);

  Rng rng_a(99);
  Rng rng_b(99);
  const std::vector<double> xa = ancestral_sample(params, schedule, 1, rng_a);
  const std::vector<double> xb = ancestral_sample(params, schedule, 1, rng_b);
  REQUIRE(xa.size() == 2);
  CHECK(xa == xb);
  CHECK(std::isfinite(xa[0]));
  CHECK(std::isfinite(xa[1]));

  // A different seed gives a different draw.
  Rng rng_c(100);
  const std::vector<double> xc = ancestral_sample(params, schedule, 1, rng_c);
  CHECK(xa != xc);
}

TEST_CASE("train_base: reproducible and actually learns the toy world") {
  const ToyWorld world = ToyWorld::ring(2, 3, 2.5, 0.25);
  BaseTrainConfig config;
  config.arch = tiny_arch();
  config.arch.num_conditions = 3;
  // Enough reverse steps for a non-degenerate sampling schedule, and enough
  // optimization to keep the early-timestep predictions from derailing the
  // reverse process (which amplifies errors as the signal level shrinks).
  config.arch.total_steps = 40;
  config.steps = 3000;
  config.batch_size = 32;
  config.learning_rate = 1e-3;

  Rng rng_a(17);
  const DenoiserParams a = train_base(world, config, rng_a);
  Rng rng_b(17);
  const DenoiserParams b = train_base(world, config, rng_b);
  CHECK(a.values == b.values);

  // The trained sampler should put its conditional means near the targets:
  // closer to the right condition's mean than to the farthest one.
  const NoiseSchedule schedule =
      make_schedule(config.arch.total_steps, ScheduleKind::linear_vp);
  Rng sample_rng(5);
  for (int c = 0; c < 3; ++c) {
    std::vector<double> mean(2, 0.0);
    const int n = 200;
    for (int i = 0; i < n; ++i) {
      const std::vector<double> x =
          ancestral_sample(a, schedule, c, sample_rng);
      mean[0] += x[0] / n;
      mean[1] += x[1] / n;
    }
    const std::vector<double> mu = world.condition_mean(c);
    const double err = std::hypot(mean[0] - mu[0], mean[1] - mu[1]);
    CHECK(err < 1.0);
  }
}

TEST_CASE("train_base: runaway learning rate reports divergence") {
  const ToyWorld world = ToyWorld::ring(2, 3, 2.5, 0.25);
  BaseTrainConfig config;
  config.arch = tiny_arch();
  config.arch.num_conditions = 3;
  config.steps = 50;
  config.batch_size = 8;
  // Large enough that the second step's activations overflow to infinity.
  config.learning_rate = 1e160;
  Rng rng(3);
  CHECK_THROWS_AS(train_base(world, config, rng), TrainingDiverged);
}
