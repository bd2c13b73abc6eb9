#include <cmath>
#include <stdexcept>
#include <vector>

#include <doctest.h>

#include "ranklab/rewards.hpp"
#include "ranklab/rng.hpp"
#include "ranklab/world.hpp"

using namespace ranklab;

namespace {

RewardModel noise_free(RewardKind kind, double mix_weight = 1.0) {
  RewardModel model;
  model.id = "probe";
  model.kind = kind;
  model.mix_weight = mix_weight;
  model.noise_scale = 0.0;
  return model;
}

}  // namespace

TEST_CASE("rewards: alignment peaks exactly at the condition mean") {
  const ToyWorld world = ToyWorld::ring(2, 8, 4.0, 0.25);
  const RewardModel model = noise_free(RewardKind::alignment);
  for (int c = 0; c < 8; ++c) {
    const Sample at_mean{world.condition_mean(c), c};
    CHECK(score(model, world, at_mean) == 0.0);
  }
  // Any perturbed point scores strictly lower.
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int c = static_cast<int>(rng.below(8));
    std::vector<double> x = world.condition_mean(c);
    x[0] += 0.01 + std::abs(rng.normal());
    x[1] += rng.normal();
    CHECK(score(model, world, Sample{x, c}) < 0.0);
  }
}

TEST_CASE("rewards: quality is monotone in the true density") {
  const ToyWorld world = ToyWorld::ring(2, 8, 4.0, 0.25);
  const RewardModel model = noise_free(RewardKind::quality);
  const std::vector<double> mu = world.condition_mean(2);
  const Sample dense{mu, 0};  // on a mode of the global mixture
  const Sample sparse{{20.0, -20.0}, 0};
  CHECK(score(model, world, dense) > score(model, world, sparse));
  CHECK(score(model, world, dense) ==
        doctest::Approx(world.log_density_global(mu)).epsilon(1e-12));
}

TEST_CASE("rewards: mixed blends the two pure kinds") {
  const ToyWorld world = ToyWorld::ring(2, 6, 3.0, 0.5);
  const RewardModel align = noise_free(RewardKind::alignment);
  const RewardModel quality = noise_free(RewardKind::quality);
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int c = static_cast<int>(rng.below(6));
    const Sample s{{3.0 * rng.normal(), 3.0 * rng.normal()}, c};

    const RewardModel pure_align = noise_free(RewardKind::mixed, 1.0);
    CHECK(score(pure_align, world, s) == score(align, world, s));

    const RewardModel pure_quality = noise_free(RewardKind::mixed, 0.0);
    CHECK(score(pure_quality, world, s) == score(quality, world, s));

    const RewardModel half = noise_free(RewardKind::mixed, 0.5);
    const double expected =
        0.5 * score(align, world, s) + 0.5 * score(quality, world, s);
    CHECK(score(half, world, s) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("rewards: jitter is deterministic, seed-keyed and order-free") {
  const ToyWorld world = ToyWorld::ring(2, 4, 3.0, 0.25);
  RewardModel model = noise_free(RewardKind::alignment);
  model.noise_scale = 0.1;
  model.noise_seed = 77;

  const Sample a{{0.5, -1.0}, 1};
  const Sample b{{1.5, 0.25}, 3};

  // Same inputs, same score, regardless of evaluation order.
  const double a1 = score(model, world, a);
  const double b1 = score(model, world, b);
  const double b2 = score(model, world, b);
  const double a2 = score(model, world, a);
  CHECK(a1 == a2);
  CHECK(b1 == b2);

  // The jitter really is nonzero and depends on the seed.
  RewardModel other = model;
  other.noise_seed = 78;
  CHECK(score(model, world, a) != score(noise_free(RewardKind::alignment), world, a));
  CHECK(score(other, world, a) != score(model, world, a));

  // Zero scale restores the closed form exactly.
  RewardModel clean = model;
  clean.noise_scale = 0.0;
  CHECK(score(clean, world, a) ==
        score(noise_free(RewardKind::alignment), world, a));

  // Jitter scales linearly with noise_scale.
  RewardModel doubled = model;
  doubled.noise_scale = 0.2;
  const double base = score(clean, world, a);
  CHECK(score(doubled, world, a) - base ==
        doctest::Approx(2.0 * (score(model, world, a) - base)).epsilon(1e-12));
}

TEST_CASE("rewards: invalid samples and models are rejected") {
  const ToyWorld world = ToyWorld::ring(2, 4, 3.0, 0.25);
  const RewardModel model = noise_free(RewardKind::alignment);
  CHECK_THROWS_AS(score(model, world, Sample{{0.0, 0.0}, 9}),
                  std::invalid_argument);
  CHECK_THROWS_AS(score(model, world, Sample{{0.0}, 1}), std::invalid_argument);

  RewardModel bad = model;
  bad.mix_weight = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = model;
  bad.noise_scale = -0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = model;
  bad.id = "";
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("rewards: Bradley-Terry probability") {
  CHECK(bt_probability(1.7, 1.7) == 0.5);
  CHECK(bt_probability(50.0, 0.0) >= 1.0 - 1e-9);
  CHECK(bt_probability(0.0, 50.0) <= 1e-9);
  Rng rng(9);
  for (int trial = 0; trial < 1000; ++trial) {
    // Differences beyond ~36 saturate the sigmoid to exactly 1.0 in double
    // precision; keep draws inside the strictly-representable range.
    const double a = 3.0 * rng.normal();
    const double b = 3.0 * rng.normal();
    const double p = bt_probability(a, b);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    CHECK(p + bt_probability(b, a) == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("rewards: ensemble construction and validation") {
  const RewardEnsemble five = default_ensemble(42);
  five.validate();
  REQUIRE(five.size() == 5);
  CHECK(five.models[0].kind == RewardKind::alignment);
  CHECK(five.models[1].kind == RewardKind::quality);
  CHECK(five.models[2].kind == RewardKind::mixed);
  CHECK(five.models[2].mix_weight == 0.25);
  CHECK(five.models[3].mix_weight == 0.5);
  CHECK(five.models[4].mix_weight == 0.75);
  for (const RewardModel& model : five.models) {
    CHECK(model.noise_scale == 0.05);
  }
  // Members carry distinct jitter seeds; same seed reproduces the ensemble.
  CHECK(five.models[0].noise_seed != five.models[1].noise_seed);
  CHECK(default_ensemble(42) == five);
  CHECK(default_ensemble(43) != five);

  const RewardEnsemble seven = make_ensemble(7, 0.0, 1);
  seven.validate();
  CHECK(seven.size() == 7);
  CHECK(seven.models[5].kind == seven.models[0].kind);  // pattern cycles

  CHECK_THROWS_AS(make_ensemble(0, 0.0, 1), std::invalid_argument);

  RewardEnsemble dup = five;
  dup.models[1].id = dup.models[0].id;
  CHECK_THROWS_AS(dup.validate(), std::invalid_argument);

  RewardEnsemble empty;
  CHECK_THROWS_AS(empty.validate(), std::invalid_argument);
}

TEST_CASE("rewards: kind names round-trip") {
  CHECK(to_string(RewardKind::alignment) == "alignment");
  CHECK(to_string(RewardKind::quality) == "quality");
  CHECK(to_string(RewardKind::mixed) == "mixed");
  CHECK(reward_kind_from_string("alignment") == RewardKind::alignment);
  CHECK(reward_kind_from_string("quality") == RewardKind::quality);
  CHECK(reward_kind_from_string("mixed") == RewardKind::mixed);
  CHECK_THROWS_AS(reward_kind_from_string("vibes"), std::invalid_argument);
}
