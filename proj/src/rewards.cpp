#include "ranklab/rewards.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

#include "ranklab/rng.hpp"

namespace ranklab {

std::string to_string(RewardKind kind) {
  switch (kind) {
    case RewardKind::alignment: return "alignment";
    case RewardKind::quality: return "quality";
    case RewardKind::mixed: return "mixed";
  }
  throw std::logic_error("unknown RewardKind");
}

RewardKind reward_kind_from_string(const std::string& name) {
  if (name == "alignment") return RewardKind::alignment;
  if (name == "quality") return RewardKind::quality;
  if (name == "mixed") return RewardKind::mixed;
  throw std::invalid_argument("unknown reward kind: " + name);
}

void RewardModel::validate() const {
  if (id.empty()) {
    throw std::invalid_argument("reward model id must be non-empty");
  }
  if (!(mix_weight >= 0.0 && mix_weight <= 1.0)) {
    throw std::invalid_argument("reward mix_weight must lie in [0, 1]");
  }
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) {
    throw std::invalid_argument("reward noise_scale must be finite and >= 0");
  }
}

void RewardEnsemble::validate() const {
  if (models.empty()) {
    throw std::invalid_argument("reward ensemble must have at least one model");
  }
  std::set<std::string> ids;
  for (const RewardModel& model : models) {
    model.validate();
    if (!ids.insert(model.id).second) {
      throw std::invalid_argument("duplicate reward model id: " + model.id);
    }
  }
}

namespace {

double alignment_score(const ToyWorld& world, const Sample& sample) {
  const std::vector<double> mean = world.condition_mean(sample.condition);
  double dist2 = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const double d = sample.x[i] - mean[i];
    dist2 += d * d;
  }
  return -dist2;
}

double quality_score(const ToyWorld& world, const Sample& sample) {
  return world.log_density_global(sample.x);
}

// Deterministic per-(model, condition, point) jitter: hash the seed, the
// condition, and the raw coordinate bits, then map to a unit normal.
double jitter(const RewardModel& model, const Sample& sample) {
  std::uint64_t h = kFnvOffsetBasis;
  h = fnv1a64_u64(model.noise_seed, h);
  h = fnv1a64_u64(static_cast<std::uint64_t>(sample.condition), h);
  for (double v : sample.x) {
    h = fnv1a64_double(v, h);
  }
  return unit_normal_from_hash(h);
}

}  // namespace

double score(const RewardModel& model, const ToyWorld& world,
             const Sample& sample) {
  world.validate_sample(sample);
  double base = 0.0;
  switch (model.kind) {
    case RewardKind::alignment:
      base = alignment_score(world, sample);
      break;
    case RewardKind::quality:
      base = quality_score(world, sample);
      break;
    case RewardKind::mixed:
      base = model.mix_weight * alignment_score(world, sample) +
             (1.0 - model.mix_weight) * quality_score(world, sample);
      break;
  }
  if (model.noise_scale > 0.0) {
    base += model.noise_scale * jitter(model, sample);
  }
  return base;
}

double bt_probability(double reward_winner, double reward_loser) {
  const double diff = reward_winner - reward_loser;
  if (diff >= 0.0) {
    return 1.0 / (1.0 + std::exp(-diff));
  }
  const double e = std::exp(diff);
  return e / (1.0 + e);
}

RewardEnsemble make_ensemble(int n, double noise_scale, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("make_ensemble: need n >= 1");
  struct Pattern {
    const char* tag;
    RewardKind kind;
    double mix;
  };
  static constexpr Pattern kCycle[] = {
      {"align", RewardKind::alignment, 1.0},
      {"quality", RewardKind::quality, 0.0},
      {"mix25", RewardKind::mixed, 0.25},
      {"mix50", RewardKind::mixed, 0.50},
      {"mix75", RewardKind::mixed, 0.75},
  };
  RewardEnsemble ensemble;
  for (int i = 0; i < n; ++i) {
    const Pattern& pattern = kCycle[static_cast<std::size_t>(i) % 5];
    RewardModel model;
    model.id = "r" + std::to_string(i) + "_" + pattern.tag;
    model.kind = pattern.kind;
    model.mix_weight = pattern.mix;
    model.noise_scale = noise_scale;
    model.noise_seed = fnv1a64(model.id, splitmix64(seed));
    ensemble.models.push_back(std::move(model));
  }
  ensemble.validate();
  return ensemble;
}

RewardEnsemble default_ensemble(std::uint64_t seed) {
  return make_ensemble(5, 0.05, seed);
}

}  // namespace ranklab
