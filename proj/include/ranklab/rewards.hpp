#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ranklab/world.hpp"

namespace ranklab {

enum class RewardKind { alignment, quality, mixed };

std::string to_string(RewardKind kind);
RewardKind reward_kind_from_string(const std::string& name);

// Synthetic scalar preference model. alignment scores closeness to the
// condition target, quality scores global data-likelihood, mixed blends the
// two with mix_weight on alignment. Per-sample jitter is a pure function of
// (noise_seed, condition, point), so scoring order never matters.
struct RewardModel {
  std::string id;
  RewardKind kind = RewardKind::alignment;
  double mix_weight = 1.0;   // used by mixed only
  double noise_scale = 0.0;
  std::uint64_t noise_seed = 0;

  void validate() const;

  bool operator==(const RewardModel&) const = default;
};

struct RewardEnsemble {
  std::vector<RewardModel> models;

  int size() const { return static_cast<int>(models.size()); }
  void validate() const;  // n >= 1, unique ids, member invariants

  bool operator==(const RewardEnsemble&) const = default;
};

double score(const RewardModel& model, const ToyWorld& world,
             const Sample& sample);

// sigmoid(r_w - r_l): probability that the first reward wins a pairwise
// comparison under the Bradley-Terry model.
double bt_probability(double reward_winner, double reward_loser);

// n members cycling through pure alignment, pure quality, and three blends,
// each with jitter of the given scale under a seed-derived noise stream.
RewardEnsemble make_ensemble(int n, double noise_scale, std::uint64_t seed);

// The stock five-member ensemble: one full cycle with small jitter.
RewardEnsemble default_ensemble(std::uint64_t seed);

}  // namespace ranklab
