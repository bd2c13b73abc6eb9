#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ranklab/denoiser.hpp"
#include "ranklab/rewards.hpp"
#include "ranklab/schedule.hpp"
#include "ranklab/world.hpp"

namespace ranklab {

// A named sampling model: the id travels with every candidate it produces.
struct Generator {
  std::string id;
  DenoiserParams params;
};

// k candidate points for one condition, aligned with the generators that
// produced them.
struct CandidateSet {
  int condition = 0;
  std::vector<std::vector<double>> candidates;
  std::vector<std::string> generator_ids;

  int k() const { return static_cast<int>(candidates.size()); }
  void validate(int dim) const;  // k >= 2, finite, aligned ids
};

// One ranked training example: candidates plus aggregated preference
// strengths phi and the rank permutation tau (tau = 1 is most preferred).
struct RankedPreferenceRecord {
  int prompt_id = 0;
  int condition = 0;
  std::vector<std::vector<double>> candidates;
  std::vector<std::string> generator_ids;
  std::vector<double> phi;
  std::vector<int> tau;

  int k() const { return static_cast<int>(candidates.size()); }

  // Enforces: k >= 2, finite candidates of the given dimension, phi in
  // [0, 1], tau a permutation of 1..k, and phi non-increasing along tau.
  void validate(int dim) const;

  bool operator==(const RankedPreferenceRecord&) const = default;
};

// Candidate index holding rank 1 (most preferred).
int best_index(const RankedPreferenceRecord& record);
// Candidate index holding rank k (least preferred).
int worst_index(const RankedPreferenceRecord& record);

struct GeneratorDescriptor {
  std::string id;
  std::string params_checksum;  // hex of the generator's flat parameter bytes

  bool operator==(const GeneratorDescriptor&) const = default;
};

// Everything needed (together with the generator checkpoints) to regenerate
// the dataset bit-identically.
struct DatasetMeta {
  std::uint64_t seed = 0;
  int dim = 0;
  int num_conditions = 0;
  int k = 0;
  int n = 0;
  ScheduleKind schedule_kind = ScheduleKind::linear_vp;
  int schedule_steps = 0;
  std::vector<GeneratorDescriptor> generators;
  RewardEnsemble ensemble;
  ToyWorld world;

  bool operator==(const DatasetMeta&) const = default;
};

struct PreferenceDataset {
  DatasetMeta meta;
  std::vector<RankedPreferenceRecord> records;

  void validate() const;  // uniform k, per-record invariants, meta consistency

  bool operator==(const PreferenceDataset&) const = default;
};

// Samples one candidate per generator under the given condition, in generator
// order, consuming rng sequentially. All generators must share the schedule's
// step count and the same data dimension.
CandidateSet generate_candidates(const std::vector<Generator>& generators,
                                 const NoiseSchedule& schedule, int condition,
                                 Rng& rng);

// Strict-win counting over an n x k score matrix: wins[i] is the number of
// (reward, opponent) pairs where candidate i scores strictly higher. Ties
// award nothing to either side.
std::vector<int> count_wins(
    const std::vector<std::vector<double>>& reward_scores);

// phi[i] = wins[i] / (n * (k - 1)); counts outside [0, n*(k-1)] are rejected.
std::vector<double> aggregate_phi(const std::vector<int>& wins, int n_rewards);

// Rank labels from preference strengths: stable descending sort, ties broken
// by ascending candidate index, tau = 1 for the most preferred.
std::vector<int> rank_from_phi(const std::vector<double>& phi);

// Full dataset generation: per prompt, sample candidates, score them under
// every ensemble member, count wins, aggregate, rank. Deterministic for a
// given seed regardless of the thread count; records appear in prompt order.
PreferenceDataset datagen(const std::vector<int>& prompt_conditions,
                          const std::vector<Generator>& generators,
                          const RewardEnsemble& ensemble, const ToyWorld& world,
                          const NoiseSchedule& schedule, std::uint64_t seed,
                          int threads);

// Line-oriented text format: one metadata header line, one record per line,
// one trailing checksum line. Floats carry 17 significant digits so that
// write -> read -> write is byte-identical. Throws FormatError with distinct
// kinds for malformed input, version mismatch, and checksum failure.
void write_dataset(const std::string& path, const PreferenceDataset& dataset);
PreferenceDataset read_dataset(const std::string& path);

// The exact bytes write_dataset would produce (used by tests and the writer).
std::string serialize_dataset(const PreferenceDataset& dataset);

}  // namespace ranklab
