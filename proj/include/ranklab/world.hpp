#pragma once

#include <span>
#include <vector>

#include "ranklab/rng.hpp"

namespace ranklab {

// One data point with its condition label.
struct Sample {
  std::vector<double> x;
  int condition = 0;
};

struct GaussianComponent {
  std::vector<double> mean;
  double variance = 1.0;  // isotropic
  double weight = 1.0;

  bool operator==(const GaussianComponent&) const = default;
};

// Conditional target distribution: one isotropic Gaussian mixture per
// condition. Stands in for the data distribution the generators are trained
// to match.
struct ToyWorld {
  int dim = 2;
  std::vector<std::vector<GaussianComponent>> mixtures;  // [condition][component]

  int num_conditions() const { return static_cast<int>(mixtures.size()); }

  // Throws std::invalid_argument on dimension mismatches, non-positive
  // variances, or per-condition weights that do not sum to 1.
  void validate() const;

  bool valid_condition(int c) const {
    return c >= 0 && c < num_conditions();
  }

  // Throws std::invalid_argument if the sample's condition is out of range or
  // its point has the wrong dimension.
  void validate_sample(const Sample& sample) const;

  // Mixture-weight-averaged mean of condition c's components.
  std::vector<double> condition_mean(int c) const;

  // Draws x from condition c's mixture.
  std::vector<double> sample_data(int c, Rng& rng) const;

  // Draws a condition uniformly, then x from its mixture.
  Sample sample_pair(Rng& rng) const;

  // Log-density of x under condition c's mixture.
  double log_density_condition(int c, std::span<const double> x) const;

  // Log-density of x under the equal-weight mixture over all conditions.
  double log_density_global(std::span<const double> x) const;

  // C single-Gaussian conditions with means spaced on a circle of the given
  // radius in the first two coordinates (zeros elsewhere).
  static ToyWorld ring(int dim, int num_conditions, double radius,
                       double variance);

  bool operator==(const ToyWorld&) const = default;
};

}  // namespace ranklab
