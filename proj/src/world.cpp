#include "ranklab/world.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace ranklab {

void ToyWorld::validate() const {
  if (dim < 1) throw std::invalid_argument("world: dim < 1");
  if (mixtures.empty()) throw std::invalid_argument("world: no conditions");
  for (const auto& mixture : mixtures) {
    if (mixture.empty())
      throw std::invalid_argument("world: condition with no components");
    double total = 0.0;
    for (const auto& comp : mixture) {
      if (comp.mean.size() != static_cast<std::size_t>(dim))
        throw std::invalid_argument("world: component mean has wrong dimension");
      if (!(comp.variance > 0.0) || !std::isfinite(comp.variance))
        throw std::invalid_argument("world: component variance must be positive");
      if (!(comp.weight >= 0.0))
        throw std::invalid_argument("world: negative mixture weight");
      total += comp.weight;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw std::invalid_argument("world: mixture weights do not sum to 1");
  }
}

void ToyWorld::validate_sample(const Sample& sample) const {
  if (!valid_condition(sample.condition))
    throw std::invalid_argument("world: bad condition");
  if (sample.x.size() != static_cast<std::size_t>(dim))
    throw std::invalid_argument("world: point has wrong dimension");
}

std::vector<double> ToyWorld::condition_mean(int c) const {
  if (!valid_condition(c)) throw std::invalid_argument("world: bad condition");
  std::vector<double> mean(static_cast<std::size_t>(dim), 0.0);
  for (const auto& comp : mixtures[static_cast<std::size_t>(c)]) {
    for (int i = 0; i < dim; ++i)
      mean[static_cast<std::size_t>(i)] +=
          comp.weight * comp.mean[static_cast<std::size_t>(i)];
  }
  return mean;
}

std::vector<double> ToyWorld::sample_data(int c, Rng& rng) const {
  if (!valid_condition(c)) throw std::invalid_argument("world: bad condition");
  const auto& mixture = mixtures[static_cast<std::size_t>(c)];
  std::size_t pick = mixture.size() - 1;
  if (mixture.size() > 1) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < mixture.size(); ++i) {
      acc += mixture[i].weight;
      if (u < acc) {
        pick = i;
        break;
      }
    }
  }
  const auto& comp = mixture[pick];
  const double sd = std::sqrt(comp.variance);
  std::vector<double> x(static_cast<std::size_t>(dim));
  for (int i = 0; i < dim; ++i)
    x[static_cast<std::size_t>(i)] =
        comp.mean[static_cast<std::size_t>(i)] + sd * rng.normal();
  return x;
}

Sample ToyWorld::sample_pair(Rng& rng) const {
  const int c = static_cast<int>(rng.below(
      static_cast<std::uint64_t>(num_conditions())));
  return Sample{sample_data(c, rng), c};
}

namespace {

double log_gaussian_iso(std::span<const double> x,
                        std::span<const double> mean, double variance) {
  const auto d = static_cast<double>(x.size());
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = x[i] - mean[i];
    sq += diff * diff;
  }
  return -0.5 * d * std::log(2.0 * std::numbers::pi * variance) -
         0.5 * sq / variance;
}

}  // namespace

double ToyWorld::log_density_condition(int c, std::span<const double> x) const {
  if (!valid_condition(c)) throw std::invalid_argument("world: bad condition");
  if (x.size() != static_cast<std::size_t>(dim))
    throw std::invalid_argument("world: point has wrong dimension");
  double best = -std::numeric_limits<double>::infinity();
  const auto& mixture = mixtures[static_cast<std::size_t>(c)];
  std::vector<double> terms;
  terms.reserve(mixture.size());
  for (const auto& comp : mixture) {
    if (comp.weight == 0.0) continue;
    const double term =
        std::log(comp.weight) + log_gaussian_iso(x, comp.mean, comp.variance);
    terms.push_back(term);
    best = std::max(best, term);
  }
  double acc = 0.0;
  for (double term : terms) acc += std::exp(term - best);
  return best + std::log(acc);
}

double ToyWorld::log_density_global(std::span<const double> x) const {
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  terms.reserve(mixtures.size());
  for (int c = 0; c < num_conditions(); ++c) {
    const double term = log_density_condition(c, x) -
                        std::log(static_cast<double>(num_conditions()));
    terms.push_back(term);
    best = std::max(best, term);
  }
  double acc = 0.0;
  for (double term : terms) acc += std::exp(term - best);
  return best + std::log(acc);
}

ToyWorld ToyWorld::ring(int dim, int num_conditions, double radius,
                        double variance) {
  if (dim < 2) throw std::invalid_argument("ring world needs dim >= 2");
  ToyWorld world;
  world.dim = dim;
  world.mixtures.resize(static_cast<std::size_t>(num_conditions));
  for (int c = 0; c < num_conditions; ++c) {
    const double angle = 2.0 * std::numbers::pi * c / num_conditions;
    GaussianComponent comp;
    comp.mean.assign(static_cast<std::size_t>(dim), 0.0);
    comp.mean[0] = radius * std::cos(angle);
    comp.mean[1] = radius * std::sin(angle);
    comp.variance = variance;
    comp.weight = 1.0;
    world.mixtures[static_cast<std::size_t>(c)] = {comp};
  }
  world.validate();
  return world;
}

}  // namespace ranklab
