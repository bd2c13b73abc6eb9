#include "ranklab/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ranklab {

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::linear_vp:
      return "linear_vp";
    case ScheduleKind::cosine_vp:
      return "cosine_vp";
  }
  return "linear_vp";
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
  if (name == "linear_vp") return ScheduleKind::linear_vp;
  if (name == "cosine_vp") return ScheduleKind::cosine_vp;
  throw std::invalid_argument("unknown schedule kind: " + name);
}

void NoiseSchedule::validate() const {
  if (total_steps < 1) throw std::invalid_argument("schedule: total_steps < 1");
  const auto n = static_cast<std::size_t>(total_steps);
  if (alphas.size() != n || sigmas.size() != n)
    throw std::invalid_argument("schedule: coefficient length != total_steps");
  for (std::size_t i = 0; i < n; ++i) {
    const double a = alphas[i];
    const double s = sigmas[i];
    if (!(a > 0.0 && a <= 1.0))
      throw std::invalid_argument("schedule: alpha outside (0, 1]");
    if (!(s >= 0.0 && s < 1.0))
      throw std::invalid_argument("schedule: sigma outside [0, 1)");
    if (std::abs(a * a + s * s - 1.0) > 1e-12)
      throw std::invalid_argument("schedule: alpha^2 + sigma^2 != 1");
    if (i > 0) {
      if (a > alphas[i - 1]) throw std::invalid_argument("schedule: alpha increased");
      if (s < sigmas[i - 1]) throw std::invalid_argument("schedule: sigma decreased");
    }
  }
}

namespace {

std::vector<double> linear_alpha_bar(int total_steps) {
  // Beta ramp rescaled by 1000/T: at T=1000 this is exactly the standard
  // [1e-4, 0.02] DDPM range, and the cumulative noise budget stays roughly
  // constant for smaller T.
  const double scale = 1000.0 / total_steps;
  const double beta_lo = 1e-4 * scale;
  const double beta_hi = 0.02 * scale;
  std::vector<double> abar(static_cast<std::size_t>(total_steps));
  double prod = 1.0;
  for (int t = 1; t <= total_steps; ++t) {
    double beta = total_steps > 1
                      ? beta_lo + (beta_hi - beta_lo) * (t - 1) / (total_steps - 1)
                      : beta_lo;
    beta = std::min(beta, 0.999);
    prod *= 1.0 - beta;
    abar[static_cast<std::size_t>(t) - 1] = prod;
  }
  return abar;
}

std::vector<double> cosine_alpha_bar(int total_steps) {
  constexpr double s = 0.008;
  const auto f = [](double u) {
    const double c = std::cos((u + s) / (1.0 + s) * std::numbers::pi / 2.0);
    return c * c;
  };
  const double f0 = f(0.0);
  std::vector<double> abar(static_cast<std::size_t>(total_steps));
  double prev = 1.0;
  for (int t = 1; t <= total_steps; ++t) {
    double value = f(static_cast<double>(t) / total_steps) / f0;
    // Clamp per-step beta to 0.999, as is conventional for the cosine ramp.
    value = std::max(value, prev * 0.001);
    value = std::min(value, prev);
    prev = value;
    abar[static_cast<std::size_t>(t) - 1] = value;
  }
  return abar;
}

}  // namespace

NoiseSchedule make_schedule(int total_steps, ScheduleKind kind) {
  if (total_steps < 1)
    throw std::invalid_argument("make_schedule: total_steps must be >= 1");

  std::vector<double> abar = kind == ScheduleKind::linear_vp
                                 ? linear_alpha_bar(total_steps)
                                 : cosine_alpha_bar(total_steps);
  NoiseSchedule schedule;
  schedule.kind = kind;
  schedule.total_steps = total_steps;
  schedule.alphas.resize(abar.size());
  schedule.sigmas.resize(abar.size());
  for (std::size_t i = 0; i < abar.size(); ++i) {
    // Floor the cumulative signal so sigma stays strictly below 1 in double
    // precision even for step counts whose clamped betas destroy the signal.
    abar[i] = std::max(abar[i], 1e-12);
    schedule.alphas[i] = std::sqrt(abar[i]);
    schedule.sigmas[i] = std::sqrt(1.0 - abar[i]);
  }
  schedule.validate();
  return schedule;
}

}  // namespace ranklab
