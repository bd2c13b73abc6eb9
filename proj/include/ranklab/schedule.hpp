#pragma once

#include <string>
#include <vector>

namespace ranklab {

enum class ScheduleKind { linear_vp, cosine_vp };

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);

// Variance-preserving signal/noise schedule. alphas[t-1] and sigmas[t-1] hold
// the coefficients for step t in [1, T]; alpha_t^2 + sigma_t^2 = 1 throughout,
// alpha non-increasing, sigma non-decreasing.
struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::linear_vp;
  int total_steps = 0;
  std::vector<double> alphas;
  std::vector<double> sigmas;

  double alpha(int t) const { return alphas[static_cast<std::size_t>(t) - 1]; }
  double sigma(int t) const { return sigmas[static_cast<std::size_t>(t) - 1]; }

  // Throws std::invalid_argument if any structural invariant is violated.
  void validate() const;
};

// Builds a schedule of T steps. linear_vp uses the conventional linear beta
// ramp [1e-4, 0.02] rescaled by 1000/T so the terminal signal level is
// roughly independent of T; cosine_vp uses the squared-cosine ramp with
// offset 0.008. Throws std::invalid_argument for T < 1.
NoiseSchedule make_schedule(int total_steps, ScheduleKind kind);

}  // namespace ranklab
