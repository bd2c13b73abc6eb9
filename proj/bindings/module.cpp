// Python bindings for the core numerics: ranking aggregation, pair weights,
// agreement metrics, noise schedules, and the gradient verification harness.

#include <cstdint>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ranklab/dataset.hpp"
#include "ranklab/evaluate.hpp"
#include "ranklab/objectives.hpp"
#include "ranklab/pipeline.hpp"
#include "ranklab/schedule.hpp"

namespace py = pybind11;

namespace {

std::vector<std::vector<double>> pair_weight_matrix(
    const std::vector<double>& phi, const std::vector<int>& tau) {
  const ranklab::PairWeights weights = ranklab::pair_weights(phi, tau);
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(weights.k));
  for (int i = 0; i < weights.k; ++i) {
    rows[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(weights.k));
    for (int j = 0; j < weights.k; ++j) {
      rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
          weights.at(i, j);
    }
  }
  return rows;
}

std::vector<double> schedule_alphas(int steps, const std::string& kind) {
  return ranklab::make_schedule(steps, ranklab::schedule_kind_from_string(kind))
      .alphas;
}

std::vector<double> schedule_sigmas(int steps, const std::string& kind) {
  return ranklab::make_schedule(steps, ranklab::schedule_kind_from_string(kind))
      .sigmas;
}

py::dict gradient_check(std::uint64_t seed, double tolerance, int params) {
  const ranklab::GradCheckReport report =
      ranklab::run_gradient_checks(seed, tolerance, params);
  py::list entries;
  for (const ranklab::GradCheckEntry& entry : report.entries) {
    py::dict row;
    row["objective"] = entry.objective;
    row["max_rel_error"] = entry.max_rel_error;
    row["pass"] = entry.pass;
    entries.append(row);
  }
  py::dict out;
  out["entries"] = entries;
  out["all_pass"] = report.all_pass;
  out["anchor_loss"] = report.anchor_loss;
  out["anchor_expected"] = report.anchor_expected;
  return out;
}

py::dict dataset_stats(const std::string& path) {
  const ranklab::PreferenceDataset dataset = ranklab::read_dataset(path);
  const ranklab::DatagenSummary summary = ranklab::dataset_summary(dataset);
  py::dict out;
  out["num_records"] = summary.num_records;
  out["k"] = summary.k;
  out["n"] = summary.n;
  out["mean_phi"] = summary.mean_phi;
  out["tie_fraction"] = summary.tie_fraction;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Core numerics for the ranking-preference diffusion lab";

  m.def("gain", &ranklab::gain, py::arg("phi"),
        "Preference-strength gain 2**phi - 1 for phi in [0, 1].");
  m.def("discount", &ranklab::discount, py::arg("rank"),
        "Rank discount ln(1 + rank) for rank >= 1.");

  m.def("count_wins", &ranklab::count_wins, py::arg("reward_scores"),
        "Strict pairwise win counts over an n x k score matrix; ties award "
        "nothing.");
  m.def("aggregate_phi", &ranklab::aggregate_phi, py::arg("wins"),
        py::arg("n_rewards"),
        "Normalized preference strengths wins[i] / (n * (k - 1)).");
  m.def("rank_from_phi", &ranklab::rank_from_phi, py::arg("phi"),
        "Rank labels (1 = most preferred); ties broken by candidate index.");
  m.def("pair_weight_matrix", &pair_weight_matrix, py::arg("phi"),
        py::arg("tau"),
        "Symmetric k x k matrix of gain/discount pair weights.");

  m.def("kendall_tau", &ranklab::kendall_tau, py::arg("rank_a"),
        py::arg("rank_b"), "Kendall rank correlation between two rankings.");
  m.def("kendall_tau_scores", &ranklab::kendall_tau_scores, py::arg("scores"),
        py::arg("tau"),
        "Kendall correlation between raw scores (lower = better) and a rank "
        "labeling; tied scores contribute zero.");
  m.def("ndcg", &ranklab::ndcg, py::arg("gains"), py::arg("model_rank"),
        py::arg("ideal_rank"), "Normalized discounted cumulative gain.");

  m.def("schedule_alphas", &schedule_alphas, py::arg("steps"),
        py::arg("kind") = "linear_vp",
        "Signal coefficients alpha_1..alpha_T of a variance-preserving "
        "schedule.");
  m.def("schedule_sigmas", &schedule_sigmas, py::arg("steps"),
        py::arg("kind") = "linear_vp",
        "Noise coefficients sigma_1..sigma_T of a variance-preserving "
        "schedule.");

  m.def("gradient_check", &gradient_check, py::arg("seed") = 0,
        py::arg("tolerance") = 1e-4, py::arg("params") = 100,
        "Finite-difference verification of every training objective on a tiny "
        "network; returns per-objective errors and the exact ln(2) anchor.");

  m.def("dataset_stats", &dataset_stats, py::arg("path"),
        "Summary statistics of a stored ranked-preference dataset.");
}
