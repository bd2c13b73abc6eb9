"""Ranking-preference lab for toy conditional diffusion models.

The heavy lifting lives in the compiled extension; this package re-exports
the public surface.
"""

from ranklab._core import (
    aggregate_phi,
    count_wins,
    dataset_stats,
    discount,
    gain,
    gradient_check,
    kendall_tau,
    kendall_tau_scores,
    ndcg,
    pair_weight_matrix,
    rank_from_phi,
    schedule_alphas,
    schedule_sigmas,
)

__all__ = [
    "aggregate_phi",
    "count_wins",
    "dataset_stats",
    "discount",
    "gain",
    "gradient_check",
    "kendall_tau",
    "kendall_tau_scores",
    "ndcg",
    "pair_weight_matrix",
    "rank_from_phi",
    "schedule_alphas",
    "schedule_sigmas",
]
