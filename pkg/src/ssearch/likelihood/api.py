"""Per-record simulated probabilities."""
from __future__ import annotations

import math

import numpy as np

from ..core import Kind, Market, ObservedData, SequenceObservation
from ..simulate.params import ModelParams
from .problem import BaselineProblem, DrawSet, LikelihoodConfig

__all__ = [
    "ghk_probability",
    "pr_ghk_full",
    "pr_ghk_purchase_only",
    "pr_ghk_searched_set",
    "pr_ghk_first_and_purchase",
    "pr_ghk_subset_path",
]


def ghk_probability(obs: ObservedData, market: Market, params: ModelParams, draws: DrawSet,
                    shift: float = 0.0, cfg: LikelihoodConfig | None = None):
    """Simulated probability of one record and its Monte Carlo standard error.

    `draws` must hold a single consumer row.
    """
    prob = BaselineProblem([market], [obs], draws, cfg)
    per = prob.per_draw(params, shift)[0]
    return float(per.mean()), float(per.std(ddof=1) / math.sqrt(len(per))) if len(per) > 1 else 0.0


def _check(obs: ObservedData, kind: Kind):
    if obs.kind is not kind:
        raise ValueError(f"expected {kind.value} data, got {obs.kind.value}")


def pr_ghk_full(seq: SequenceObservation, params: ModelParams, draws: DrawSet) -> float:
    """Probability of a complete search record."""
    obs = ObservedData.full(seq.inspected, seq.purchased)
    return ghk_probability(obs, seq.market, params, draws)[0]


def pr_ghk_purchase_only(obs, market, params, draws) -> float:
    """Probability that the recorded product (or the outside option) is bought."""
    _check(obs, Kind.PURCHASE_ONLY)
    return ghk_probability(obs, market, params, draws)[0]


def pr_ghk_searched_set(obs, market, params, draws) -> float:
    """Probability of the recorded inspected set and purchase, order unknown."""
    _check(obs, Kind.SEARCHED_SET)
    return ghk_probability(obs, market, params, draws)[0]


def pr_ghk_first_and_purchase(obs, market, params, draws) -> float:
    """Probability of the recorded first inspection and purchase."""
    _check(obs, Kind.FIRST_AND_PURCHASE)
    return ghk_probability(obs, market, params, draws)[0]


def pr_ghk_subset_path(obs, market, params, draws) -> float:
    """Probability of the recorded inspection chain over the observable products."""
    _check(obs, Kind.SUBSET_PATH)
    return ghk_probability(obs, market, params, draws)[0]
