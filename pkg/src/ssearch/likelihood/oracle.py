"""Crude frequency simulator: the brute-force reference for every GHK kernel."""
from __future__ import annotations

import math

import numpy as np

from ..core import OUTSIDE, Kind, Market, ObservedData
from ..simulate.baseline import draw_values_batch, simulate_search_batch
from ..simulate.params import ModelParams

__all__ = ["match_views", "crude_frequency_likelihood"]


def match_views(obs: ObservedData, order, J, h) -> np.ndarray:
    """Which simulated searches censor to `obs`, as a boolean vector."""
    n, m = order.shape
    bought = np.where(h < 0, OUTSIDE, np.take_along_axis(order, np.maximum(h, 0)[:, None], 1)[:, 0] + 1)
    # search position of each product, m if never inspected
    pos = np.full((n, m), m)
    rows = np.arange(n)[:, None]
    ranks = np.broadcast_to(np.arange(m), (n, m))
    pos[rows, order] = np.where(ranks < J[:, None], ranks, m)
    k = obs.kind
    if k is Kind.FULL_PATH:
        want = np.full(m, m)
        for r, j in enumerate(obs.inspected):
            want[j - 1] = r
        return np.all(pos == want, axis=1) & (bought == obs.purchased)
    if k is Kind.PURCHASE_ONLY:
        return bought == obs.purchased
    if k is Kind.SEARCHED_SET:
        want = np.zeros(m, dtype=bool)
        want[[j - 1 for j in obs.searched]] = True
        return np.all((pos < m) == want, axis=1) & (bought == obs.purchased)
    if k is Kind.FIRST_AND_PURCHASE:
        if obs.first is None:
            first_ok = J == 0
        else:
            first_ok = (J > 0) & (order[:, 0] == obs.first - 1)
        return first_ok & (bought == obs.purchased)
    if k is Kind.SUBSET_PATH:
        ok = np.ones(n, dtype=bool)
        chain = list(obs.inspected)
        for j in obs.observable:
            if j not in chain:
                ok &= pos[:, j - 1] == m
        for a, b in zip(chain[:-1], chain[1:]):
            ok &= pos[:, a - 1] < pos[:, b - 1]
        if chain:
            ok &= pos[:, chain[-1] - 1] < m
        return ok
    raise ValueError(f"no baseline view for {k.value} data")


def crude_frequency_likelihood(obs: ObservedData, market: Market, params: ModelParams,
                               n_sims: int, rng: np.random.Generator, batch: int = 100_000):
    """Share of forward simulations whose censored view equals `obs`.

    Returns
    -------
    prob : float
    se : float
        Binomial standard error ``sqrt(p (1 - p) / n_sims)``.
    """
    if n_sims < 1:
        raise ValueError("n_sims must be at least 1")
    hits = 0
    done = 0
    while done < n_sims:
        b = min(batch, n_sims - done)
        z, u, u0 = draw_values_batch(market, params, rng, b)
        order, J, h = simulate_search_batch(z, u, u0)
        hits += int(match_views(obs, order, J, h).sum())
        done += b
    p = hits / n_sims
    return p, math.sqrt(p * (1 - p) / n_sims)
