"""Latent values and the optimal search policy over a known market."""
from __future__ import annotations

import numpy as np

from ..core import OUTSIDE, Market, SequenceObservation, ValueVector
from ..values import search_propensity_array
from .params import CORRELATED_TASTE, ModelParams

__all__ = [
    "deterministic_utility",
    "draw_values",
    "draw_values_batch",
    "simulate_search",
    "simulate_search_batch",
    "batch_to_sequences",
]


def deterministic_utility(market: Market, params: ModelParams, beta) -> np.ndarray:
    """``gamma . x_j + beta p_j``; `beta` may be an array of consumer draws."""
    base = market.attributes @ np.asarray(params.gamma)
    beta = np.asarray(beta, dtype=float)
    return base + beta[..., None] * market.prices


def draw_values_batch(market: Market, params: ModelParams, rng: np.random.Generator,
                      n: int, noise: bool = True):
    """`n` independent latent value draws for one market.

    Returns
    -------
    z, u : ndarray, shape (n, M)
    u0 : ndarray, shape (n,), or None without an outside option
    """
    m = market.n_products
    if not noise:
        beta = np.full(n, params.beta_mean)
        delta = deterministic_utility(market, params, beta)
        z = delta + (params.inspect_propensity if params.spec == CORRELATED_TASTE else 0.0)
        u0 = np.full(n, params.gamma_outside) if market.has_outside else None
        return z, delta.copy(), u0
    beta = params.beta_mean + params.beta_sd * rng.standard_normal(n)
    delta = deterministic_utility(market, params, beta)
    eps = params.sigma_eps * rng.standard_normal((n, m))
    if params.spec == CORRELATED_TASTE:
        zeta = params.sigma_taste * rng.standard_normal((n, m))
        z = delta + zeta + params.inspect_propensity
        u = delta + zeta + eps
    else:
        cost = rng.exponential(params.cost_scale, (n, m))
        z = delta + search_propensity_array(cost, params.sigma_eps)
        u = delta + eps
    u0 = None
    if market.has_outside:
        u0 = params.gamma_outside + params.sigma_eps * rng.standard_normal(n)
    return z, u, u0


def draw_values(market: Market, params: ModelParams, rng: np.random.Generator,
                noise: bool = True) -> ValueVector:
    """One consumer's latent values; ``noise=False`` gives the deterministic limit."""
    z, u, u0 = draw_values_batch(market, params, rng, 1, noise)
    return ValueVector(z[0], u[0], None if u0 is None else float(u0[0]))


def simulate_search_batch(z, u, u0=None):
    """Optimal search for many value vectors at once.

    Products are opened in decreasing order of ``z`` (ties to the lower
    id) while the next ``z`` strictly exceeds the best value in hand; the
    best value in hand is then bought.

    Returns
    -------
    order : ndarray, shape (n, M)
        0-based product indices by decreasing ``z``.
    J : ndarray, shape (n,)
        Number of inspections.
    h : ndarray, shape (n,)
        0-based inspection position of the purchase, -1 for the outside option.
    """
    z = np.asarray(z, dtype=float)
    u = np.asarray(u, dtype=float)
    n, m = z.shape
    order = np.argsort(-z, axis=1, kind="stable")
    zs = np.take_along_axis(z, order, axis=1)
    us = np.take_along_axis(u, order, axis=1)
    start = np.full((n, 1), -np.inf) if u0 is None else np.asarray(u0, dtype=float)[:, None]
    # best value in hand just before each position
    in_hand = np.maximum.accumulate(np.concatenate([start, us[:, :-1]], axis=1), axis=1)
    in_hand = np.maximum(in_hand, start)
    go = zs > in_hand
    # inspected positions form a prefix
    J = np.where(go.all(axis=1), m, np.argmin(go, axis=1))
    masked = np.where(np.arange(m)[None, :] < J[:, None], us, -np.inf)
    h = np.argmax(masked, axis=1)
    best = masked[np.arange(n), h]
    if u0 is not None:
        h = np.where(np.asarray(u0) > best, -1, h)
    h = np.where(J == 0, -1, h)
    return order, J, h


def batch_to_sequences(order, J, h, market: Market) -> list[SequenceObservation]:
    out = []
    for o, j, hh in zip(order, J, h):
        ins = tuple(int(k) + 1 for k in o[:j])
        bought = OUTSIDE if hh < 0 else ins[hh]
        out.append(SequenceObservation(ins, bought, market))
    return out


def simulate_search(values: ValueVector, market: Market) -> SequenceObservation:
    """The optimal search record under `values`."""
    if values.z.shape[0] != market.n_products:
        raise ValueError("values do not match the market")
    if market.has_outside and values.u_outside is None:
        raise ValueError("market has an outside option but no outside value was given")
    u0 = np.array([values.u_outside]) if market.has_outside else None
    order, J, h = simulate_search_batch(values.z[None, :], values.u[None, :], u0)
    return batch_to_sequences(order, J, h, market)[0]
