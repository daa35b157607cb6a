"""Draw sets, consumer grouping and the dataset log-likelihood."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from ..core import Kind, Market, ObservedData
from ..simulate.params import ModelParams
from .kernels import value_model
from .scenarios import KERNELS, shape_of

__all__ = [
    "LikelihoodConfig",
    "DrawSet",
    "baseline_slots",
    "BaselineProblem",
]


@dataclass(frozen=True)
class LikelihoodConfig:
    """Simulation settings for the likelihood.

    Parameters
    ----------
    n_draws : int
        GHK draws per consumer.
    prob_floor : float
        Lower bound applied to each consumer's likelihood before logging.
    tail_clip : float
        Smallest truncation-interval probability used in a GHK step.
    """

    n_draws: int = 500
    prob_floor: float = 1e-300
    tail_clip: float = 1e-12

    def __post_init__(self):
        if self.n_draws < 1:
            raise ValueError("n_draws must be at least 1")
        if not 0 < self.prob_floor < 1 or not 0 < self.tail_clip < 1:
            raise ValueError("prob_floor and tail_clip must lie in (0, 1)")


def baseline_slots(m: int) -> int:
    """Slots per draw for a market of `m` products.

    Slot 0 drives the price coefficient, slots ``1..m`` the reservation
    noise of products ``1..m``, slots ``m+1..2m`` their purchase noise and
    slot ``2m+1`` the outside option.
    """
    return 2 * m + 2


class DrawSet:
    """Fixed uniforms reused across parameter trials.

    Parameters
    ----------
    uniforms : ndarray, shape (N, R, S)
        Entries in the open unit interval; row ``i`` belongs to consumer ``i``.
    seed : int or None
    """

    def __init__(self, uniforms: np.ndarray, seed: int | None = None):
        uniforms = np.asarray(uniforms, dtype=float)
        if uniforms.ndim != 3:
            raise ValueError("uniforms must have shape (consumers, draws, slots)")
        if not (np.all(uniforms > 0) and np.all(uniforms < 1)):
            raise ValueError("uniforms must lie strictly inside (0, 1)")
        uniforms.setflags(write=False)
        self.uniforms = uniforms
        self.seed = seed

    @property
    def n_consumers(self) -> int:
        return self.uniforms.shape[0]

    @property
    def n_draws(self) -> int:
        return self.uniforms.shape[1]

    @property
    def n_slots(self) -> int:
        return self.uniforms.shape[2]

    @classmethod
    def generate(cls, n_consumers: int, n_draws: int, n_slots: int, seed: int) -> "DrawSet":
        """Uniforms from one independent stream per consumer."""
        out = np.empty((n_consumers, n_draws, n_slots))
        for i in range(n_consumers):
            rng = np.random.Generator(np.random.PCG64([int(seed), 7, i]))
            out[i] = rng.random((n_draws, n_slots))
        out[out == 0.0] = 2.0 ** -54
        return cls(out, seed)

    def subset(self, idx) -> "DrawSet":
        return DrawSet(self.uniforms[np.asarray(idx)], self.seed)


class _Group:
    def __init__(self, shape, idx, x, p, uz, ue, u0, ub):
        self.shape = shape
        self.idx = idx
        self.x = x
        self.p = p
        self.uz = uz
        self.ue = ue
        self.u0 = u0
        self.ub = special.ndtri(ub)


class BaselineProblem:
    """Consumers of a known-market dataset, grouped by observation shape.

    Uniforms are gathered into kernel position order once, so each
    likelihood evaluation only does arithmetic.

    Parameters
    ----------
    markets : sequence of Market
    observations : sequence of ObservedData
    draws : DrawSet
        One row per consumer with at least :func:`baseline_slots` slots for
        the largest market.
    """

    def __init__(self, markets: Sequence[Market], observations: Sequence[ObservedData],
                 draws: DrawSet, cfg: LikelihoodConfig | None = None):
        if len(markets) != len(observations):
            raise ValueError("one market per observation")
        if draws.n_consumers != len(observations):
            raise ValueError(
                f"draw set has {draws.n_consumers} rows for {len(observations)} consumers")
        self.cfg = cfg or LikelihoodConfig(n_draws=draws.n_draws)
        self.n = len(observations)
        self.n_draws = draws.n_draws
        buckets = defaultdict(list)
        for i, (mk, ob) in enumerate(zip(markets, observations)):
            try:
                shape, order = shape_of(ob, mk)
            except ValueError as exc:
                raise ValueError(f"consumer {i}: {exc}") from exc
            if draws.n_slots < baseline_slots(mk.n_products):
                raise ValueError(f"consumer {i}: draw set has too few slots")
            buckets[shape].append((i, order))
        uni = draws.uniforms
        self.groups = []
        for shape in sorted(buckets, key=lambda s: (s.kind.value,) + tuple(s[1:])):
            rows = buckets[shape]
            idx = np.array([i for i, _ in rows])
            order = np.array([o for _, o in rows])
            m = shape.m
            x = np.stack([markets[i].attributes for i in idx])
            p = np.stack([markets[i].prices for i in idx])
            x = np.take_along_axis(x, order[:, :, None], axis=1)
            p = np.take_along_axis(p, order, axis=1)
            u = uni[idx]
            uz = np.take_along_axis(u, (1 + order)[:, None, :], axis=2)
            ue = np.take_along_axis(u, (1 + m + order)[:, None, :], axis=2)
            self.groups.append(_Group(shape, idx, x, p, uz, ue, u[:, :, 2 * m + 1].copy(),
                                      u[:, :, 0]))

    def per_draw(self, params: ModelParams, shift: float = 0.0) -> np.ndarray:
        """Per-draw likelihood contributions, shape ``(N, R)``."""
        model = value_model(params, shift)
        model.tail_clip = self.cfg.tail_clip
        out = np.empty((self.n, self.n_draws))
        gamma = np.asarray(params.gamma)
        for g in self.groups:
            beta = params.beta_mean + params.beta_sd * g.ub
            d = (g.x @ gamma)[:, None, :] + beta[:, :, None] * g.p[:, None, :] + shift
            val = KERNELS[g.shape.kind](model, g.shape, d, g.uz, g.ue, g.u0)
            out[g.idx] = np.broadcast_to(val, (len(g.idx), self.n_draws))
        return out

    def likelihoods(self, params: ModelParams, shift: float = 0.0) -> np.ndarray:
        """Simulated likelihood of each consumer (mean over draws)."""
        return self.per_draw(params, shift).mean(axis=1)

    def loglik(self, params: ModelParams) -> float:
        lik = np.maximum(self.likelihoods(params), self.cfg.prob_floor)
        # exactly rounded sum: independent of consumer order and worker count
        return math.fsum(np.log(lik).tolist())
