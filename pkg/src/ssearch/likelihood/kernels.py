"""Truncated draws and conditional probabilities for each specification.

Every sampler maps a uniform to a value by inverse-cdf composition and
returns the probability of the truncation interval, which is the GHK
weight of that step.
"""
from __future__ import annotations

import numpy as np
from scipy import special

from ..simulate.params import CORRELATED_TASTE, ModelParams
from ..values import expected_excess, search_propensity_array

__all__ = ["truncnorm_sample", "CorrelatedTasteModel", "StochasticCostModel", "value_model"]

TAIL_CLIP = 1e-12


def truncnorm_sample(mean, sd, lower, upper, u, tail_clip: float = TAIL_CLIP):
    """Draw from ``N(mean, sd^2)`` restricted to ``(lower, upper)``.

    Parameters
    ----------
    mean, sd, lower, upper, u : array_like
        Broadcast together; `lower`/`upper` may be infinite.
    tail_clip : float
        Interval probabilities below this are clamped to it and the draw
        is pinned to the bound nearer the mean.

    Returns
    -------
    x : ndarray
    prob : ndarray
        ``Phi(b) - Phi(a)`` for the standardized bounds, floored at `tail_clip`.
    """
    lo_inf = np.ndim(lower) == 0 and lower == -np.inf
    hi_inf = np.ndim(upper) == 0 and upper == np.inf
    if hi_inf and not lo_inf:
        return _lower_truncated(mean, sd, lower, u, tail_clip)
    if lo_inf and not hi_inf:
        return _upper_truncated(mean, sd, upper, u, tail_clip)
    mean, sd, lower, upper, u = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (mean, sd, lower, upper, u))
    )
    a = (lower - mean) / sd
    b = (upper - mean) / sd
    # work in the tail the interval lies in so nothing cancels
    upper_tail = a > 0
    fa = np.where(upper_tail, special.ndtr(-a), special.ndtr(a))
    fb = np.where(upper_tail, special.ndtr(-b), special.ndtr(b))
    prob = np.where(upper_tail, fa - fb, fb - fa)
    with np.errstate(invalid="ignore"):
        std = np.where(upper_tail, -special.ndtri(fa - u * prob), special.ndtri(fa + u * prob))
    std = np.clip(std, a, b)
    thin = ~(prob >= tail_clip)
    if thin.any():
        pin = np.where(np.abs(a) < np.abs(b), a, b)
        std = np.where(thin, pin, std)
        prob = np.where(thin, tail_clip, prob)
    return mean + sd * std, prob


def _lower_truncated(mean, sd, lower, u, tail_clip):
    # x > lower: the mass above is Phi(-a); the draw is taken from the upper tail
    a = (np.asarray(lower, dtype=float) - mean) / sd
    prob = special.ndtr(-a)
    std = -special.ndtri((1.0 - u) * prob)
    std = np.maximum(std, a)
    thin = ~(prob >= tail_clip)
    if thin.any():
        std = np.where(thin, a, std)
        prob = np.where(thin, tail_clip, prob)
    return mean + sd * std, prob


def _upper_truncated(mean, sd, upper, u, tail_clip):
    b = (np.asarray(upper, dtype=float) - mean) / sd
    prob = special.ndtr(b)
    std = np.minimum(special.ndtri(u * prob), b)
    thin = ~(prob >= tail_clip)
    if thin.any():
        std = np.where(thin, b, std)
        prob = np.where(thin, tail_clip, prob)
    return mean + sd * std, prob


def _free_normal(mean, sd, u):
    return mean + sd * special.ndtri(u)


class CorrelatedTasteModel:
    """Value model with a taste shock shared by reservation and purchase values.

    ``z = delta + m + sigma_taste * zeta``; given ``z``,
    ``u = z - m + sigma_eps * eps``.

    Parameters
    ----------
    params : ModelParams
    shift : float
        Constant added to every deterministic utility, outside option included.
    """

    def __init__(self, params: ModelParams, shift: float = 0.0):
        self.m = params.inspect_propensity
        self.st = params.sigma_taste
        self.se = params.sigma_eps
        self.gamma_outside = params.gamma_outside + shift
        self.tail_clip = TAIL_CLIP

    def z_draw(self, delta, u, lower=None, upper=None):
        if lower is None and upper is None:
            return _free_normal(delta + self.m, self.st, u), 1.0
        lo = -np.inf if lower is None else lower
        hi = np.inf if upper is None else upper
        return truncnorm_sample(delta + self.m, self.st, lo, hi, u, self.tail_clip)

    def z_cdf(self, y, delta):
        return special.ndtr((y - delta - self.m) / self.st)

    def u_draw(self, z, delta, u, upper=None, lower=None):
        if upper is None and lower is None:
            return _free_normal(z - self.m, self.se, u), 1.0
        lo = -np.inf if lower is None else lower
        hi = np.inf if upper is None else upper
        return truncnorm_sample(z - self.m, self.se, lo, hi, u, self.tail_clip)

    def u_cdf(self, y, z, delta):
        return special.ndtr((y - z + self.m) / self.se)

    def o_draw(self, u, lower=None, upper=None):
        if lower is None and upper is None:
            return _free_normal(self.gamma_outside, self.se, u), 1.0
        lo = -np.inf if lower is None else lower
        hi = np.inf if upper is None else upper
        return truncnorm_sample(self.gamma_outside, self.se, lo, hi, u, self.tail_clip)

    def o_cdf(self, y):
        return special.ndtr((y - self.gamma_outside) / self.se)


class StochasticCostModel:
    """Value model with exponential search costs and independent values.

    ``z = delta + m_eps(c)`` with ``c ~ Exp(mean=cost_scale)``, so the
    reservation-gap cdf is ``exp(-lambda sigma_eps g(x / sigma_eps))``;
    ``u = delta + sigma_eps * eps`` independently of ``z``.
    """

    def __init__(self, params: ModelParams, shift: float = 0.0):
        self.lam = 1.0 / params.cost_scale
        self.se = params.sigma_eps
        self.gamma_outside = params.gamma_outside + shift
        self.tail_clip = TAIL_CLIP

    def _rate(self, x):
        # -log F(x) for the reservation gap x
        return self.lam * self.se * expected_excess(np.asarray(x, dtype=float) / self.se)

    def z_draw(self, delta, u, lower=None):
        u = np.asarray(u, dtype=float)
        if lower is None:
            cost = -np.log(u) / self.lam
            return delta + search_propensity_array(np.maximum(cost, 1e-300), self.se), 1.0
        gap = np.asarray(lower - delta, dtype=float)
        rate = self._rate(gap)
        prob = -np.expm1(-rate)
        # -log(F(gap) + u (1 - F(gap)))
        cost = -np.log1p((1.0 - u) * np.expm1(-rate)) / self.lam
        x = search_propensity_array(np.maximum(cost, 1e-300), self.se)
        x = np.maximum(x, gap)
        thin = ~(prob >= self.tail_clip)
        if np.any(thin):
            x = np.where(thin, gap, x)
            prob = np.where(thin, self.tail_clip, prob)
        return delta + x, prob

    def z_cdf(self, y, delta):
        return np.exp(-self._rate(y - delta))

    def u_draw(self, z, delta, u, upper=None):
        if upper is None:
            return _free_normal(delta, self.se, u), 1.0
        return truncnorm_sample(delta, self.se, -np.inf, upper, u, self.tail_clip)

    def u_cdf(self, y, z, delta):
        return special.ndtr((y - delta) / self.se)

    o_draw = CorrelatedTasteModel.o_draw
    o_cdf = CorrelatedTasteModel.o_cdf


def value_model(params: ModelParams, shift: float = 0.0):
    if params.spec == CORRELATED_TASTE:
        return CorrelatedTasteModel(params, shift)
    return StochasticCostModel(params, shift)
