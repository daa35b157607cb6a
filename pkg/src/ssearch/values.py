"""Values of search actions.

Reservation values of inspections follow from the search propensity
``m_eps(c)``, the gap between a product's reservation value and the
expected part of its utility. Effective values combine a reservation and a
purchase value. Discovery values solve the route-level indifference
condition between paying a discovery cost and stopping.

Normal tail quantities use the complementary forms in :mod:`scipy.special`
(``ndtr``, ``erfcx``) so that nothing cancels in the far tails.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special

__all__ = [
    "SolverConfig",
    "SolverError",
    "RouteBelief",
    "DiscoveryTable",
    "expected_excess",
    "search_propensity",
    "search_propensity_array",
    "reservation_value",
    "effective_value",
    "single_effective_cdf",
    "single_effective_sf",
    "discovery_value",
    "bvn_cdf",
]

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_SQRT_HALF_PI = math.sqrt(0.5 * math.pi)
_SQRT2 = math.sqrt(2.0)
# beyond this point 1 - x*Q(x)/phi(x) is evaluated by its asymptotic series
_SERIES_FROM = 25.0


class SolverError(RuntimeError):
    """Raised when a root finder fails to bracket or converge."""


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances for the scalar root finders.

    Parameters
    ----------
    abs_tol : float
        Absolute tolerance on the residual of the defining equation.
    max_iter : int
        Iteration cap for each solve (bracket expansion and refinement).
    bracket_expand : float
        Geometric growth factor applied when a bracket end must move.
    """

    abs_tol: float = 1e-10
    max_iter: int = 200
    bracket_expand: float = 2.0

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.bracket_expand > 1:
            raise ValueError("bracket_expand must exceed 1")


@dataclass(frozen=True)
class RouteBelief:
    """What a consumer expects from one more discovery on a route.

    Parameters
    ----------
    mean_delta, var_delta : float
        Mean and variance of the deterministic utility of a product that
        the route has not revealed yet.
    taste_var : float
        Variance of the idiosyncratic taste shock known before inspection.
    inspect_cost : float
        Expected inspection cost of a newly revealed product.
    n_per_discovery : int
        Products the consumer expects each discovery to reveal.
    """

    mean_delta: float
    var_delta: float
    taste_var: float
    inspect_cost: float
    n_per_discovery: int

    def __post_init__(self):
        if self.var_delta < 0 or self.taste_var < 0:
            raise ValueError("belief variances must be non-negative")
        if not self.inspect_cost > 0:
            raise ValueError("inspect_cost must be positive")
        if int(self.n_per_discovery) != self.n_per_discovery or self.n_per_discovery < 1:
            raise ValueError("n_per_discovery must be a positive integer")


# ---------------------------------------------------------------------------
# search propensity


def _one_minus_xr(x):
    """1 - x*Q(x)/phi(x) for x > 0, with Q the upper normal tail."""
    out = np.empty_like(x)
    small = x < _SERIES_FROM
    xs = x[small]
    out[small] = 1.0 - xs * _SQRT_HALF_PI * special.erfcx(xs / _SQRT2)
    xl = x[~small]
    r = 1.0 / (xl * xl)
    # sum_k (-1)^k (2k+1)!! / x^(2k+2)
    acc = np.zeros_like(r)
    for coef in (135135.0, -10395.0, 945.0, -105.0, 15.0, -3.0):
        acc = r * (coef + acc)
    out[~small] = r * (1.0 + acc)
    return out


def _log_excess(x):
    """log g(x) and d/dx log g(x), elementwise."""
    x = np.asarray(x, dtype=float)
    logg = np.empty_like(x)
    dlog = np.empty_like(x)
    pos = x > 0
    xp = x[pos]
    k = _one_minus_xr(xp)
    logg[pos] = -0.5 * xp * xp - _LOG_SQRT_2PI + np.log(k)
    # g'/g = -Q/g = -(Q/phi)/(1 - x Q/phi)
    dlog[pos] = -(_SQRT_HALF_PI * special.erfcx(xp / _SQRT2)) / k
    xn = x[~pos]
    q = special.ndtr(-xn)
    g = np.exp(-0.5 * xn * xn - _LOG_SQRT_2PI) - xn * q
    logg[~pos] = np.log(g)
    dlog[~pos] = -q / g
    return logg, dlog


def expected_excess(x):
    """Expected excess ``g(x) = E[max(eps - x, 0)]`` of a standard normal.

    Equals ``phi(x) - x (1 - Phi(x))``; strictly decreasing with
    derivative ``-(1 - Phi(x))``.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)
    pos = x > 0
    xp = x[pos]
    out[pos] = np.exp(-0.5 * xp * xp - _LOG_SQRT_2PI) * _one_minus_xr(xp)
    xn = x[~pos]
    out[~pos] = np.exp(-0.5 * xn * xn - _LOG_SQRT_2PI) - xn * special.ndtr(-xn)
    return float(out[0]) if scalar else out


def _solve_excess(t, cfg):
    """Vectorized root of g(x) = t for t > 0.

    Safeguarded Newton on log g (concave, so the iterates settle on the
    root from above) inside a bisection bracket.
    """
    t = np.asarray(t, dtype=float)
    logt = np.log(t)
    lo = -t - 2.0
    hi = np.full_like(t, 8.0)
    for _ in range(cfg.max_iter):
        need = _log_excess(hi)[0] >= logt
        if not need.any():
            break
        hi = np.where(need, hi * cfg.bracket_expand, hi)
    else:
        raise SolverError("could not bracket the search propensity root")
    # g(x) ~ -x far left, phi(x)/x^2 far right
    x = np.where(t > 0.3989, -t, np.sqrt(np.maximum(-2.0 * (logt + _LOG_SQRT_2PI), 0.0)))
    x = np.clip(x, lo, hi)
    for _ in range(cfg.max_iter):
        h, dh = _log_excess(x)
        h = h - logt
        lo = np.where(h > 0, x, lo)
        hi = np.where(h < 0, x, hi)
        step = h / dh
        x_new = x - step
        outside = ~((x_new > lo) & (x_new < hi))
        x_new = np.where(outside & (h != 0), 0.5 * (lo + hi), x_new)
        x_new = np.where(h == 0, x, x_new)
        done = np.abs(x_new - x) <= 4e-16 * np.maximum(1.0, np.abs(x))
        x = x_new
        if done.all():
            return x
    raise SolverError("search propensity iteration did not converge")


def search_propensity(c: float, sigma_eps: float = 1.0, cfg: SolverConfig | None = None) -> float:
    """Search propensity ``m_eps(c)`` for inspection cost `c`.

    The reservation value of a product exceeds the expected part of its
    utility by ``sigma_eps * x`` where ``g(x) = c / sigma_eps``.

    Parameters
    ----------
    c : float
        Inspection cost, positive.
    sigma_eps : float
        Scale of the normal post-inspection noise, positive.
    cfg : SolverConfig, optional

    Returns
    -------
    float

    Raises
    ------
    ValueError
        On non-positive inputs.
    SolverError
        If the residual tolerance is not met.
    """
    cfg = cfg or SolverConfig()
    if not (c > 0 and sigma_eps > 0) or not (math.isfinite(c) and math.isfinite(sigma_eps)):
        raise ValueError("search cost and noise scale must be positive and finite")
    t = c / sigma_eps
    x = float(_solve_excess(np.array([t]), cfg)[0])
    resid = abs(sigma_eps * expected_excess(x) - c)
    if resid > cfg.abs_tol:
        raise SolverError(f"search propensity residual {resid:.3g} exceeds tolerance")
    h = 1e-4
    if not expected_excess(x - h) > expected_excess(x + h):
        raise SolverError("expected excess not decreasing at the root")
    return sigma_eps * x


def search_propensity_array(c, sigma_eps: float = 1.0, cfg: SolverConfig | None = None):
    """Elementwise :func:`search_propensity` for an array of costs.

    Used inside the likelihood, where residuals are not re-checked.
    """
    cfg = cfg or SolverConfig()
    c = np.asarray(c, dtype=float)
    if np.any(~(c > 0)) or not sigma_eps > 0:
        raise ValueError("search costs and noise scale must be positive")
    shape = c.shape
    x = _solve_excess(c.ravel() / sigma_eps, cfg)
    return (sigma_eps * x).reshape(shape)


def reservation_value(delta: float, taste: float, c: float, sigma_eps: float = 1.0,
                      cfg: SolverConfig | None = None) -> float:
    """Reservation value ``delta + taste + m_eps(c)``."""
    return delta + taste + search_propensity(c, sigma_eps, cfg)


def effective_value(z, u):
    """Effective value ``min(z, u)`` of a product with unknown inspection status."""
    return np.minimum(z, u)


# ---------------------------------------------------------------------------
# effective value of a product revealed by a discovery


def bvn_cdf(h, k, rho: float):
    """Standard bivariate normal cdf ``Pr(X <= h, Y <= k)``, corr `rho`.

    Uses Owen's T function, which stays accurate for small probabilities.
    `rho` must lie strictly inside (-1, 1).
    """
    h, k = np.broadcast_arrays(np.asarray(h, dtype=float), np.asarray(k, dtype=float))
    h = h.copy()
    k = k.copy()
    # Owen's representation is singular at exactly zero; the cdf is continuous there
    h[h == 0] = 1e-300
    k[k == 0] = 1e-300
    s = math.sqrt((1.0 - rho) * (1.0 + rho))
    with np.errstate(over="ignore", invalid="ignore"):
        ah = (k - rho * h) / (h * s)
        ak = (h - rho * k) / (k * s)
    out = 0.5 * (special.ndtr(h) + special.ndtr(k)) - special.owens_t(h, ah) - special.owens_t(k, ak)
    out = out - 0.5 * (h * k < 0)
    # inf bounds
    out = np.where(np.isneginf(h) | np.isneginf(k), 0.0, out)
    out = np.where(np.isposinf(h), special.ndtr(k), out)
    out = np.where(np.isposinf(k), special.ndtr(h), out)
    return np.clip(out, 0.0, 1.0)


def _effective_parts(belief: RouteBelief, sigma_eps: float):
    return belief.mean_delta, math.sqrt(belief.var_delta + belief.taste_var), sigma_eps


def single_effective_sf(belief: RouteBelief, m_ins: float, w, sigma_eps: float = 1.0):
    """Survival function ``Pr(W > w)`` of one newly revealed product.

    ``W = X + min(m_ins, eps)`` with ``X ~ N(mean_delta, var_delta + taste_var)``
    and ``eps ~ N(0, sigma_eps^2)``. ``W > w`` holds exactly when
    ``X + m_ins > w`` and ``X + eps > w``, a bivariate normal orthant.
    """
    mu, s, sig = _effective_parts(belief, sigma_eps)
    w = np.asarray(w, dtype=float)
    if s == 0 and sig == 0:
        return (w < mu + min(m_ins, 0.0)).astype(float)
    if s == 0:
        return np.where(mu + m_ins > w, special.ndtr((mu - w) / sig), 0.0)
    if sig == 0:
        return special.ndtr((mu + min(m_ins, 0.0) - w) / s)
    tot = math.hypot(s, sig)
    a = (w - mu - m_ins) / s
    b = (w - mu) / tot
    return bvn_cdf(-a, -b, s / tot)


def single_effective_cdf(belief: RouteBelief, m_ins: float, w, sigma_eps: float = 1.0):
    """Cdf ``Pr(W <= w)`` of the effective value of one revealed product.

    Exact bivariate-normal evaluation (see :func:`single_effective_sf`);
    the lower tail is computed as ``Phi(a) + Phi(b) - Phi2(a, b)`` so it
    keeps relative accuracy when small.
    """
    mu, s, sig = _effective_parts(belief, sigma_eps)
    w = np.asarray(w, dtype=float)
    if s == 0 or sig == 0:
        return 1.0 - single_effective_sf(belief, m_ins, w, sigma_eps)
    tot = math.hypot(s, sig)
    a = (w - mu - m_ins) / s
    b = (w - mu) / tot
    out = special.ndtr(a) + special.ndtr(b) - bvn_cdf(a, b, s / tot)
    return np.clip(out, 0.0, 1.0)


def _discovery_integrand(belief, m_ins, sigma_eps):
    n = belief.n_per_discovery

    def f(w):
        sf = single_effective_sf(belief, m_ins, w, sigma_eps)
        # 1 - (1 - sf)^n without cancellation
        with np.errstate(divide="ignore"):
            return -np.expm1(n * np.log1p(-sf))

    return f


def _effective_range(belief, m_ins, sigma_eps):
    """Interval outside which 1 - G is 1 (below) or negligible (above)."""
    mu, s, sig = _effective_parts(belief, sigma_eps)
    tot = math.hypot(s, sig)
    spread = max(tot, 1e-12)
    hi = mu + 9.0 * spread + 9.0 * math.sqrt(math.log(belief.n_per_discovery + 1.0)) * spread
    lo = mu - abs(m_ins) - 9.0 * spread - 1.0
    return lo, hi


def _discovery_cost_at(q, belief, m_ins, sigma_eps):
    """``C(q) = int_q^inf (1 - G(w)) dw`` by adaptive quadrature."""
    f = _discovery_integrand(belief, m_ins, sigma_eps)
    lo, hi = _effective_range(belief, m_ins, sigma_eps)
    mu, s, sig = _effective_parts(belief, sigma_eps)
    total = 0.0
    a = q
    if a < lo:
        total += lo - a
        a = lo
    if a < hi:
        # kinks only in degenerate beliefs; give quad the location
        points = [p for p in (mu + min(m_ins, 0.0), mu + m_ins) if a < p < hi] or None
        val, _ = integrate.quad(lambda x: float(f(x)), a, hi, epsabs=1e-13, epsrel=1e-12,
                                limit=200, points=points)
        total += val
    return total


def discovery_value(belief: RouteBelief, m_ins: float, c_dis: float,
                    cfg: SolverConfig | None = None, sigma_eps: float = 1.0) -> float:
    """Discovery value of a route for discovery cost `c_dis`.

    Solves ``c_dis = int_q^inf (1 - G(w)) dw`` where ``G = F_w^n`` is the
    cdf of the best effective value among the ``n`` products a discovery is
    expected to reveal.

    Parameters
    ----------
    belief : RouteBelief
    m_ins : float
        Search propensity of the products the route reveals.
    c_dis : float
        Discovery cost, positive.
    cfg : SolverConfig, optional
    sigma_eps : float
        Scale of post-inspection noise.

    Returns
    -------
    float
    """
    cfg = cfg or SolverConfig()
    if not c_dis > 0:
        raise ValueError("discovery cost must be positive")

    def resid(q):
        return _discovery_cost_at(q, belief, m_ins, sigma_eps) - c_dis

    lo, hi = _effective_range(belief, m_ins, sigma_eps)
    a, b = lo - c_dis, hi
    step = max(hi - lo, 1.0)
    for _ in range(cfg.max_iter):
        if resid(a) > 0:
            break
        a -= step
        step *= cfg.bracket_expand
    else:
        raise SolverError("could not bracket the discovery value")
    if resid(b) > 0:
        # tiny costs: the root sits in the far upper tail of W_max
        step = max(hi - lo, 1.0)
        for _ in range(cfg.max_iter):
            a, b = b, b + step
            if resid(b) <= 0:
                break
        else:
            raise SolverError("could not bracket the discovery value")
    q, info = optimize.brentq(resid, a, b, xtol=1e-13, rtol=1e-15, maxiter=cfg.max_iter,
                              full_output=True)
    if not info.converged:
        raise SolverError("discovery value solver did not converge")
    return float(q)


class DiscoveryTable:
    """Tabulated discovery cost curve ``C(q)`` for fast likelihood use.

    ``C`` is evaluated once on a fine grid by cumulative Simpson
    integration and interpolated in log space. Below the grid, ``1 - G``
    is one, so ``C`` grows linearly; above it, ``C`` is treated as zero.

    Parameters
    ----------
    belief : RouteBelief
    m_ins : float
    sigma_eps : float
    n_grid : int
    """

    def __init__(self, belief: RouteBelief, m_ins: float, sigma_eps: float = 1.0,
                 n_grid: int = 16001):
        lo, hi = _effective_range(belief, m_ins, sigma_eps)
        grid = np.linspace(lo, hi, n_grid)
        f = _discovery_integrand(belief, m_ins, sigma_eps)(grid)
        tail = integrate.cumulative_simpson(f[::-1], x=-grid[::-1], initial=0.0)[::-1]
        # guard monotonicity against quadrature wiggle in the far tail
        cost = np.minimum.accumulate(tail)
        keep = cost > 1e-200
        self.grid = grid[keep]
        self.log_cost_grid = np.log(cost[keep])
        self.lo = float(self.grid[0])
        self.hi = float(self.grid[-1])
        self._cost_lo = float(cost[0])

    def log_cost(self, q):
        """``log C(q)``; ``-inf`` past the top of the table."""
        q = np.asarray(q, dtype=float)
        inside = np.interp(q, self.grid, self.log_cost_grid)
        below = np.log(self._cost_lo + (self.lo - np.minimum(q, self.lo)))
        out = np.where(q < self.lo, below, inside)
        return np.where(q > self.hi, -np.inf, out)

    def value(self, log_c):
        """Discovery value ``q`` solving ``log C(q) = log_c``."""
        log_c = np.asarray(log_c, dtype=float)
        top = self.log_cost_grid[0]
        inside = np.interp(log_c, self.log_cost_grid[::-1], self.grid[::-1])
        below = self.lo - (np.exp(np.maximum(log_c, top)) - self._cost_lo)
        return np.where(log_c > top, below, inside)
