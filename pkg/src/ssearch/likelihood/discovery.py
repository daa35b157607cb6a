"""PR-GHK likelihood of search-and-discovery logs.

The log is cut at its forward-inaccessible steps into segments that end in
a discovery (the last one ends in the purchase). Rather than hard-coding
segment cases, the sampler replays the log to find, for every action, the
window of steps during which it was available; the optimal policy picks the
highest-valued available action, so

* a selected action outranks every action selected later that was already
  available when it was chosen, and
* an action that is never selected is worth less than every action chosen
  while it was available, i.e. less than the minimum over its window, the
  sub-core value.

Discovery values are drawn first: those of the discoveries taken, then
those of discoveries left untaken, which must lie below every choice made
while they were available. Reservation values follow in reverse step
order and the purchase value comes last. Each value is truncated to the
interval set by the values already drawn that it must outrank or be
outranked by, directly or through a chain of rankings; the implied
rankings keep the intervals from coming up empty. Other unselected
actions contribute closed-form factors. Drawing the tightly spread
discovery values first keeps the simulation weights from degenerating on
long logs. Without discoveries this is the descending reservation-value
chain of a full search path.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy import special

from ..core import Kind, ObservedData
from ..simulate.discovery import DiscoveryMarket, LogPlan, RouteCatalog, discovery_tables, plan_log
from ..simulate.params import ModelParams
from .kernels import CorrelatedTasteModel, truncnorm_sample
from .problem import DrawSet, LikelihoodConfig

__all__ = ["discovery_slots", "DiscoveryProblem", "pr_ghk_discovery"]


def discovery_slots(n_products: int, n_routes: int, depth: int) -> int:
    """Slot count: beta, reservation and purchase noise per product, outside, costs."""
    return 2 * n_products + 2 + n_routes * depth


class _QModel:
    """Discovery values of one route: ``q = Theta(c)``, ``log c ~ N(mu, sd^2)``."""

    def __init__(self, table, mu, sd, tail_clip):
        self.table = table
        self.mu = mu
        self.sd = sd
        self.tail_clip = tail_clip

    def draw(self, u, lower=None, upper=None):
        if lower is None and upper is None:
            return self.table.value(self.mu + self.sd * special.ndtri(u)), 1.0
        # q in (lower, upper)  <=>  log C(upper) < log c < log C(lower)
        top = np.inf if lower is None else self.table.log_cost(lower)
        bottom = -np.inf if upper is None else self.table.log_cost(upper)
        log_c, prob = truncnorm_sample(self.mu, self.sd, bottom, top, u, self.tail_clip)
        q = self.table.value(log_c)
        if lower is not None:
            q = np.maximum(q, lower)
        if upper is not None:
            q = np.minimum(q, upper)
        return q, prob

    def cdf(self, y):
        return special.ndtr((self.mu - self.table.log_cost(y)) / self.sd)


def _schedule(plan: LogPlan):
    """Draw order of one log and the bounds of every draw.

    Nodes are the steps of the log followed by the discoveries left untaken
    (kind "D" entries of ``plan.unselected``). Node `a` outranks node `b`
    when its value must be at least that of `b`, directly or through a
    chain of rankings; the implied rankings keep every truncation interval
    non-empty.

    Returns
    -------
    untaken : list of ((route index, t), start, end)
    schedule : list of (node, lower_nodes, upper_nodes)
        Nodes in draw order with the earlier-drawn nodes bounding each
        from below and from above.
    """
    S = len(plan.kinds)
    final = S - 1
    untaken = [(idx, start, end) for kind, idx, start, end in plan.unselected if kind == "D" and start < end]
    n = S + len(untaken)
    above = np.zeros((n, n), dtype=bool)
    for s2 in range(final):
        above[plan.avail[s2]:s2, s2] = True
    above[plan.avail[final]:final, final] = True
    for k, (_, start, end) in enumerate(untaken):
        above[start:end, S + k] = True
    for k in range(n):
        above |= above[:, k:k + 1] & above[k:k + 1, :]
    # discovery values are tightly spread, so they are drawn first, taken and
    # untaken alike; a factor Pr(q < y) with a tight q and a widely spread y
    # would be close to a step function of y
    steps = range(final - 1, -1, -1)
    order = ([s for s in steps if plan.kinds[s] == "D"] + list(range(S, n))
             + [s for s in steps if plan.kinds[s] == "I"] + [final])
    schedule = []
    for k, node in enumerate(order):
        done = order[:k]
        schedule.append((node, [o for o in done if above[node, o]], [o for o in done if above[o, node]]))
    return untaken, schedule


def _bound(vals, nodes, fn):
    out = None
    for o in nodes:
        out = vals[o] if out is None else fn(out, vals[o])
    return out


def _consumer_per_draw(plan: LogPlan, model, qmodels, delta, uni, m, depth, schedule=None):
    """Per-draw likelihood of one log; `uni` has shape (R, slots)."""
    S = len(plan.kinds)
    R = uni.shape[0]
    final = S - 1
    untaken, order = schedule or _schedule(plan)
    vals = [None] * (S + len(untaken))
    z = {}
    p = np.ones(R)

    def slot_d(ri, t):
        return 2 * m + 2 + ri * depth + (t - 1)

    for node, lo_nodes, hi_nodes in order:
        lower = _bound(vals, lo_nodes, np.maximum)
        upper = _bound(vals, hi_nodes, np.minimum)
        kind = plan.kinds[node] if node < S else "D"
        if node == final:
            if kind == "O":
                v, pp = model.o_draw(uni[:, 2 * m + 1], lower=lower, upper=upper)
            else:
                j = plan.index[node]
                v, pp = model.u_draw(z[j], delta[:, j], uni[:, 1 + m + j], upper=upper, lower=lower)
        elif kind == "I":
            idx = plan.index[node]
            v, pp = model.z_draw(delta[:, idx], uni[:, 1 + idx], lower, upper)
            z[idx] = v
        else:
            ri, t = plan.index[node] if node < S else untaken[node - S][0]
            v, pp = qmodels[ri].draw(uni[:, slot_d(ri, t)], lower, upper)
        vals[node] = v
        p = p * pp
    stacked = np.vstack(vals[:S])
    for kind, idx, start, end in plan.unselected:
        if start >= end or kind == "D":
            continue
        y = stacked[start:end].min(axis=0)
        if kind == "I":
            p = p * model.z_cdf(y, delta[:, idx])
        elif kind == "P":
            p = p * model.u_cdf(y, z[idx], delta[:, idx])
        else:
            p = p * model.o_cdf(y)
    return p


class DiscoveryProblem:
    """Discovery-log dataset prepared for repeated likelihood evaluation.

    Parameters
    ----------
    markets : sequence of DiscoveryMarket
    observations : sequence of ObservedData
        Discovery logs.
    catalog : RouteCatalog
        Route populations the beliefs are computed from.
    draws : DrawSet
    n_per_discovery : int
        Products a consumer expects per discovery.
    """

    def __init__(self, markets: Sequence[DiscoveryMarket], observations: Sequence[ObservedData],
                 catalog: RouteCatalog, draws: DrawSet, n_per_discovery: int = 2,
                 cfg: LikelihoodConfig | None = None):
        if len(markets) != len(observations) or draws.n_consumers != len(observations):
            raise ValueError("markets, observations and draws must align")
        self.cfg = cfg or LikelihoodConfig(n_draws=draws.n_draws)
        self.catalog = catalog
        self.n_per_discovery = n_per_discovery
        self.markets = list(markets)
        self.plans = []
        for i, (dm, ob) in enumerate(zip(markets, observations)):
            if ob.kind is not Kind.DISCOVERY_LOG:
                raise ValueError(f"consumer {i}: not a discovery log")
            if tuple(dm.routes) != tuple(r for r in catalog.route_ids if r in dm.routes):
                raise ValueError(f"consumer {i}: routes not in the catalog")
            try:
                self.plans.append(plan_log(dm, ob.actions))
            except ValueError as exc:
                raise ValueError(f"consumer {i}: {exc}") from exc
        self.schedules = [_schedule(plan) for plan in self.plans]
        self.route_pos = {r: k for k, r in enumerate(catalog.route_ids)}
        self.depth = max([dm.n_discoveries(r) for dm in markets for r in dm.routes] + [1])
        need = max(discovery_slots(dm.market.n_products, len(catalog.route_ids), self.depth)
                   for dm in markets)
        if draws.n_slots < need:
            raise ValueError(f"draw set has {draws.n_slots} slots, {need} needed")
        self.draws = draws
        self.x = [dm.market.attributes for dm in markets]
        self.price = [dm.market.prices for dm in markets]
        self.n = len(markets)

    def per_draw(self, params: ModelParams, shift: float = 0.0) -> np.ndarray:
        if not params.disc_log_cost_sd > 0:
            raise ValueError("discovery costs need a positive log-scale sd")
        model = CorrelatedTasteModel(params, shift)
        model.tail_clip = self.cfg.tail_clip
        tables = discovery_tables(self.catalog, params, self.n_per_discovery)
        for t in tables.values():
            # a common shift moves every product, so the route curves move with it
            t.grid = t.grid + shift
            t.lo += shift
            t.hi += shift
        gamma = np.asarray(params.gamma)
        nr = len(self.catalog.route_ids)
        out = np.empty((self.n, self.draws.n_draws))
        for i in range(self.n):
            uni = self.draws.uniforms[i]
            beta = params.beta_mean + params.beta_sd * special.ndtri(uni[:, 0])
            delta = (self.x[i] @ gamma)[None, :] + beta[:, None] * self.price[i][None, :] + shift
            dm = self.markets[i]
            qm = [_QModel(tables[r], params.disc_log_cost_mean, params.disc_log_cost_sd,
                          self.cfg.tail_clip) for r in dm.routes]
            m = dm.market.n_products
            # slots use the catalog-wide route position and a fixed product width
            out[i] = _consumer_per_draw(self.plans[i], model, qm, delta,
                                        _slot_view(uni, dm, self.route_pos, m, self.depth, nr),
                                        m, self.depth, self.schedules[i])
        return out

    def likelihoods(self, params: ModelParams, shift: float = 0.0) -> np.ndarray:
        return self.per_draw(params, shift).mean(axis=1)

    def loglik(self, params: ModelParams) -> float:
        lik = np.maximum(self.likelihoods(params), self.cfg.prob_floor)
        return math.fsum(np.log(lik).tolist())


def _slot_view(uni, dm, route_pos, m, depth, nr):
    """Reorder discovery-cost slots so local route ``ri`` sits at position ``ri``."""
    local = [route_pos[r] for r in dm.routes]
    if local == list(range(len(local))):
        return uni
    base = 2 * m + 2
    cols = list(range(base))
    for g in local:
        cols.extend(range(base + g * depth, base + (g + 1) * depth))
    return uni[:, cols]


def pr_ghk_discovery(obs: ObservedData, dm: DiscoveryMarket, catalog: RouteCatalog,
                     params: ModelParams, draws: DrawSet, n_per_discovery: int | None = None):
    """Simulated probability of one discovery log and its standard error."""
    n = dm.n_per_discovery if n_per_discovery is None else n_per_discovery
    prob = DiscoveryProblem([dm], [obs], catalog, draws, n)
    per = prob.per_draw(params)[0]
    se = float(per.std(ddof=1) / math.sqrt(len(per))) if len(per) > 1 else 0.0
    return float(per.mean()), se
