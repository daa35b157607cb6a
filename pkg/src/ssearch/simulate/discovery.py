"""Search with product discovery.

A consumer starts aware of a few products and may pay to discover more
through routes. Each discovery on a route reveals the next ``n`` products
of that route (fewer once the route runs dry). At every step the consumer
takes the available action with the highest value: inspect a revealed
product (reservation value ``z``), buy an inspected product or the outside
option (purchase value ``u``), or discover on a route (discovery value
``q``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import OUTSIDE, Action, Kind, Market, ObservedData
from ..values import DiscoveryTable, RouteBelief
from .params import ModelParams

__all__ = [
    "RouteCatalog",
    "DiscoveryMarket",
    "route_beliefs",
    "discovery_tables",
    "draw_discovery_values",
    "simulate_discovery_batch",
    "simulate_discovery_search",
    "decode_actions",
    "encode_actions",
    "LogPlan",
    "plan_log",
    "check_discovery_log",
    "available_actions",
    "enumerate_logs",
]


@dataclass(frozen=True, eq=False)
class RouteCatalog:
    """All products reachable through each route.

    Parameters
    ----------
    attributes : dict of int to ndarray, shape (n_r, 3)
    prices : dict of int to ndarray, shape (n_r,)
    """

    attributes: dict
    prices: dict

    @property
    def route_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.attributes))

    def size(self, route: int) -> int:
        return len(self.prices[route])


def route_beliefs(catalog: RouteCatalog, params: ModelParams, n_per_discovery: int):
    """Beliefs about undiscovered products, from the route's utility distribution."""
    out = {}
    g = np.asarray(params.gamma)
    for r in catalog.route_ids:
        delta = catalog.attributes[r] @ g + params.beta_mean * catalog.prices[r]
        out[r] = RouteBelief(float(delta.mean()), float(delta.var()), params.sigma_taste ** 2,
                             math.exp(params.log_cost_mean), n_per_discovery)
    return out


def discovery_tables(catalog: RouteCatalog, params: ModelParams, n_per_discovery: int):
    """Discovery-cost curves per route under `params`."""
    m_ins = params.inspect_propensity
    return {r: DiscoveryTable(b, m_ins, params.sigma_eps)
            for r, b in route_beliefs(catalog, params, n_per_discovery).items()}


@dataclass(frozen=True)
class DiscoveryMarket:
    """One consumer's products and the order in which routes reveal them.

    Parameters
    ----------
    market : Market
        Every product the consumer could ever see, local ids ``1..P``,
        with ``route_id`` set.
    initial : tuple of int
        Products visible from the start.
    reveal : tuple of (route_id, tuple of int)
        Per route, the products in the order discoveries reveal them.
    n_per_discovery : int
    max_discoveries : int
    """

    market: Market
    initial: tuple[int, ...]
    reveal: tuple[tuple[int, tuple[int, ...]], ...]
    n_per_discovery: int = 2
    max_discoveries: int = 15

    def __post_init__(self):
        object.__setattr__(self, "initial", tuple(int(j) for j in self.initial))
        object.__setattr__(self, "reveal", tuple(
            (int(r), tuple(int(j) for j in prods)) for r, prods in sorted(self.reveal)))
        seen = list(self.initial) + [j for _, prods in self.reveal for j in prods]
        if sorted(seen) != list(range(1, self.market.n_products + 1)):
            raise ValueError("every product must be initial or revealed by exactly one route")
        if self.n_per_discovery < 1 or self.max_discoveries < 0:
            raise ValueError("invalid discovery settings")

    @property
    def routes(self) -> tuple[int, ...]:
        return tuple(r for r, _ in self.reveal)

    def revealed_by(self, route: int, t: int) -> tuple[int, ...]:
        """Products revealed by the `t`-th discovery (from 1) on `route`."""
        prods = dict(self.reveal)[route]
        n = self.n_per_discovery
        return prods[(t - 1) * n: t * n]

    def n_discoveries(self, route: int) -> int:
        """Discoveries a route can support before it runs dry."""
        return math.ceil(len(dict(self.reveal)[route]) / self.n_per_discovery)


def draw_discovery_values(dm: DiscoveryMarket, params: ModelParams, tables: dict,
                          rng: np.random.Generator, n: int):
    """`n` independent draws of every latent value in a discovery market.

    Returns ``z, u`` (n, P), ``u0`` (n,) or None, and ``q`` of shape
    ``(n, n_routes, T)`` with ``T`` the largest route depth.
    """
    mk = dm.market
    m = mk.n_products
    beta = params.beta_mean + params.beta_sd * rng.standard_normal(n)
    delta = mk.attributes @ np.asarray(params.gamma) + beta[:, None] * mk.prices
    zeta = params.sigma_taste * rng.standard_normal((n, m))
    eps = params.sigma_eps * rng.standard_normal((n, m))
    z = delta + zeta + params.inspect_propensity
    u = delta + zeta + eps
    u0 = params.gamma_outside + params.sigma_eps * rng.standard_normal(n) if mk.has_outside else None
    depth = max([dm.n_discoveries(r) for r in dm.routes], default=0)
    q = np.full((n, len(dm.routes), max(depth, 1)), -np.inf)
    for ri, r in enumerate(dm.routes):
        for t in range(dm.n_discoveries(r)):
            log_c = params.disc_log_cost_mean + params.disc_log_cost_sd * rng.standard_normal(n)
            q[:, ri, t] = tables[r].value(log_c)
    return z, u, u0, q


def simulate_discovery_batch(dm: DiscoveryMarket, z, u, u0, q) -> np.ndarray:
    """Greedy optimal policy for many value draws at once.

    Returns
    -------
    codes : ndarray of int, shape (n, max_steps)
        Action codes per step, -1 after the purchase: ``j - 1`` inspects
        product ``j``, ``P + j - 1`` buys it, ``2P`` buys the outside
        option and ``2P + 1 + ri`` discovers on the ``ri``-th route.
    """
    z = np.asarray(z, dtype=float)
    n, m = z.shape
    routes = dm.routes
    nr = len(routes)
    depth = [dm.n_discoveries(r) for r in routes]
    reveal = []
    for ri, r in enumerate(routes):
        masks = np.zeros((max(depth[ri], 1), m), dtype=bool)
        for t in range(depth[ri]):
            masks[t, [j - 1 for j in dm.revealed_by(r, t + 1)]] = True
        reveal.append(masks)
    revealed = np.zeros((n, m), dtype=bool)
    revealed[:, [j - 1 for j in dm.initial]] = True
    inspected = np.zeros((n, m), dtype=bool)
    count = np.zeros((n, nr), dtype=int)
    total = np.zeros(n, dtype=int)
    done = np.zeros(n, dtype=bool)
    max_steps = 2 * m + sum(depth) + 1
    codes = np.full((n, max_steps), -1, dtype=int)
    rows = np.arange(n)
    outside = np.full(n, -np.inf) if u0 is None else np.asarray(u0, dtype=float)
    for step in range(max_steps):
        if done.all():
            break
        val_i = np.where(revealed & ~inspected, z, -np.inf)
        val_p = np.where(inspected, u, -np.inf)
        val_d = np.full((n, nr), -np.inf)
        for ri in range(nr):
            open_ = (count[:, ri] < depth[ri]) & (total < dm.max_discoveries)
            t = np.minimum(count[:, ri], q.shape[2] - 1)
            val_d[:, ri] = np.where(open_, q[rows, ri, t], -np.inf)
        vals = np.concatenate([val_i, val_p, outside[:, None], val_d], axis=1)
        a = np.argmax(vals, axis=1)
        live = ~done
        codes[live, step] = a[live]
        ins = live & (a < m)
        inspected[rows[ins], a[ins]] = True
        buy = live & (a >= m) & (a <= 2 * m)
        done |= buy
        for ri in range(nr):
            dis = live & (a == 2 * m + 1 + ri)
            if dis.any():
                revealed[dis] |= reveal[ri][count[dis, ri]]
                count[dis, ri] += 1
                total[dis] += 1
    if not done.all():
        raise RuntimeError("discovery search did not terminate")
    return codes


def decode_actions(dm: DiscoveryMarket, codes) -> tuple[Action, ...]:
    m = dm.market.n_products
    out = []
    for a in codes:
        a = int(a)
        if a < 0:
            break
        if a < m:
            out.append(Action("I", a + 1))
        elif a < 2 * m:
            out.append(Action("P", a - m + 1))
        elif a == 2 * m:
            out.append(Action("P", OUTSIDE))
        else:
            out.append(Action("D", dm.routes[a - 2 * m - 1]))
    return tuple(out)


def encode_actions(dm: DiscoveryMarket, actions) -> np.ndarray:
    m = dm.market.n_products
    out = []
    for a in actions:
        if a.kind == "I":
            out.append(a.target - 1)
        elif a.kind == "P":
            out.append(2 * m if a.target == OUTSIDE else m + a.target - 1)
        else:
            out.append(2 * m + 1 + dm.routes.index(a.target))
    return np.array(out, dtype=int)


def simulate_discovery_search(dm: DiscoveryMarket, params: ModelParams, tables: dict,
                              rng: np.random.Generator):
    """One consumer's discovery log and the latent values behind it."""
    z, u, u0, q = draw_discovery_values(dm, params, tables, rng, 1)
    codes = simulate_discovery_batch(dm, z, u, u0, q)
    obs = ObservedData(Kind.DISCOVERY_LOG, actions=decode_actions(dm, codes[0]))
    return obs, (z[0], u[0], None if u0 is None else float(u0[0]), q[0])


@dataclass
class LogPlan:
    """Replayed availability structure of one log (parameter free)."""

    kinds: list  # per step: "I", "D", "P", "O"
    index: list  # product index, (route index, t) or None
    avail: list  # first step at which the chosen action was available
    unselected: list  # (kind, index, start, end)


def plan_log(dm: DiscoveryMarket, actions) -> LogPlan:
    """Replay `actions` and record when every action was available.

    Raises
    ------
    ValueError
        If the log takes an action that was not available.
    """
    routes = dm.routes
    depth = [dm.n_discoveries(r) for r in routes]
    has_out = dm.market.has_outside
    # key -> first available step; absent once taken or withdrawn
    open_ = {("I", j - 1): 0 for j in dm.initial}
    if has_out:
        open_[("O", None)] = 0
    cap = dm.max_discoveries
    for ri in range(len(routes)):
        if depth[ri] > 0 and cap > 0:
            open_[("D", (ri, 1))] = 0
    count = [0] * len(routes)
    total = 0
    kinds, index, avail, unselected = [], [], [], []
    n = len(actions)
    for s, a in enumerate(actions):
        if a.kind == "I":
            key = ("I", a.target - 1)
        elif a.kind == "P":
            key = ("O", None) if a.target == OUTSIDE else ("P", a.target - 1)
        else:
            if a.target not in routes:
                raise ValueError(f"step {s}: unknown route {a.target}")
            ri = routes.index(a.target)
            key = ("D", (ri, count[ri] + 1))
        if key not in open_:
            raise ValueError(f"step {s}: {a.kind}{a.target} was not available")
        if a.kind == "P" and s != n - 1:
            raise ValueError("the purchase must end the log")
        kinds.append(key[0])
        index.append(key[1])
        avail.append(open_.pop(key))
        if key[0] == "I":
            open_[("P", key[1])] = s + 1
        elif key[0] == "D":
            ri, t = key[1]
            for j in dm.revealed_by(routes[ri], t):
                open_[("I", j - 1)] = s + 1
            count[ri] += 1
            total += 1
            if total >= cap:
                # the discovery budget is spent: pending discoveries leave the choice set
                for k in [k for k in open_ if k[0] == "D"]:
                    unselected.append((k[0], k[1], open_.pop(k), s + 1))
            elif count[ri] < depth[ri]:
                open_[("D", (ri, t + 1))] = s + 1
    if not kinds or kinds[-1] not in ("P", "O"):
        raise ValueError("a discovery log must end in a purchase")
    for k, start in open_.items():
        unselected.append((k[0], k[1], start, n))
    return LogPlan(kinds, index, avail, unselected)

def _action_value(kind, idx, z, u, u0, q):
    if kind == "I":
        return z[idx]
    if kind == "P":
        return u[idx]
    if kind == "O":
        return u0
    return q[idx[0], idx[1] - 1]


def check_discovery_log(dm: DiscoveryMarket, actions, z, u, u0, q) -> bool:
    """Whether a log is the optimal policy's choice under the given values.

    Two ranking conditions: a selected action beats every later-selected
    action that was already available, and every action never selected is
    below the value of each action chosen while it was available.
    """
    plan = plan_log(dm, actions)
    v = [_action_value(k, i, z, u, u0, q) for k, i in zip(plan.kinds, plan.index)]
    for s2 in range(len(v)):
        for s in range(plan.avail[s2], s2):
            if not v[s] > v[s2]:
                return False
    for kind, idx, start, end in plan.unselected:
        if start < end and not _action_value(kind, idx, z, u, u0, q) < min(v[start:end]):
            return False
    return True


def available_actions(dm: DiscoveryMarket, actions=()) -> list[Action]:
    """Actions open after taking `actions`; empty once a purchase was made."""
    if actions and actions[-1].kind == "P":
        return []
    routes = dm.routes
    inspected = {a.target for a in actions if a.kind == "I"}
    done = {r: sum(1 for a in actions if a.kind == "D" and a.target == r) for r in routes}
    total = sum(done.values())
    revealed = set(dm.initial)
    for r in routes:
        for t in range(1, done[r] + 1):
            revealed.update(dm.revealed_by(r, t))
    out = [Action("I", j) for j in sorted(revealed - inspected)]
    out += [Action("P", j) for j in sorted(inspected)]
    if dm.market.has_outside:
        out.append(Action("P", OUTSIDE))
    if total < dm.max_discoveries:
        out += [Action("D", r) for r in routes if done[r] < dm.n_discoveries(r)]
    return out


def enumerate_logs(dm: DiscoveryMarket) -> list[tuple[Action, ...]]:
    """Every feasible log of a (small) discovery market, by depth-first search."""
    out = []
    stack = [()]
    while stack:
        log = stack.pop()
        for a in available_actions(dm, log):
            nxt = log + (a,)
            if a.kind == "P":
                out.append(nxt)
            else:
                stack.append(nxt)
    return sorted(out, key=lambda acts: [(a.kind, a.target) for a in acts])
