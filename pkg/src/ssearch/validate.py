"""Self-checks with fixed seeds: checker equivalence, oracle agreement, invariances.

Each suite returns a list of :class:`Check` records carrying the measured
quantity next to its tolerance, so reports show by how much a check passed.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from .core import OUTSIDE, Kind, Market, ObservedData, censor, enumerate_sequences
from .core import check_osr_batch, check_pr_batch, check_pr_matrix_batch
from .likelihood.discovery import DiscoveryProblem, discovery_slots
from .likelihood.oracle import match_views
from .likelihood.problem import BaselineProblem, DrawSet, baseline_slots
from .simulate.baseline import batch_to_sequences, draw_values_batch, simulate_search_batch
from .simulate.discovery import (DiscoveryMarket, RouteCatalog, decode_actions, discovery_tables,
                                 draw_discovery_values, encode_actions, enumerate_logs,
                                 simulate_discovery_batch)
from .simulate.params import CORRELATED_TASTE, STOCHASTIC_COST, ModelParams
from .values import search_propensity_array

__all__ = ["Check", "SUITES", "run_suite", "equivalence_suite", "roundtrip_suite",
           "oracle_suite", "invariance_suite", "solver_suite"]


@dataclass
class Check:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def _random_market(rng, m, outside):
    x = rng.integers(0, 2, (m, 3))
    return Market.from_arrays(x, rng.uniform(0, 2, m), outside)


def _random_params(rng, spec=CORRELATED_TASTE) -> ModelParams:
    return ModelParams(
        gamma=tuple(rng.uniform(-1, 1, 3)),
        gamma_outside=float(rng.uniform(-1.0, 0.5)),
        beta_mean=float(rng.uniform(-1.0, -0.2)),
        beta_sd=float(rng.uniform(0.0, 0.5)),
        log_cost_mean=float(rng.uniform(-4.0, -0.5)),
        cost_scale=float(rng.uniform(0.2, 1.5)),
        spec=spec,
    )


# ---------------------------------------------------------------- equivalence

def _pairs(rng, n, m):
    """Value draws in search-position order with a mix of optimal, perturbed and random records."""
    base = rng.standard_normal((n, m))
    z = base + rng.uniform(-1, 1, (n, m)) + rng.uniform(-1, 1.5, (n, 1))
    u = base + rng.standard_normal((n, m))
    order, J, h = simulate_search_batch(z, u, None)
    kind = rng.integers(0, 3, n)
    # perturbed: swap two positions or move the purchase
    swap = (kind == 1) & (m > 1)
    a = rng.integers(0, m, n)
    b = rng.integers(0, m, n)
    rows = np.arange(n)
    oa, ob = order[rows, a].copy(), order[rows, b].copy()
    order[swap, a[swap]] = ob[swap]
    order[swap, b[swap]] = oa[swap]
    moveh = (kind == 1) & (rng.random(n) < 0.5)
    h = np.where(moveh, rng.integers(0, m, n) % np.maximum(J, 1), h)
    rnd = kind == 2
    J = np.where(rnd, rng.integers(1, m + 1, n), J)
    h = np.where(rnd, rng.integers(0, m, n) % J, h)
    order[rnd] = np.argsort(rng.random((int(rnd.sum()), m)), axis=1)
    z_pos = np.take_along_axis(z, order, 1)
    u_pos = np.take_along_axis(u, order, 1)
    return z_pos, u_pos, J, h


def equivalence_suite(n_pairs: int = 1_000_000, seed: int = 11) -> list[Check]:
    """The three optimality checkers agree on every (values, record) pair."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    per = n_pairs // 5
    disagree = 0
    total = 0
    n_true = 0
    for m in range(1, 6):
        n = per if m < 5 else n_pairs - 4 * per
        z_pos, u_pos, J, h = _pairs(rng, n, m)
        for jj in range(1, m + 1):
            for hh in range(jj):
                sel = (J == jj) & (h == hh)
                if not sel.any():
                    continue
                zs, us = z_pos[sel], u_pos[sel]
                a = check_osr_batch(zs, us, None, jj, hh)
                b = check_pr_batch(zs, us, None, jj, hh)
                c = check_pr_matrix_batch(zs, us, jj, hh)
                disagree += int(np.sum((a != b) | (a != c)))
                n_true += int(a.sum())
                total += int(sel.sum())
    # outside option: rules and ranking conditions (no matrix form)
    n_out = 0
    dis_out = 0
    for m in range(1, 6):
        n = max(1, n_pairs // 20)
        z = rng.standard_normal((n, m)) + rng.uniform(-1, 1.5, (n, 1))
        u = z + rng.standard_normal((n, m)) - 0.5
        u0 = rng.standard_normal(n) - 0.3
        order, J, h = simulate_search_batch(z, u, u0)
        flip = rng.random(n) < 0.5
        J = np.where(flip, rng.integers(0, m + 1, n), J)
        h = np.where(flip, rng.integers(-1, m, n), h)
        h = np.where(h >= J, -1, h)
        z_pos = np.take_along_axis(z, order, 1)
        u_pos = np.take_along_axis(u, order, 1)
        for jj in range(0, m + 1):
            for hh in range(-1, jj):
                sel = (J == jj) & (h == hh)
                if sel.any():
                    a = check_osr_batch(z_pos[sel], u_pos[sel], u0[sel], jj, hh)
                    b = check_pr_batch(z_pos[sel], u_pos[sel], u0[sel], jj, hh)
                    dis_out += int(np.sum(a != b))
                    n_out += int(sel.sum())
    dt = time.perf_counter() - t0
    return [
        Check("equivalence: rules == ranking == matrix", disagree == 0 and total == n_pairs,
              float(disagree), 0.0, f"{total} pairs, {n_true} optimal", dt),
        Check("equivalence with outside option: rules == ranking", dis_out == 0, float(dis_out), 0.0,
              f"{n_out} pairs"),
    ]


# ---------------------------------------------------------------- round trip

def roundtrip_suite(n_sims: int = 100_000, n_unique: int = 20_000, seed: int = 12) -> list[Check]:
    """Simulated records satisfy the ranking conditions, and only they do."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    bad = 0
    done = 0
    k = 0
    while done < n_sims:
        m = 1 + k % 5
        outside = k % 2 == 0
        spec = CORRELATED_TASTE if k % 4 < 2 else STOCHASTIC_COST
        mk = _random_market(rng, m, outside)
        params = _random_params(rng, spec)
        n = min(5000, n_sims - done)
        z, u, u0 = draw_values_batch(mk, params, rng, n)
        order, J, h = simulate_search_batch(z, u, u0)
        z_pos = np.take_along_axis(z, order, 1)
        u_pos = np.take_along_axis(u, order, 1)
        for jj in np.unique(J):
            for hh in np.unique(h[J == jj]):
                sel = (J == jj) & (h == hh)
                ok = check_pr_batch(z_pos[sel], u_pos[sel], None if u0 is None else u0[sel], int(jj), int(hh))
                bad += int((~ok).sum())
        done += n
        k += 1
    t1 = time.perf_counter()
    # exhaustive: exactly one record meets the conditions
    not_one = 0
    n_checked = 0
    for m in (1, 2, 3):
        for outside in (False, True):
            mk = _random_market(rng, m, outside)
            params = _random_params(rng)
            z, u, u0 = draw_values_batch(mk, params, rng, n_unique)
            count = np.zeros(n_unique, dtype=int)
            for seq in enumerate_sequences(mk):
                order = np.array([j - 1 for j in seq.inspected] + [j - 1 for j in seq.uninspected])
                hh = seq.h - 1
                count += check_pr_batch(z[:, order], u[:, order], u0, seq.J, hh)
            not_one += int(np.sum(count != 1))
            n_checked += n_unique
    t2 = time.perf_counter()
    return [
        Check("round trip: simulated records satisfy the ranking conditions", bad == 0, float(bad), 0.0,
              f"{n_sims} simulations", t1 - t0),
        Check("round trip: exactly one record per value draw (|M| <= 3)", not_one == 0, float(not_one), 0.0,
              f"{n_checked} draws enumerated", t2 - t1),
    ]


# ---------------------------------------------------------------- oracle

BASELINE_VIEWS = (Kind.FULL_PATH, Kind.PURCHASE_ONLY, Kind.SEARCHED_SET, Kind.FIRST_AND_PURCHASE,
                  Kind.SUBSET_PATH)


def _all_views(mk: Market, kind: Kind, observable):
    seen = {}
    for seq in enumerate_sequences(mk):
        ob = censor(seq, kind, observable)
        seen.setdefault(ob.key(), ob)
    return [seen[k] for k in sorted(seen, key=repr)]


def _crude_hits(views, order, J, h):
    return np.array([int(match_views(ob, order, J, h).sum()) for ob in views])


def _z(p_g, se_g, p_c, se_c):
    s = math.sqrt(se_g ** 2 + se_c ** 2)
    if s == 0:
        return 0.0 if p_g == p_c else math.inf
    return abs(p_g - p_c) / s


def oracle_suite(n_vectors: int = 20, n_draws: int = 5000, n_sims: int = 200_000,
                 seed: int = 13, z_tol: float = 3.0, sum_tol: float = 0.02) -> list[Check]:
    """Simulated probabilities against brute-force frequencies.

    For each regime and parameter vector one record is drawn from the model
    and its GHK probability compared with the crude frequency; all views of
    the market are enumerated and their GHK probabilities summed.
    """
    rng = np.random.default_rng(seed)
    worst = {k: 0.0 for k in BASELINE_VIEWS}
    sums = {k: [] for k in BASELINE_VIEWS}
    times = {k: 0.0 for k in BASELINE_VIEWS}
    for v in range(n_vectors):
        m = 1 + v % 3
        outside = v % 2 == 0
        spec = CORRELATED_TASTE if v % 4 < 2 else STOCHASTIC_COST
        mk = _random_market(rng, m, outside)
        params = _random_params(rng, spec)
        observable = sorted(rng.choice(np.arange(1, m + 1), int(rng.integers(1, m + 1)), replace=False).tolist())
        z, u, u0 = draw_values_batch(mk, params, rng, n_sims)
        order, J, h = simulate_search_batch(z, u, u0)
        true_seq = batch_to_sequences(order[:1], J[:1], h[:1], mk)[0]
        for kind in BASELINE_VIEWS:
            t0 = time.perf_counter()
            views = _all_views(mk, kind, observable)
            draws = DrawSet.generate(len(views), n_draws, baseline_slots(m), seed * 1000 + v)
            per = BaselineProblem([mk] * len(views), views, draws).per_draw(params)
            p_g = per.mean(axis=1)
            se_g = per.std(axis=1, ddof=1) / math.sqrt(n_draws)
            sums[kind].append(float(p_g.sum()))
            target = censor(true_seq, kind, observable).key()
            i = [ob.key() for ob in views].index(target)
            hits = int(match_views(views[i], order, J, h).sum())
            p_c = hits / n_sims
            se_c = math.sqrt(p_c * (1 - p_c) / n_sims)
            worst[kind] = max(worst[kind], _z(p_g[i], se_g[i], p_c, se_c))
            times[kind] += time.perf_counter() - t0
    out = []
    for kind in BASELINE_VIEWS:
        dev = max(abs(s - 1) for s in sums[kind])
        out.append(Check(f"oracle {kind.value}: GHK vs crude frequency", worst[kind] <= z_tol,
                         worst[kind], z_tol, f"{n_vectors} parameter vectors, max |z|", times[kind]))
        out.append(Check(f"oracle {kind.value}: enumerated probabilities sum to 1", dev <= sum_tol,
                         dev, sum_tol, f"sums {min(sums[kind]):.4f}..{max(sums[kind]):.4f}"))
    out += discovery_oracle(n_vectors, n_draws, n_sims, seed + 1, z_tol, sum_tol)
    return out


def toy_discovery(rng, v):
    """A three-product market with one route, plus a small route catalogue."""
    n_cat = 20
    cat = RouteCatalog({1: rng.integers(0, 2, (n_cat, 3)).astype(float)}, {1: rng.uniform(0, 2, n_cat)})
    mk = Market.from_arrays(rng.integers(0, 2, (3, 3)), rng.uniform(0, 2, 3), True, [1, 1, 1])
    n_per = 1 + v % 2
    return DiscoveryMarket(mk, (1,), ((1, (2, 3)),), n_per, 15), cat


def _discovery_params(rng) -> ModelParams:
    return ModelParams(
        gamma=tuple(rng.uniform(-0.5, 1.0, 3)),
        gamma_outside=float(rng.uniform(-1.0, 0.5)),
        beta_mean=float(rng.uniform(-1.0, -0.2)),
        beta_sd=float(rng.uniform(0.0, 0.3)),
        log_cost_mean=float(rng.uniform(-3.0, -1.0)),
        disc_log_cost_mean=float(rng.uniform(-3.5, -1.5)),
        disc_log_cost_sd=float(rng.uniform(0.2, 0.8)),
    )


def discovery_oracle(n_vectors=20, n_draws=5000, n_sims=200_000, seed=14, z_tol=3.0, sum_tol=0.02):
    rng = np.random.default_rng(seed)
    worst = 0.0
    sums = []
    t0 = time.perf_counter()
    for v in range(n_vectors):
        dm, cat = toy_discovery(rng, v)
        params = _discovery_params(rng)
        tables = discovery_tables(cat, params, dm.n_per_discovery)
        z, u, u0, q = draw_discovery_values(dm, params, tables, rng, n_sims)
        codes = simulate_discovery_batch(dm, z, u, u0, q)
        logs = enumerate_logs(dm)
        obs = [ObservedData(Kind.DISCOVERY_LOG, actions=a) for a in logs]
        depth = max(dm.n_discoveries(r) for r in dm.routes)
        draws = DrawSet.generate(len(obs), n_draws, discovery_slots(3, 1, depth), seed * 1000 + v)
        per = DiscoveryProblem([dm] * len(obs), obs, cat, draws, dm.n_per_discovery).per_draw(params)
        p_g = per.mean(axis=1)
        se_g = per.std(axis=1, ddof=1) / math.sqrt(n_draws)
        sums.append(float(p_g.sum()))
        target = tuple(decode_actions(dm, codes[0]))
        i = logs.index(target)
        enc = encode_actions(dm, target)
        row = np.full(codes.shape[1], -1)
        row[: len(enc)] = enc
        hits = int(np.all(codes == row, axis=1).sum())
        p_c = hits / n_sims
        se_c = math.sqrt(p_c * (1 - p_c) / n_sims)
        worst = max(worst, _z(p_g[i], se_g[i], p_c, se_c))
    dev = max(abs(s - 1) for s in sums)
    dt = time.perf_counter() - t0
    return [
        Check("oracle discovery: GHK vs crude frequency", worst <= z_tol, worst, z_tol,
              f"{n_vectors} parameter vectors, max |z|", dt),
        Check("oracle discovery: enumerated logs sum to 1", dev <= sum_tol, dev, sum_tol,
              f"sums {min(sums):.4f}..{max(sums):.4f}"),
    ]


# ---------------------------------------------------------------- invariances

def solver_suite(n_grid: int = 2001) -> list[Check]:
    """Search propensity residual and homogeneity."""
    from .values import expected_excess

    t0 = time.perf_counter()
    c = np.logspace(-6, 2, n_grid)
    m = search_propensity_array(c, 1.0)
    resid = float(np.max(np.abs(expected_excess(m) - c)))
    homo = 0.0
    for sigma in (1.0, 0.7, 2.5):
        base = search_propensity_array(c, sigma)
        for k in (0.5, 2.0, 10.0):
            scaled = search_propensity_array(k * c, k * sigma)
            homo = max(homo, float(np.max(np.abs(scaled - k * base) / np.maximum(1.0, np.abs(k * base)))))
    dt = time.perf_counter() - t0
    return [
        Check("solver residual |g(m) - c| on c in [1e-6, 1e2]", resid <= 1e-10, resid, 1e-10, f"{n_grid} points", dt),
        Check("solver homogeneity m(kc, k sigma) = k m(c, sigma)", homo <= 1e-9, homo, 1e-9, "k in {0.5, 2, 10}"),
    ]


def _baseline_records(rng, spec, n_consumers=60):
    params = _random_params(rng, spec)
    markets, obs = [], []
    kinds = list(BASELINE_VIEWS)
    for i in range(n_consumers):
        m = 1 + i % 5
        mk = _random_market(rng, m, i % 3 != 0)
        z, u, u0 = draw_values_batch(mk, params, rng, 1)
        o, J, h = simulate_search_batch(z, u, u0)
        seq = batch_to_sequences(o, J, h, mk)[0]
        kind = kinds[i % len(kinds)]
        observable = list(range(1, m + 1, 2)) or [1]
        obs.append(censor(seq, kind, observable))
        markets.append(mk)
    return params, markets, obs


def _scale_params(p: ModelParams, k: float) -> ModelParams:
    return replace(p, gamma=tuple(k * g for g in p.gamma), gamma_outside=k * p.gamma_outside,
                   beta_mean=k * p.beta_mean, beta_sd=k * p.beta_sd, cost_scale=k * p.cost_scale,
                   sigma_eps=k * p.sigma_eps)


def invariance_suite(seed: int = 15) -> list[Check]:
    """Location and scale invariance of the per-draw likelihood."""
    rng = np.random.default_rng(seed)
    out = []
    for spec in (CORRELATED_TASTE, STOCHASTIC_COST):
        t0 = time.perf_counter()
        params, markets, obs = _baseline_records(rng, spec)
        draws = DrawSet.generate(len(obs), 200, baseline_slots(5), seed)
        prob = BaselineProblem(markets, obs, draws)
        base = prob.per_draw(params)
        dev = 0.0
        for shift in (-3.0, 0.5, 7.0):
            dev = max(dev, float(np.max(np.abs(prob.per_draw(params, shift) - base))))
        out.append(Check(f"location invariance ({spec})", dev <= 1e-12, dev, 1e-12,
                         "shifts -3, 0.5, 7; all five views", time.perf_counter() - t0))
    # discovery logs under a common shift
    t0 = time.perf_counter()
    dm, cat = toy_discovery(rng, 0)
    params = _discovery_params(rng)
    logs = enumerate_logs(dm)[:40]
    obs = [ObservedData(Kind.DISCOVERY_LOG, actions=a) for a in logs]
    draws = DrawSet.generate(len(obs), 200, discovery_slots(3, 1, 2), seed)
    prob = DiscoveryProblem([dm] * len(obs), obs, cat, draws, dm.n_per_discovery)
    base = prob.per_draw(params)
    dev = max(float(np.max(np.abs(prob.per_draw(params, s) - base))) for s in (-2.0, 3.0))
    out.append(Check("location invariance (discovery)", dev <= 1e-12, dev, 1e-12,
                     f"{len(obs)} logs", time.perf_counter() - t0))
    t0 = time.perf_counter()
    params, markets, obs = _baseline_records(rng, STOCHASTIC_COST)
    draws = DrawSet.generate(len(obs), 200, baseline_slots(5), seed + 1)
    prob = BaselineProblem(markets, obs, draws)
    base = prob.per_draw(params)
    dev = 0.0
    for k in (0.5, 0.75, 1.25, 1.5):
        dev = max(dev, float(np.max(np.abs(prob.per_draw(_scale_params(params, k)) - base))))
    out.append(Check("scale invariance (stochastic_cost_exp)", dev <= 1e-9, dev, 1e-9,
                     "k in {0.5, 0.75, 1.25, 1.5}", time.perf_counter() - t0))
    return out


SUITES = {
    "equivalence": lambda: equivalence_suite() + roundtrip_suite(),
    "oracle": lambda: oracle_suite(),
    "invariance": lambda: solver_suite() + invariance_suite(),
}


def run_suite(name: str) -> list[Check]:
    if name == "all":
        return [c for k in SUITES for c in SUITES[k]()]
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}")
    return SUITES[name]()
