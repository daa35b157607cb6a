import itertools
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from conftest import make_market
from ssearch.core import OUTSIDE, Action, Kind, Market, ObservedData, SequenceObservation, censor, enumerate_sequences
from ssearch.likelihood import (BaselineProblem, DiscoveryProblem, DrawSet, LikelihoodConfig, baseline_slots,
                                crude_frequency_likelihood, discovery_slots, ghk_probability, pr_ghk_discovery,
                                pr_ghk_first_and_purchase, pr_ghk_full, pr_ghk_purchase_only,
                                pr_ghk_searched_set, pr_ghk_subset_path, truncnorm_sample)
from ssearch.simulate import (DiscoveryMarket, RouteCatalog, decode_actions, discovery_tables,
                              draw_discovery_values, draw_values_batch, enumerate_logs, simulate_discovery_batch)
from ssearch.simulate.params import STOCHASTIC_COST, ModelParams

PARAMS = ModelParams(log_cost_mean=-1.2)


def ghk(obs, mk, params, n_draws=5000, seed=0):
    draws = DrawSet.generate(1, n_draws, baseline_slots(mk.n_products), seed)
    return ghk_probability(obs, mk, params, draws)


def crude(obs, mk, params, n=200_000, seed=1):
    return crude_frequency_likelihood(obs, mk, params, n, np.random.default_rng(seed))


def agree(a, b, k=3.0):
    (pa, sa), (pb, sb) = a, b
    return abs(pa - pb) <= k * math.sqrt(sa ** 2 + sb ** 2)


# ---------------------------------------------------------------- kernel

def test_truncnorm_median_and_edges():
    x, p = truncnorm_sample(1.3, 2.0, -np.inf, np.inf, 0.5)
    assert float(x) == 1.3 and float(p) == 1.0
    x, p = truncnorm_sample(1.3, 2.0, 1.3, np.inf, 1e-12)
    assert 1.3 <= float(x) < 1.3 + 1e-9 and float(p) == pytest.approx(0.5)
    x, _ = truncnorm_sample(0.0, 1.0, -np.inf, -0.7, 1 - 1e-12)
    assert -0.7 - 1e-9 < float(x) <= -0.7


def test_truncnorm_ks_distance():
    rng = np.random.default_rng(0)
    u = rng.random(1_000_000)
    x, p = truncnorm_sample(0.2, 1.1, 0.5, 2.0, u)
    a, b = (0.5 - 0.2) / 1.1, (2.0 - 0.2) / 1.1
    ks = stats.kstest(x, stats.truncnorm(a, b, loc=0.2, scale=1.1).cdf).statistic
    assert ks < 0.002
    assert np.all((x >= 0.5) & (x <= 2.0))
    assert np.allclose(p, stats.norm.cdf(b) - stats.norm.cdf(a), rtol=1e-12)


def test_truncnorm_thin_interval_is_pinned():
    x, p = truncnorm_sample(0.0, 1.0, 40.0, 41.0, 0.3, tail_clip=1e-12)
    assert float(x) == 40.0 and float(p) == 1e-12
    x, p = truncnorm_sample(0.0, 1.0, -np.inf, -45.0, 0.3)
    assert float(x) == -45.0 and float(p) == 1e-12


@given(st.floats(-3, 3), st.floats(0.1, 3), st.floats(-6, 6), st.floats(1e-9, 1 - 1e-9))
def test_one_sided_paths_match_general(mean, sd, bound, u):
    inf = np.full(1, np.inf)
    x1, p1 = truncnorm_sample(mean, sd, bound, np.inf, u)
    x2, p2 = truncnorm_sample(mean, sd, np.full(1, bound), inf, u)
    assert np.allclose(x1, x2, rtol=1e-9, atol=1e-9) and np.allclose(p1, p2, rtol=1e-12)
    y1, q1 = truncnorm_sample(mean, sd, -np.inf, bound, u)
    y2, q2 = truncnorm_sample(mean, sd, -inf, np.full(1, bound), u)
    assert np.allclose(y1, y2, rtol=1e-9, atol=1e-9) and np.allclose(q1, q2, rtol=1e-12)


def test_drawset_validation():
    with pytest.raises(ValueError):
        DrawSet(np.zeros((1, 2, 3)))
    with pytest.raises(ValueError):
        DrawSet(np.full((2, 3), 0.5))
    d = DrawSet.generate(3, 4, 5, seed=9)
    assert d.uniforms.shape == (3, 4, 5)
    assert np.array_equal(d.uniforms, DrawSet.generate(3, 4, 5, seed=9).uniforms)
    assert np.array_equal(d.subset([2]).uniforms[0], d.uniforms[2])


# ---------------------------------------------------------------- full path

def test_single_product_record_has_probability_one():
    mk = make_market(1)
    seq = SequenceObservation((1,), 1, mk)
    draws = DrawSet.generate(1, 50, baseline_slots(1), 0)
    assert pr_ghk_full(seq, PARAMS, draws) == 1.0


def test_full_path_matches_crude_two_products():
    mk = make_market(2, seed=3)
    for k, seq in enumerate(enumerate_sequences(mk)):
        ob = censor(seq, Kind.FULL_PATH)
        assert agree(ghk(ob, mk, PARAMS, seed=k), crude(ob, mk, PARAMS, seed=10 + k))


def test_full_path_sums_to_one_with_outside():
    mk = make_market(2, outside=True, seed=4)
    seqs = enumerate_sequences(mk)
    assert len(seqs) == 11
    total = sum(ghk(censor(s, Kind.FULL_PATH), mk, PARAMS, seed=20 + k)[0] for k, s in enumerate(seqs))
    assert 0.98 <= total <= 1.02


def test_outside_purchase_without_inspection():
    mk = make_market(3, outside=True, seed=5)
    ob = ObservedData.full((), OUTSIDE)
    assert agree(ghk(ob, mk, PARAMS, seed=2), crude(ob, mk, PARAMS, seed=3))


def test_stochastic_cost_spec_matches_crude():
    p = ModelParams(cost_scale=0.4, spec=STOCHASTIC_COST)
    mk = make_market(3, outside=True, seed=6)
    z, u, u0 = draw_values_batch(mk, p, np.random.default_rng(7), 1)
    from ssearch.simulate.baseline import batch_to_sequences, simulate_search_batch
    seq = batch_to_sequences(*simulate_search_batch(z, u, u0), mk)[0]
    for kind in (Kind.FULL_PATH, Kind.SEARCHED_SET, Kind.PURCHASE_ONLY):
        ob = censor(seq, kind)
        assert agree(ghk(ob, mk, p, seed=4), crude(ob, mk, p, seed=5))


# ---------------------------------------------------------------- censored views

def test_purchase_only_matches_crude():
    mk = make_market(3, outside=True, seed=8)
    for k, h in enumerate((OUTSIDE, 1, 2, 3)):
        ob = ObservedData(Kind.PURCHASE_ONLY, purchased=h)
        assert agree(ghk(ob, mk, PARAMS, seed=30 + k), crude(ob, mk, PARAMS, seed=40 + k))


def test_purchase_only_dominance():
    mk = Market.from_arrays([[1, 1, 1], [0, 0, 0], [0, 0, 0]], [0.0, 1.0, 1.0])
    p = replace(PARAMS, gamma=(20.0, 20.0, 20.0))
    draws = DrawSet.generate(1, 200, baseline_slots(3), 0)
    assert pr_ghk_purchase_only(ObservedData(Kind.PURCHASE_ONLY, purchased=1), mk, p, draws) == pytest.approx(1.0, abs=1e-9)


def test_purchase_only_equals_top_effective_value_frequency():
    # eventual purchase: the bought product has the largest min(z, u)
    mk = make_market(3, outside=True, seed=9)
    n = 400_000
    z, u, u0 = draw_values_batch(mk, PARAMS, np.random.default_rng(11), n)
    w = np.column_stack([u0, np.minimum(z, u)])
    top = np.argmax(w, axis=1)
    for h in (OUTSIDE, 1, 2, 3):
        f = np.mean(top == h)
        ob = ObservedData(Kind.PURCHASE_ONLY, purchased=h)
        assert agree(ghk(ob, mk, PARAMS, seed=50 + h), (f, math.sqrt(f * (1 - f) / n)))


def test_searched_set_matches_crude():
    mk = make_market(3, outside=True, seed=12)
    for k, (s, h) in enumerate((({1, 2}, 2), ({3}, OUTSIDE), ({1, 2, 3}, 1), (set(), OUTSIDE))):
        ob = ObservedData(Kind.SEARCHED_SET, purchased=h, searched=s)
        assert agree(ghk(ob, mk, PARAMS, seed=60 + k), crude(ob, mk, PARAMS, seed=70 + k))


def test_searched_set_is_the_sum_over_orders():
    mk = make_market(4, seed=13)
    s, h = (1, 2, 3), 2
    ob = ObservedData(Kind.SEARCHED_SET, purchased=h, searched=set(s))
    total, var = 0.0, 0.0
    for k, order in enumerate(itertools.permutations(s)):
        p, se = ghk(ObservedData.full(order, h), mk, PARAMS, seed=80 + k)
        total += p
        var += se ** 2
    assert agree(ghk(ob, mk, PARAMS, seed=90), (total, math.sqrt(var)))


def test_searched_singleton_without_outside():
    mk = make_market(3, seed=14)
    ob = ObservedData(Kind.SEARCHED_SET, purchased=2, searched={2})
    assert agree(ghk(ob, mk, PARAMS, seed=91), crude(ob, mk, PARAMS, seed=92))


def test_first_and_purchase_matches_crude():
    mk = make_market(3, outside=True, seed=15)
    cases = ((1, 1), (1, 2), (2, OUTSIDE), (None, OUTSIDE), (3, 1))
    for k, (first, h) in enumerate(cases):
        ob = ObservedData(Kind.FIRST_AND_PURCHASE, purchased=h, first=first)
        # this view has a heavy-tailed GHK weight, so it gets more draws
        assert agree(ghk(ob, mk, PARAMS, n_draws=20_000, seed=100 + k), crude(ob, mk, PARAMS, seed=110 + k))


def test_first_and_purchase_reduces_for_one_product():
    mk = make_market(1, outside=True, seed=16)
    draws = DrawSet.generate(1, 2000, baseline_slots(1), 3)
    a = pr_ghk_first_and_purchase(ObservedData(Kind.FIRST_AND_PURCHASE, purchased=1, first=1), mk, PARAMS, draws)
    b = pr_ghk_purchase_only(ObservedData(Kind.PURCHASE_ONLY, purchased=1), mk, PARAMS, draws)
    assert a == pytest.approx(b, abs=1e-12)


def test_first_and_purchase_dominance():
    mk = Market.from_arrays([[1, 1, 1], [0, 0, 0], [0, 0, 0]], [0.0, 1.0, 1.0])
    p = replace(PARAMS, gamma=(20.0, 20.0, 20.0))
    draws = DrawSet.generate(1, 200, baseline_slots(3), 0)
    ob = ObservedData(Kind.FIRST_AND_PURCHASE, purchased=1, first=1)
    assert pr_ghk_first_and_purchase(ob, mk, p, draws) == pytest.approx(1.0, abs=1e-9)


def test_subset_path_matches_crude():
    mk = make_market(3, outside=True, seed=17)
    cases = (((1, 3), {1, 3}), ((), {2}), ((2,), {1, 2}), ((3, 1, 2), {1, 2, 3}))
    for k, (chain, observable) in enumerate(cases):
        ob = ObservedData(Kind.SUBSET_PATH, inspected=chain, observable=observable)
        assert agree(ghk(ob, mk, PARAMS, seed=120 + k), crude(ob, mk, PARAMS, seed=130 + k))


def test_subset_path_with_everything_observable_marginalizes_the_purchase():
    mk = make_market(3, seed=18)
    for chain in ((2, 1), (1, 3, 2)):
        ob = ObservedData(Kind.SUBSET_PATH, inspected=chain, observable={1, 2, 3})
        total, var = 0.0, 0.0
        for h in chain:
            p, se = ghk(ObservedData.full(chain, h), mk, PARAMS, seed=140 + h)
            total += p
            var += se ** 2
        assert agree(ghk(ob, mk, PARAMS, seed=150), (total, math.sqrt(var)))


def test_wrong_view_is_rejected():
    mk = make_market(2)
    draws = DrawSet.generate(1, 10, baseline_slots(2), 0)
    with pytest.raises(ValueError):
        pr_ghk_searched_set(ObservedData(Kind.PURCHASE_ONLY, purchased=1), mk, PARAMS, draws)
    with pytest.raises(ValueError):
        pr_ghk_subset_path(ObservedData(Kind.PURCHASE_ONLY, purchased=1), mk, PARAMS, draws)


# ---------------------------------------------------------------- discovery

def _toy(n_per=1, cap=15, reveal=((1, (2, 3)),), n_products=3, seed=0):
    rng = np.random.default_rng(seed)
    mk = Market.from_arrays(rng.integers(0, 2, (n_products, 3)), rng.uniform(0, 2, n_products), True,
                            [1] * n_products)
    cat = RouteCatalog({1: rng.integers(0, 2, (20, 3)).astype(float)}, {1: rng.uniform(0, 2, 20)})
    return DiscoveryMarket(mk, (1,), reveal, n_per, cap), cat


DISC = ModelParams(gamma=(0.3, 0.2, 0.1), gamma_outside=0.0, beta_sd=0.1, log_cost_mean=-2.0,
                   disc_log_cost_mean=-2.5)


def test_discovery_without_routes_is_the_full_path_kernel():
    mk = make_market(3, outside=True, seed=19)
    dm = DiscoveryMarket(mk, (1, 2, 3), (), 2, 15)
    cat = RouteCatalog({}, {})
    seqs = enumerate_sequences(mk)
    logs = [ObservedData(Kind.DISCOVERY_LOG, actions=tuple(Action("I", j) for j in s.inspected)
                         + (Action("P", s.purchased),)) for s in seqs]
    draws = DrawSet.generate(len(seqs), 300, discovery_slots(3, 0, 1), 4)
    a = DiscoveryProblem([dm] * len(seqs), logs, cat, draws).per_draw(DISC)
    b = BaselineProblem([mk] * len(seqs), [censor(s, Kind.FULL_PATH) for s in seqs], draws).per_draw(DISC)
    assert np.max(np.abs(a - b)) < 1e-12


def test_discovery_matches_crude_on_toy_market():
    dm, cat = _toy()
    tables = discovery_tables(cat, DISC, 1)
    rng = np.random.default_rng(5)
    n = 200_000
    z, u, u0, q = draw_discovery_values(dm, DISC, tables, rng, n)
    codes = simulate_discovery_batch(dm, z, u, u0, q)
    logs = sorted({tuple(c[c >= 0]) for c in codes[:200]})
    for k, row in enumerate(logs[:4]):
        acts = decode_actions(dm, np.array(row))
        full = np.full(codes.shape[1], -1)
        full[: len(row)] = row
        f = np.mean(np.all(codes == full, axis=1))
        draws = DrawSet.generate(1, 5000, discovery_slots(3, 1, 2), 200 + k)
        g = pr_ghk_discovery(ObservedData(Kind.DISCOVERY_LOG, actions=acts), dm, cat, DISC, draws)
        assert agree(g, (f, math.sqrt(f * (1 - f) / n)))


def test_discovery_logs_sum_to_one():
    dm, cat = _toy(reveal=((1, (2,)),), n_products=2, cap=1)
    logs = enumerate_logs(dm)
    obs = [ObservedData(Kind.DISCOVERY_LOG, actions=a) for a in logs]
    draws = DrawSet.generate(len(obs), 10_000, discovery_slots(2, 1, 1), 6)
    total = DiscoveryProblem([dm] * len(obs), obs, cat, draws, 1).likelihoods(DISC).sum()
    assert 0.97 <= total <= 1.03


def test_discovery_problem_validation():
    dm, cat = _toy()
    ob = ObservedData(Kind.DISCOVERY_LOG, actions=(Action("I", 2), Action("P", 2)))
    with pytest.raises(ValueError, match="consumer 0"):
        DiscoveryProblem([dm], [ob], cat, DrawSet.generate(1, 5, 20, 0))
    good = ObservedData(Kind.DISCOVERY_LOG, actions=(Action("P", OUTSIDE),))
    with pytest.raises(ValueError, match="slots"):
        DiscoveryProblem([dm], [good], cat, DrawSet.generate(1, 5, 3, 0))


# ---------------------------------------------------------------- crude oracle

def test_crude_certain_and_impossible_events():
    mk = make_market(1)
    assert crude(ObservedData.full((1,), 1), mk, PARAMS, n=1000)[0] == 1.0
    # product 2 is priced out of the market
    mk2 = Market.from_arrays([[1, 0, 0], [1, 0, 0]], [1.0, 400.0])
    fixed = replace(PARAMS, beta_sd=0.0)
    p, se = crude(ObservedData(Kind.PURCHASE_ONLY, purchased=2), mk2, fixed, n=100_000)
    assert p == 0.0 and se == 0.0
    with pytest.raises(ValueError):
        crude(ObservedData.full((1,), 1), mk, PARAMS, n=0)


def test_crude_views_partition_the_simulations():
    mk = make_market(2, outside=True, seed=21)
    n = 20_000
    for kind in (Kind.FULL_PATH, Kind.PURCHASE_ONLY, Kind.SEARCHED_SET, Kind.FIRST_AND_PURCHASE):
        views = {censor(s, kind).key(): censor(s, kind) for s in enumerate_sequences(mk)}
        hits = sum(round(crude(ob, mk, PARAMS, n=n, seed=7)[0] * n) for ob in views.values())
        assert hits == n


# ---------------------------------------------------------------- dataset log-likelihood

def _dataset(n=40, seed=22):
    rng = np.random.default_rng(seed)
    from ssearch.simulate.baseline import batch_to_sequences, simulate_search_batch
    markets, obs = [], []
    kinds = [Kind.FULL_PATH, Kind.PURCHASE_ONLY, Kind.SEARCHED_SET, Kind.FIRST_AND_PURCHASE, Kind.SUBSET_PATH]
    for i in range(n):
        mk = make_market(1 + i % 4, outside=i % 3 != 0, seed=100 + i)
        z, u, u0 = draw_values_batch(mk, PARAMS, rng, 1)
        seq = batch_to_sequences(*simulate_search_batch(z, u, u0), mk)[0]
        obs.append(censor(seq, kinds[i % 5], [1]))
        markets.append(mk)
    return markets, obs


def test_loglik_single_consumer():
    markets, obs = _dataset(1)
    draws = DrawSet.generate(1, 100, baseline_slots(4), 0)
    prob = BaselineProblem(markets, obs, draws)
    assert prob.loglik(PARAMS) == math.log(prob.likelihoods(PARAMS)[0])


def test_loglik_permutation_invariant():
    markets, obs = _dataset()
    draws = DrawSet.generate(len(obs), 100, baseline_slots(4), 1)
    base = BaselineProblem(markets, obs, draws).loglik(PARAMS)
    perm = np.random.default_rng(3).permutation(len(obs))
    shuffled = BaselineProblem([markets[i] for i in perm], [obs[i] for i in perm],
                               DrawSet(draws.uniforms[perm])).loglik(PARAMS)
    assert abs(shuffled - base) <= 1e-12


def test_factors_bounded_and_floor_applied():
    markets, obs = _dataset()
    draws = DrawSet.generate(len(obs), 100, baseline_slots(4), 2)
    per = BaselineProblem(markets, obs, draws).per_draw(PARAMS)
    assert np.all(per >= 0) and np.all(per <= 1)
    # an extreme parameter drives some records to the floor, never below it
    cfg = LikelihoodConfig(n_draws=100, prob_floor=1e-200)
    wild = replace(PARAMS, gamma_outside=60.0)
    prob = BaselineProblem(markets, obs, draws, cfg)
    assert math.isfinite(prob.loglik(wild))
    assert prob.loglik(wild) >= len(obs) * math.log(1e-200)


def test_location_and_scale_invariance():
    markets, obs = _dataset()
    draws = DrawSet.generate(len(obs), 100, baseline_slots(4), 3)
    prob = BaselineProblem(markets, obs, draws)
    base = prob.per_draw(PARAMS)
    for a in (-2.0, 4.5):
        assert np.max(np.abs(prob.per_draw(PARAMS, a) - base)) <= 1e-12
    sc = ModelParams(cost_scale=0.7, spec=STOCHASTIC_COST)
    base = prob.per_draw(sc)
    for k in (0.5, 1.5):
        p = replace(sc, gamma=tuple(k * g for g in sc.gamma), gamma_outside=k * sc.gamma_outside,
                    beta_mean=k * sc.beta_mean, beta_sd=k * sc.beta_sd, cost_scale=k * sc.cost_scale,
                    sigma_eps=k)
        assert np.max(np.abs(prob.per_draw(p) - base)) <= 1e-9


def test_variance_shrinks_like_one_over_draws():
    mk = make_market(3, outside=True, seed=23)
    ob = ObservedData.full((2, 1), 1)
    sizes = np.array([25, 50, 100, 200, 400])
    reps = 300
    var = []
    for r in sizes:
        draws = DrawSet.generate(reps, int(r), baseline_slots(3), int(r))
        est = BaselineProblem([mk] * reps, [ob] * reps, draws).likelihoods(PARAMS)
        var.append(est.var(ddof=1))
    slope = np.polyfit(np.log(sizes), np.log(var), 1)[0]
    assert abs(slope + 1) <= 0.15
