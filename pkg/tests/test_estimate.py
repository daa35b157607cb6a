import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ssearch.core import Kind
from ssearch.estimate import (EstimationConfig, build_problem, default_start, from_unconstrained,
                              maximize_simulated_likelihood, monte_carlo_study, summarize, to_unconstrained)
from ssearch.presets import TABLE1_TRUTH, TABLE3_TRUTH
from ssearch.simulate.dataset import DgpConfig, generate_dataset
from ssearch.simulate.params import PARAM_NAMES

BASELINE_FREE = EstimationConfig().free


def test_transform_round_trip_on_truth():
    theta, clamped = to_unconstrained(TABLE1_TRUTH, BASELINE_FREE)
    assert clamped == []
    back = from_unconstrained(theta, BASELINE_FREE, TABLE1_TRUTH)
    for n in BASELINE_FREE:
        assert back.get(n) == pytest.approx(TABLE1_TRUTH.get(n), abs=1e-12)
    # beta_sd travels on the log scale
    assert theta[BASELINE_FREE.index("beta_sd")] == pytest.approx(math.log(TABLE1_TRUTH.beta_sd))


def test_transform_round_trip_discovery_names():
    names = ("gamma1", "beta_sd", "log_cost_mean", "cost_scale", "disc_log_cost_mean", "disc_log_cost_sd")
    p = TABLE3_TRUTH.with_values(cost_scale=0.8, beta_sd=0.3)
    theta, _ = to_unconstrained(p, names)
    back = from_unconstrained(theta, names, p)
    for n in names:
        assert back.get(n) == pytest.approx(p.get(n), abs=1e-12)


def test_transform_clamps_and_rejects():
    p = TABLE1_TRUTH.with_values(beta_sd=0.0)
    theta, clamped = to_unconstrained(p, BASELINE_FREE)
    assert clamped == ["beta_sd"]
    assert np.all(np.isfinite(theta))
    with pytest.raises(ValueError):
        to_unconstrained(TABLE1_TRUTH.with_values(beta_sd=-0.1), BASELINE_FREE)
    with pytest.raises(ValueError):
        to_unconstrained(TABLE1_TRUTH, ("nope",))


def test_transform_fuzz():
    rng = np.random.default_rng(0)
    names = tuple(n for n in PARAM_NAMES if n not in ("sigma_eps", "sigma_taste"))
    for _ in range(10_000):
        theta = rng.normal(0, 3, len(names))
        p = from_unconstrained(theta, names, TABLE1_TRUTH)
        back, _ = to_unconstrained(p, names)
        assert np.allclose(back, theta, rtol=0, atol=1e-12 * max(1.0, np.abs(theta).max()))


@given(st.lists(st.floats(-15, 15), min_size=7, max_size=7))
def test_transform_inverse_property(theta):
    p = from_unconstrained(theta, BASELINE_FREE, TABLE1_TRUTH)
    back, _ = to_unconstrained(p, BASELINE_FREE)
    assert np.allclose(back, theta, rtol=1e-12, atol=1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        EstimationConfig(free=("gamma1", "gamma1"))
    with pytest.raises(ValueError):
        EstimationConfig(n_draws=0)
    with pytest.raises(ValueError):
        EstimationConfig(free=())
    with pytest.raises(ValueError):
        EstimationConfig(free=("gamma9",))


def _small_data(n=300, seed=1, scenario=Kind.FULL_PATH):
    return generate_dataset(DgpConfig(TABLE1_TRUTH, n_consumers=n, seed=seed, scenario=scenario, n_products=4))


def test_start_at_truth_never_loses_ground():
    data = _small_data()
    cfg = EstimationConfig(n_draws=50, warmstart_iters=30, max_iters=120, seed=3)
    res = maximize_simulated_likelihood(data, cfg, truth=TABLE1_TRUTH)
    assert res.loglik_at_start == pytest.approx(res.loglik_at_truth, abs=1e-12)
    assert res.loglik_at_hat >= res.loglik_at_truth - cfg.ftol
    assert res.n_evals > res.iterations > 0
    d = res.to_dict(timing=False)
    assert set(d["estimates"]) == set(BASELINE_FREE) and "wall_time" not in d


def test_estimate_improves_on_a_perturbed_start():
    data = _small_data()
    start = default_start(TABLE1_TRUTH, BASELINE_FREE, 0.3)
    cfg = EstimationConfig(n_draws=50, warmstart_iters=40, max_iters=150, seed=3, initial_params=start)
    res = maximize_simulated_likelihood(data, cfg, template=TABLE1_TRUTH)
    assert res.loglik_at_hat >= res.loglik_at_start
    assert res.loglik_at_truth is None


def test_floor_keeps_loglik_finite():
    data = _small_data(50)
    wild = TABLE1_TRUTH.with_values(gamma_outside=1e6)
    prob = build_problem(data, 10, 0)
    # a hugely attractive outside option puts inside purchases at the floor, never -inf
    assert math.isfinite(prob.loglik(wild))


def test_needs_a_template():
    cfg = EstimationConfig(n_draws=10, max_iters=5, free=("gamma1",))
    with pytest.raises(ValueError):
        maximize_simulated_likelihood(_small_data(50), cfg)


def test_crn_smoothness_along_a_segment():
    data = _small_data(200, seed=4)
    prob = build_problem(data, 100, 7)
    a, _ = to_unconstrained(TABLE1_TRUTH, BASELINE_FREE)
    b = a + np.array([0.4, -0.3, 0.2, 0.5, -0.2, 0.3, -0.4])
    ts = np.linspace(0, 1, 100)
    ll = np.array([prob.loglik(from_unconstrained(a + t * (b - a), BASELINE_FREE, TABLE1_TRUTH)) for t in ts])
    assert np.all(np.isfinite(ll))
    diffs = np.abs(np.diff(ll))
    assert diffs.max() <= 10 * np.median(diffs)


def test_study_with_one_replication():
    dgp = DgpConfig(TABLE1_TRUTH, n_consumers=100, n_products=3)
    est = EstimationConfig(free=("gamma1", "log_cost_mean"), n_draws=20, warmstart_iters=10, max_iters=40)
    rep = monte_carlo_study(dgp, est, 1, seed=5)
    assert rep.n_reps == 1 and rep.n_failed == 0
    assert all(v == 0.0 for v in rep.sd.values())
    d = rep.to_dict()
    assert d["replications"][0]["rep"] == 0
    with pytest.raises(ValueError):
        monte_carlo_study(dgp, est, 0)


def test_rmse_identity():
    truth = TABLE1_TRUTH
    free = ("gamma1", "beta_mean")
    reps = [{"estimates": {"gamma1": truth.gamma[0] + d1, "beta_mean": truth.beta_mean + d2},
             "loglik_at_hat": -1.0, "loglik_at_truth": -2.0}
            for d1, d2 in ((0.1, -0.2), (0.3, 0.0), (-0.1, 0.4))]
    reps.append({"rep": 3, "error": "ValueError: boom"})
    s = summarize(truth, free, reps)
    sq = [0.01, 0.04, 0.09, 0.0, 0.01, 0.16]
    assert s.rmse_all == pytest.approx(math.sqrt(np.mean(sq)), abs=1e-12)
    assert s.rmse["gamma1"] == pytest.approx(math.sqrt((0.01 + 0.09 + 0.01) / 3), abs=1e-12)
    assert s.sd["beta_mean"] == pytest.approx(np.std([-0.2, 0.0, 0.4], ddof=1), abs=1e-12)
    assert (s.n_reps, s.n_failed) == (4, 1)
    assert s.mean_loglik_truth == -2.0


def test_consistency_smoke():
    # doubling the sample should not widen the spread of gamma1
    est = EstimationConfig(free=("gamma1",), n_draws=40, warmstart_iters=20, max_iters=60)
    sds = []
    for n in (1000, 2000):
        dgp = DgpConfig(TABLE1_TRUTH, n_consumers=n, n_products=4, scenario=Kind.PURCHASE_ONLY)
        sds.append(monte_carlo_study(dgp, est, 12, seed=n).sd["gamma1"])
    assert sds[1] <= 1.10 * sds[0]
