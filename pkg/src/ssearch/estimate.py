"""Simulated maximum likelihood and Monte Carlo replication studies."""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from .core import Kind
from .likelihood.discovery import DiscoveryProblem, discovery_slots
from .likelihood.problem import BaselineProblem, DrawSet, LikelihoodConfig, baseline_slots
from .simulate.dataset import Dataset, DgpConfig, generate_dataset
from .simulate.params import PARAM_NAMES, ModelParams

__all__ = [
    "LOG_PARAMS",
    "EstimationConfig",
    "EstimateResult",
    "StudyReport",
    "to_unconstrained",
    "from_unconstrained",
    "build_problem",
    "default_start",
    "maximize_simulated_likelihood",
    "monte_carlo_study",
]

# estimated on the log scale; the rest are unrestricted
LOG_PARAMS = frozenset({"beta_sd", "cost_scale", "disc_log_cost_sd"})
LOG_FLOOR = math.log(1e-8)


def to_unconstrained(params: ModelParams, names) -> tuple[np.ndarray, list[str]]:
    """Map the free parameters to the real line.

    Returns
    -------
    theta : ndarray
    clamped : list of str
        Log-scale parameters at or below ``1e-8`` that were set to the floor.

    Raises
    ------
    ValueError
        For a negative scale parameter or an unknown name.
    """
    theta, clamped = [], []
    for n in names:
        if n not in PARAM_NAMES:
            raise ValueError(f"unknown parameter {n!r}")
        v = params.get(n)
        if n in LOG_PARAMS:
            if v < 0:
                raise ValueError(f"{n} must be non-negative")
            if v <= math.exp(LOG_FLOOR):
                clamped.append(n)
                theta.append(LOG_FLOOR)
                continue
            v = math.log(v)
        theta.append(v)
    return np.array(theta, dtype=float), clamped


def from_unconstrained(theta, names, template: ModelParams) -> ModelParams:
    """Inverse of :func:`to_unconstrained`; other fields come from `template`."""
    vals = {}
    for n, t in zip(names, np.asarray(theta, dtype=float)):
        vals[n] = math.exp(max(float(t), LOG_FLOOR)) if n in LOG_PARAMS else float(t)
    return template.with_values(**vals)


@dataclass(frozen=True)
class EstimationConfig:
    """Optimizer and simulator settings.

    Parameters
    ----------
    free : tuple of str
        Parameters to estimate; everything else stays at the template.
    initial_params : ModelParams, optional
        Start point; when omitted the caller's default applies.
    warmstart_iters : int
        Nelder-Mead iterations before the simplex is rebuilt at the best point.
    max_iters : int
        Iteration cap over both phases.
    xtol, ftol : float
        Simplex size and function spread at which phase two stops.
    n_draws : int
        Simulation draws per consumer (fixed across trials).
    seed : int
        Seed of the draw set.
    simplex_scale : float
        Initial simplex step per coordinate, on the unconstrained scale.
    """

    free: tuple = ("gamma1", "gamma2", "gamma3", "gamma_outside", "beta_mean", "beta_sd", "log_cost_mean")
    initial_params: ModelParams | None = None
    warmstart_iters: int = 200
    max_iters: int = 2000
    xtol: float = 1e-6
    ftol: float = 1e-8
    n_draws: int = 500
    seed: int = 0
    simplex_scale: float = 0.25
    tail_clip: float = 1e-12

    def __post_init__(self):
        object.__setattr__(self, "free", tuple(self.free))
        if not self.free:
            raise ValueError("nothing to estimate")
        bad = [n for n in self.free if n not in PARAM_NAMES]
        if bad:
            raise ValueError(f"unknown parameters {bad}")
        if len(set(self.free)) != len(self.free):
            raise ValueError("free parameters must be distinct")
        if not (self.xtol > 0 and self.ftol > 0):
            raise ValueError("tolerances must be positive")
        if self.warmstart_iters < 0 or self.max_iters < 1 or self.n_draws < 1:
            raise ValueError("iteration and draw counts must be positive")
        if not self.simplex_scale > 0:
            raise ValueError("simplex_scale must be positive")


@dataclass
class EstimateResult:
    params_hat: ModelParams
    free: tuple
    loglik_at_hat: float
    loglik_at_start: float
    iterations: int
    n_evals: int
    converged: bool
    loglik_at_truth: float | None = None
    clamped: list = field(default_factory=list)
    wall_time: float = 0.0

    def estimates(self) -> dict:
        return {n: self.params_hat.get(n) for n in self.free}

    def to_dict(self, timing: bool = True) -> dict:
        out = {
            "estimates": self.estimates(),
            "params_hat": self.params_hat.to_dict(),
            "loglik_at_hat": self.loglik_at_hat,
            "loglik_at_start": self.loglik_at_start,
            "loglik_at_truth": self.loglik_at_truth,
            "iterations": self.iterations,
            "n_evals": self.n_evals,
            "converged": self.converged,
            "clamped": list(self.clamped),
        }
        if timing:
            out["wall_time"] = self.wall_time
        return out


def build_problem(data: Dataset, n_draws: int, seed: int, tail_clip: float = 1e-12):
    """Likelihood object for `data` with a fresh common-random-number draw set."""
    lcfg = LikelihoodConfig(n_draws=n_draws, tail_clip=tail_clip)
    if data.scenario is Kind.DISCOVERY_LOG:
        routes = data.catalog.route_ids
        depth = max([dm.n_discoveries(r) for dm in data.discovery_markets for r in dm.routes] + [1])
        slots = max(discovery_slots(mk.n_products, len(routes), depth) for mk in data.markets)
        draws = DrawSet.generate(data.n_consumers, n_draws, slots, seed)
        return DiscoveryProblem(data.discovery_markets, data.observations, data.catalog, draws,
                                data.n_per_discovery, lcfg)
    slots = max(baseline_slots(mk.n_products) for mk in data.markets)
    draws = DrawSet.generate(data.n_consumers, n_draws, slots, seed)
    return BaselineProblem(data.markets, data.observations, draws, lcfg)


def default_start(truth: ModelParams, free, step: float = 0.1) -> ModelParams:
    """Truth moved by `step` on the unconstrained scale, signs alternating."""
    theta, _ = to_unconstrained(truth, free)
    signs = np.where(np.arange(len(theta)) % 2 == 0, 1.0, -1.0)
    return from_unconstrained(theta + step * signs, free, truth)


def _nelder_mead(fun, x0, scale, maxiter, xtol, ftol):
    sim = np.vstack([x0, x0 + scale * np.eye(len(x0))])
    return optimize.minimize(fun, x0, method="Nelder-Mead",
                             options={"maxiter": maxiter, "xatol": xtol, "fatol": ftol,
                                      "initial_simplex": sim})


def maximize_simulated_likelihood(data, cfg: EstimationConfig, template: ModelParams | None = None,
                                  truth: ModelParams | None = None, problem=None) -> EstimateResult:
    """Maximize the simulated log-likelihood over ``cfg.free``.

    Nelder-Mead on the unconstrained scale: `warmstart_iters` iterations
    from the start point, then a fresh simplex around the best point found,
    run to the tolerances or the remaining iteration budget. The draw set
    is built once and reused for every trial.

    Parameters
    ----------
    data : Dataset
    cfg : EstimationConfig
    template : ModelParams, optional
        Values of the fixed parameters (and the start point when
        ``cfg.initial_params`` is unset). Defaults to `truth`.
    truth : ModelParams, optional
        When given, the log-likelihood at the truth is reported.
    problem : optional
        A prebuilt likelihood object (skips draw generation).

    Raises
    ------
    FloatingPointError
        If the log-likelihood at the start point is not finite.
    """
    t0 = time.perf_counter()
    template = template or truth or cfg.initial_params
    if template is None:
        raise ValueError("need a template or start point")
    start = cfg.initial_params or template
    if problem is None:
        problem = build_problem(data, cfg.n_draws, cfg.seed, cfg.tail_clip)
    free = cfg.free
    theta0, clamped = to_unconstrained(start, free)
    n_evals = 0

    def negll(theta):
        nonlocal n_evals
        n_evals += 1
        v = problem.loglik(from_unconstrained(theta, free, template))
        return -v if math.isfinite(v) else 1e300

    f0 = negll(theta0)
    if not f0 < 1e300:
        raise FloatingPointError("log-likelihood is not finite at the start point")
    best_x, best_f, iters = theta0, f0, 0
    converged = False
    if cfg.warmstart_iters > 0:
        r = _nelder_mead(negll, theta0, cfg.simplex_scale, min(cfg.warmstart_iters, cfg.max_iters),
                         cfg.xtol, cfg.ftol)
        iters += r.nit
        if r.fun < best_f:
            best_x, best_f = r.x, r.fun
    left = cfg.max_iters - iters
    if left > 0:
        r = _nelder_mead(negll, best_x, cfg.simplex_scale, left, cfg.xtol, cfg.ftol)
        iters += r.nit
        converged = bool(r.success)
        if r.fun < best_f:
            best_x, best_f = r.x, r.fun
    hat = from_unconstrained(best_x, free, template)
    ll_truth = problem.loglik(truth) if truth is not None else None
    return EstimateResult(hat, free, -best_f, -f0, iters, n_evals, converged, ll_truth,
                          clamped, time.perf_counter() - t0)


@dataclass
class StudyReport:
    """Cross-replication summary of a Monte Carlo study."""

    truth: dict
    mean: dict
    sd: dict
    rmse: dict
    rmse_all: float
    n_reps: int
    n_failed: int
    mean_loglik_truth: float | None
    mean_loglik_hat: float | None
    replications: list
    wall_times: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "truth": self.truth,
            "mean": self.mean,
            "sd": self.sd,
            "rmse": self.rmse,
            "rmse_all": self.rmse_all,
            "n_reps": self.n_reps,
            "n_failed": self.n_failed,
            "mean_loglik_truth": self.mean_loglik_truth,
            "mean_loglik_hat": self.mean_loglik_hat,
            "replications": self.replications,
        }


def rep_seeds(seed: int, rep: int) -> tuple[int, int]:
    """Dataset and draw-set seeds of replication `rep`."""
    a, b = np.random.SeedSequence([int(seed), int(rep)]).generate_state(2)
    return int(a), int(b)


def _run_rep(args):
    dgp, est, rep, seed, start_step = args
    data_seed, draw_seed = rep_seeds(seed, rep)
    try:
        data = generate_dataset(replace(dgp, seed=data_seed))
        start = est.initial_params or default_start(dgp.params, est.free, start_step)
        cfg = replace(est, seed=draw_seed, initial_params=start)
        res = maximize_simulated_likelihood(data, cfg, template=dgp.params, truth=dgp.params)
        out = res.to_dict(timing=False)
        out.update(rep=rep, data_seed=data_seed, draw_seed=draw_seed)
        return out, res.wall_time
    except (ValueError, FloatingPointError, ArithmeticError, RuntimeError) as exc:
        return {"rep": rep, "data_seed": data_seed, "draw_seed": draw_seed,
                "error": f"{type(exc).__name__}: {exc}"}, 0.0


def summarize(truth: ModelParams, free, reps: list, wall_times=()) -> StudyReport:
    ok = [r for r in reps if "error" not in r]
    tv = {n: truth.get(n) for n in free}
    mean, sd, rmse = {}, {}, {}
    sq = []
    for n in free:
        est = np.array([r["estimates"][n] for r in ok], dtype=float)
        if len(est):
            mean[n] = float(est.mean())
            sd[n] = float(est.std(ddof=1)) if len(est) > 1 else 0.0
            rmse[n] = float(np.sqrt(np.mean((est - tv[n]) ** 2)))
            sq.extend(((est - tv[n]) ** 2).tolist())
        else:
            mean[n] = sd[n] = rmse[n] = None
    lt = [r["loglik_at_truth"] for r in ok if r.get("loglik_at_truth") is not None]
    lh = [r["loglik_at_hat"] for r in ok]
    return StudyReport(
        truth=tv, mean=mean, sd=sd, rmse=rmse,
        rmse_all=float(np.sqrt(np.mean(sq))) if sq else None,
        n_reps=len(reps), n_failed=len(reps) - len(ok),
        mean_loglik_truth=float(np.mean(lt)) if lt else None,
        mean_loglik_hat=float(np.mean(lh)) if lh else None,
        replications=reps, wall_times=list(wall_times),
    )


def monte_carlo_study(dgp: DgpConfig, est: EstimationConfig, n_reps: int, seed: int = 0,
                      threads: int = 1, start_step: float = 0.1) -> StudyReport:
    """Estimate on `n_reps` fresh datasets and summarize across replications.

    Replication ``r`` draws its dataset and simulation draws from seeds
    derived from ``(seed, r)``, so results do not depend on `threads`.
    Failed replications are recorded and left out of the summary.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    jobs = [(dgp, est, r, seed, start_step) for r in range(n_reps)]
    if threads > 1 and n_reps > 1:
        with ProcessPoolExecutor(max_workers=min(threads, n_reps)) as pool:
            outs = list(pool.map(_run_rep, jobs))
    else:
        outs = [_run_rep(j) for j in jobs]
    reps = [o for o, _ in outs]
    return summarize(dgp.params, est.free, reps, [t for _, t in outs])
