"""Replication designs with their published reference values."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

from .core import Kind
from .estimate import EstimationConfig, monte_carlo_study
from .simulate.dataset import DgpConfig, DiscoveryDesign
from .simulate.params import ModelParams

__all__ = ["Column", "TablePreset", "PRESETS", "get_preset", "scaled", "run_table_study"]

# optimizer settings for the replication tables; tighter tolerances change
# estimates by far less than their sampling noise and cost many evaluations
STUDY_XTOL = 1e-3
STUDY_FTOL = 1e-3


@dataclass(frozen=True)
class Column:
    """One estimated column: a data design plus its published reference values."""

    label: str
    dgp: DgpConfig
    free: tuple
    reported_mean: dict = field(default_factory=dict)
    reported_sd: dict = field(default_factory=dict)
    reported_loglik: tuple | None = None  # (truth, estimates)


@dataclass(frozen=True)
class TablePreset:
    name: str
    title: str
    columns: tuple
    n_draws: int
    n_reps: int

    def column(self, label: str) -> Column:
        for c in self.columns:
            if c.label == label:
                return c
        raise KeyError(label)

    def estimation(self, n_draws: int | None = None) -> EstimationConfig:
        return EstimationConfig(free=self.columns[0].free, n_draws=n_draws or self.n_draws,
                                xtol=STUDY_XTOL, ftol=STUDY_FTOL)


TABLE1_TRUTH = ModelParams(gamma=(1.0, 0.5, 0.2), gamma_outside=-0.5, beta_mean=-0.6,
                           beta_sd=0.2, log_cost_mean=-3.0)
TABLE1_FREE = ("gamma_outside", "gamma1", "gamma2", "gamma3", "beta_mean", "beta_sd", "log_cost_mean")

TABLE1 = TablePreset(
    name="table1",
    title="Full search records, 8 products and an outside option",
    columns=(Column(
        "PR-GHK",
        DgpConfig(params=TABLE1_TRUTH, n_consumers=2000, scenario=Kind.FULL_PATH),
        TABLE1_FREE,
        reported_mean={"gamma_outside": -0.487, "gamma1": 0.991, "gamma2": 0.495, "gamma3": 0.198,
                       "beta_mean": -0.592, "beta_sd": 0.182, "log_cost_mean": -2.994},
        reported_sd={"gamma_outside": 0.070, "gamma1": 0.060, "gamma2": 0.058, "gamma3": 0.043,
                     "beta_mean": 0.050, "beta_sd": 0.089, "log_cost_mean": 0.050},
        reported_loglik=(-8861.0, -8857.0),
    ),),
    n_draws=500,
    n_reps=10,
)

TABLE2_TRUTH = ModelParams(gamma=(1.0, 0.5, 0.2), beta_mean=-0.6, beta_sd=0.2, log_cost_mean=-1.5)
TABLE2_FREE = ("gamma1", "gamma2", "gamma3", "beta_mean", "beta_sd", "log_cost_mean")


def _t2(label, scenario, mean, sd, ll):
    dgp = DgpConfig(params=TABLE2_TRUTH, n_consumers=2000, scenario=scenario, has_outside=False,
                    n_observable=6)
    names = TABLE2_FREE
    return Column(label, dgp, names, dict(zip(names, mean)), dict(zip(names, sd)), ll)


TABLE2 = TablePreset(
    name="table2",
    title="Incomplete search records, 8 products, no outside option",
    columns=(
        _t2("(1) purchase only", Kind.PURCHASE_ONLY,
            (1.028, 0.519, 0.217, -0.612, 0.205, -1.975), (0.038, 0.032, 0.030, 0.036, 0.118, 0.410),
            (-9539.0, -9546.0)),
        _t2("(2) searched set", Kind.SEARCHED_SET,
            (1.006, 0.504, 0.203, -0.604, 0.247, -1.427), (0.024, 0.021, 0.021, 0.029, 0.063, 0.021),
            (-19477.0, -19468.0)),
        _t2("(3) first and purchase", Kind.FIRST_AND_PURCHASE,
            (1.000, 0.502, 0.204, -0.602, 0.242, -1.512), (0.029, 0.022, 0.025, 0.032, 0.081, 0.053),
            (-15500.0, -15496.0)),
        _t2("(4) subset path", Kind.SUBSET_PATH,
            (0.994, 0.499, 0.203, -0.596, 0.228, -1.509), (0.031, 0.026, 0.026, 0.032, 0.090, 0.028),
            (-16416.0, -16412.0)),
        _t2("full info", Kind.FULL_PATH,
            (0.989, 0.497, 0.203, -0.590, 0.186, -1.502), (0.025, 0.021, 0.021, 0.029, 0.064, 0.021),
            (-22365.0, -22361.0)),
    ),
    n_draws=800,
    n_reps=10,
)

TABLE3_TRUTH = ModelParams(gamma=(0.3, 0.2, 0.1), gamma_outside=0.0, beta_mean=-0.6, beta_sd=0.0,
                           log_cost_mean=-2.0, disc_log_cost_mean=-2.5, disc_log_cost_sd=0.25)
TABLE3_FREE = ("gamma1", "gamma2", "gamma3", "beta_mean", "log_cost_mean", "disc_log_cost_mean")

TABLE3 = TablePreset(
    name="table3",
    title="Search with product discovery, two routes",
    columns=(Column(
        "PR-GHK",
        DgpConfig(params=TABLE3_TRUTH, n_consumers=2000, scenario=Kind.DISCOVERY_LOG,
                  discovery=DiscoveryDesign()),
        TABLE3_FREE,
        reported_mean=dict(zip(TABLE3_FREE, (0.292, 0.180, 0.096, -0.572, -1.953, -2.474))),
        reported_sd=dict(zip(TABLE3_FREE, (0.034, 0.058, 0.037, 0.017, 0.047, 0.052))),
        reported_loglik=(-20892.0, -20885.0),
    ),),
    n_draws=1000,
    n_reps=5,
)

PRESETS = {p.name: p for p in (TABLE1, TABLE2, TABLE3)}


def get_preset(name: str) -> TablePreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown table {name!r}; choose from {', '.join(PRESETS)}") from None


def scaled(dgp: DgpConfig, scale: float) -> DgpConfig:
    """Shrink or grow the consumer count (and discovery catalogue) by `scale`."""
    if not scale > 0:
        raise ValueError("scale must be positive")
    n = max(1, int(round(dgp.n_consumers * scale)))
    if dgp.discovery is None:
        return replace(dgp, n_consumers=n)
    sizes = tuple(max(1, int(round(s * scale))) for s in dgp.discovery.route_sizes)
    return replace(dgp, n_consumers=n, discovery=replace(dgp.discovery, route_sizes=sizes))


def run_table_study(table: str, reps: int | None, draws: int | None, scale: float, seed: int,
                    threads: int = 1, columns=None) -> tuple[dict, dict]:
    """Monte Carlo study of some or all columns of a table.

    Column ``k`` of the table uses study seed ``100 * seed + k`` whichever
    columns are selected, so a column's numbers never depend on its company.

    Returns
    -------
    results : dict
        Column label to study summary plus the design and reference values.
    timing : dict
        Wall times, kept apart because they are not reproducible.
    """
    tab = get_preset(table)
    reps = reps or tab.n_reps
    draws = draws or tab.n_draws
    cols = tab.columns if not columns else [tab.column(c) for c in columns]
    results, timing = {}, {}
    for col in cols:
        dgp = scaled(col.dgp, scale)
        est = replace(tab.estimation(draws), free=col.free)
        t0 = time.perf_counter()
        study = monte_carlo_study(dgp, est, reps, seed=seed * 100 + tab.columns.index(col), threads=threads)
        entry = study.to_dict()
        entry.update(n_consumers=dgp.n_consumers, scenario=dgp.scenario.value,
                     reported_mean=col.reported_mean, reported_sd=col.reported_sd,
                     reported_loglik=col.reported_loglik)
        results[col.label] = entry
        timing[col.label] = {"total": time.perf_counter() - t0, "per_rep": study.wall_times}
    return results, timing
