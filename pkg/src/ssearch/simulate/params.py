"""Structural parameters."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

from ..values import search_propensity

__all__ = ["ModelParams", "CORRELATED_TASTE", "STOCHASTIC_COST", "PARAM_NAMES"]

CORRELATED_TASTE = "correlated_taste"
STOCHASTIC_COST = "stochastic_cost_exp"
SPECS = (CORRELATED_TASTE, STOCHASTIC_COST)

# names usable as free parameters in estimation
PARAM_NAMES = (
    "gamma1",
    "gamma2",
    "gamma3",
    "gamma_outside",
    "beta_mean",
    "beta_sd",
    "log_cost_mean",
    "cost_scale",
    "disc_log_cost_mean",
    "disc_log_cost_sd",
)


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the search model.

    Utility of product ``j`` for consumer ``i`` has deterministic part
    ``delta_ij = gamma . x_j + beta_i p_ij`` with
    ``beta_i ~ N(beta_mean, beta_sd^2)``.

    Under ``correlated_taste`` a taste shock ``zeta_ij`` known before
    inspection enters both values,
    ``z = delta + zeta + m_eps(exp(log_cost_mean))`` and
    ``u = delta + zeta + eps``. Under ``stochastic_cost_exp`` the search
    cost is exponential with mean `cost_scale`, ``z = delta + m_eps(c)``
    and ``u = delta + eps``. The outside option is worth
    ``gamma_outside + eps_0``.

    Discovery values use log-normal discovery costs with mean
    `disc_log_cost_mean` and sd `disc_log_cost_sd` on the log scale.
    """

    gamma: tuple[float, float, float] = (1.0, 0.5, 0.2)
    gamma_outside: float = -0.5
    beta_mean: float = -0.6
    beta_sd: float = 0.2
    log_cost_mean: float = -3.0
    cost_scale: float = 0.8
    disc_log_cost_mean: float = -2.5
    disc_log_cost_sd: float = 0.25
    sigma_eps: float = 1.0
    sigma_taste: float = 1.0
    spec: str = CORRELATED_TASTE

    def __post_init__(self):
        object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))
        if len(self.gamma) != 3:
            raise ValueError("gamma must have three entries")
        if self.spec not in SPECS:
            raise ValueError(f"unknown specification {self.spec!r}")
        for name in ("beta_sd", "disc_log_cost_sd"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("cost_scale", "sigma_eps", "sigma_taste"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and not math.isfinite(v):
                raise ValueError(f"{f.name} must be finite")

    def get(self, name: str) -> float:
        if name.startswith("gamma") and name[5:].isdigit():
            return self.gamma[int(name[5:]) - 1]
        return getattr(self, name)

    def with_values(self, **kw) -> "ModelParams":
        """Copy with named parameters (``gamma1`` ... included) replaced."""
        gamma = list(self.gamma)
        rest = {}
        for k, v in kw.items():
            if k.startswith("gamma") and k[5:].isdigit():
                gamma[int(k[5:]) - 1] = float(v)
            else:
                rest[k] = v
        return replace(self, gamma=tuple(gamma), **rest)

    @property
    def inspect_propensity(self) -> float:
        """``m_eps(exp(log_cost_mean))``, the reservation gap under correlated tastes."""
        return search_propensity(math.exp(self.log_cost_mean), self.sigma_eps)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gamma"] = list(self.gamma)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown parameter fields: {sorted(extra)}")
        return cls(**d)
