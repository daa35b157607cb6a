"""Markets, search records and the conditions that characterize optimal search.

Three independent checkers decide whether a vector of latent values
rationalizes an observed search sequence:

* :func:`check_osr` applies the optimal search rules step by step
  (ranking, continuing, stopping, purchasing);
* :func:`check_pr` applies the equivalent partial-ranking conditions
  built around the core value ``y = min(u_h, z_J)``;
* :func:`check_pr_matrix` evaluates the same ranking as ``D v <= 0`` for a
  differencing matrix ``D``.

Each has a batch counterpart operating on many value vectors that share one
sequence shape, which is what the equivalence tests exercise.

Product ids run from 1; ``OUTSIDE = 0`` denotes the outside option.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "OUTSIDE",
    "Kind",
    "Product",
    "Market",
    "SequenceObservation",
    "Action",
    "ObservedData",
    "ValueVector",
    "check_osr",
    "check_pr",
    "check_pr_matrix",
    "core_value",
    "build_differencing_matrix",
    "check_osr_batch",
    "check_pr_batch",
    "check_pr_matrix_batch",
    "censor",
    "positions",
    "enumerate_sequences",
]

OUTSIDE = 0


class Kind(str, enum.Enum):
    """What part of a search record the researcher observes."""

    FULL_PATH = "full"
    PURCHASE_ONLY = "purchase_only"
    SEARCHED_SET = "searched_set"
    FIRST_AND_PURCHASE = "first_and_purchase"
    SUBSET_PATH = "subset_path"
    DISCOVERY_LOG = "discovery"


@dataclass(frozen=True)
class Product:
    product_id: int
    attributes: tuple[int, int, int]
    price: float
    route_id: int | None = None


@dataclass(frozen=True)
class Market:
    """Products a consumer can search, plus whether an outside option exists.

    Parameters
    ----------
    products : tuple of Product
        Ids must be ``1..M`` in order.
    has_outside : bool
    """

    products: tuple[Product, ...]
    has_outside: bool = False

    def __post_init__(self):
        object.__setattr__(self, "products", tuple(self.products))
        if not self.products:
            raise ValueError("a market needs at least one product")
        for i, p in enumerate(self.products, start=1):
            if p.product_id != i:
                raise ValueError("product ids must be unique and contiguous from 1")
            if len(p.attributes) != 3 or any(a not in (0, 1) for a in p.attributes):
                raise ValueError(f"product {i}: attributes must be three binary values")
            if not np.isfinite(p.price):
                raise ValueError(f"product {i}: price must be finite")

    @property
    def n_products(self) -> int:
        return len(self.products)

    @property
    def attributes(self) -> np.ndarray:
        return np.array([p.attributes for p in self.products], dtype=float)

    @property
    def prices(self) -> np.ndarray:
        return np.array([p.price for p in self.products], dtype=float)

    @property
    def route_ids(self) -> np.ndarray:
        return np.array([-1 if p.route_id is None else p.route_id for p in self.products])

    @classmethod
    def from_arrays(cls, attributes, prices, has_outside=False, route_ids=None) -> "Market":
        attributes = np.asarray(attributes)
        prices = np.asarray(prices, dtype=float)
        routes = [None] * len(prices) if route_ids is None else [int(r) for r in route_ids]
        prods = tuple(
            Product(i + 1, tuple(int(a) for a in attributes[i]), float(prices[i]), routes[i])
            for i in range(len(prices))
        )
        return cls(prods, bool(has_outside))


@dataclass(frozen=True)
class SequenceObservation:
    """A complete search record: ordered inspections and the purchase.

    Parameters
    ----------
    inspected : tuple of int
        Product ids in inspection order.
    purchased : int
        A product id among `inspected`, or ``OUTSIDE``.
    market : Market
    """

    inspected: tuple[int, ...]
    purchased: int
    market: Market

    def __post_init__(self):
        object.__setattr__(self, "inspected", tuple(int(j) for j in self.inspected))
        ins = self.inspected
        m = self.market.n_products
        if len(set(ins)) != len(ins):
            raise ValueError("inspected products must not repeat")
        if any(not 1 <= j <= m for j in ins):
            raise ValueError("inspected product id outside the market")
        if self.purchased == OUTSIDE:
            if not self.market.has_outside:
                raise ValueError("outside option purchased in a market without one")
        elif self.purchased not in ins:
            raise ValueError("purchased product was never inspected")

    @property
    def J(self) -> int:
        return len(self.inspected)

    @property
    def h(self) -> int:
        """1-based inspection position of the purchase; 0 for the outside option."""
        return 0 if self.purchased == OUTSIDE else self.inspected.index(self.purchased) + 1

    @property
    def uninspected(self) -> tuple[int, ...]:
        seen = set(self.inspected)
        return tuple(j for j in range(1, self.market.n_products + 1) if j not in seen)


@dataclass(frozen=True)
class Action:
    """One step of a discovery log: ``kind`` is ``"D"``, ``"I"`` or ``"P"``.

    `target` is a route id for discoveries and a product id otherwise
    (``OUTSIDE`` for buying the outside option).
    """

    kind: str
    target: int

    def __post_init__(self):
        if self.kind not in ("D", "I", "P"):
            raise ValueError(f"unknown action type {self.kind!r}")


@dataclass(frozen=True)
class ObservedData:
    """A possibly censored view of a search record.

    Only the fields meaningful for `kind` are set:

    ========================  ===============================================
    FULL_PATH                 `inspected` (ordered), `purchased`
    PURCHASE_ONLY             `purchased`
    SEARCHED_SET              `searched`, `purchased`
    FIRST_AND_PURCHASE        `first` (``None`` if nothing inspected), `purchased`
    SUBSET_PATH               `inspected` (ordered, observable only), `observable`
    DISCOVERY_LOG             `actions`
    ========================  ===============================================
    """

    kind: Kind
    purchased: int | None = None
    inspected: tuple[int, ...] = ()
    searched: frozenset[int] = field(default_factory=frozenset)
    first: int | None = None
    observable: frozenset[int] = field(default_factory=frozenset)
    actions: tuple[Action, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "inspected", tuple(int(j) for j in self.inspected))
        object.__setattr__(self, "searched", frozenset(int(j) for j in self.searched))
        object.__setattr__(self, "observable", frozenset(int(j) for j in self.observable))
        object.__setattr__(self, "actions", tuple(self.actions))
        k = self.kind
        if k in (Kind.FULL_PATH, Kind.PURCHASE_ONLY, Kind.SEARCHED_SET, Kind.FIRST_AND_PURCHASE):
            if self.purchased is None:
                raise ValueError(f"{k.value} data must record the purchase")
        if k is Kind.FULL_PATH:
            if self.purchased != OUTSIDE and self.purchased not in self.inspected:
                raise ValueError("purchased product was never inspected")
            if len(set(self.inspected)) != len(self.inspected):
                raise ValueError("inspected products must not repeat")
        elif k is Kind.SEARCHED_SET:
            if self.purchased != OUTSIDE and self.purchased not in self.searched:
                raise ValueError("purchased product missing from the searched set")
        elif k is Kind.FIRST_AND_PURCHASE:
            if self.first is None and self.purchased != OUTSIDE:
                raise ValueError("a purchase requires at least one inspection")
        elif k is Kind.SUBSET_PATH:
            if self.purchased is not None:
                raise ValueError("subset-path data drops the purchase")
            if not set(self.inspected) <= self.observable:
                raise ValueError("observed inspections must be observable products")
        elif k is Kind.DISCOVERY_LOG:
            _check_log(self.actions)

    def key(self) -> tuple:
        """Hashable summary, equal for two views exactly when they carry the same information."""
        k = self.kind
        if k is Kind.FULL_PATH:
            return (k.value, self.inspected, self.purchased)
        if k is Kind.PURCHASE_ONLY:
            return (k.value, self.purchased)
        if k is Kind.SEARCHED_SET:
            return (k.value, tuple(sorted(self.searched)), self.purchased)
        if k is Kind.FIRST_AND_PURCHASE:
            return (k.value, self.first, self.purchased)
        if k is Kind.SUBSET_PATH:
            return (k.value, self.inspected, tuple(sorted(self.observable)))
        return (k.value, tuple((a.kind, a.target) for a in self.actions))

    @classmethod
    def full(cls, inspected, purchased) -> "ObservedData":
        return cls(Kind.FULL_PATH, purchased=purchased, inspected=tuple(inspected))


def _check_log(actions: Sequence[Action]):
    if not actions or actions[-1].kind != "P":
        raise ValueError("a discovery log must end in a purchase")
    if any(a.kind == "P" for a in actions[:-1]):
        raise ValueError("a discovery log has exactly one purchase")
    seen = set()
    for a in actions:
        if a.kind == "I":
            if a.target in seen:
                raise ValueError(f"product {a.target} inspected twice")
            seen.add(a.target)
    last = actions[-1].target
    if last != OUTSIDE and last not in seen:
        raise ValueError("purchased product was never inspected")


@dataclass(frozen=True, eq=False)
class ValueVector:
    """Latent values of one consumer's actions.

    Parameters
    ----------
    z, u : array_like
        Reservation and purchase values indexed by ``product_id - 1``.
    u_outside : float or None
        Value of the outside option when the market has one.
    q : dict, optional
        Discovery values keyed by ``(route_id, t)`` with ``t`` counting from 1.
    """

    z: np.ndarray
    u: np.ndarray
    u_outside: float | None = None
    q: dict | None = None

    def __post_init__(self):
        z = np.array(self.z, dtype=float)
        u = np.array(self.u, dtype=float)
        if z.shape != u.shape or z.ndim != 1:
            raise ValueError("z and u must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(u))):
            raise ValueError("values must be finite")
        if self.u_outside is not None and not np.isfinite(self.u_outside):
            raise ValueError("outside value must be finite")
        z.setflags(write=False)
        u.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "u", u)


# ---------------------------------------------------------------------------
# batch checkers on position-ordered arrays
#
# Columns of ``z_pos``/``u_pos`` are ordered by search position: the J
# inspected products first, in inspection order, then the uninspected ones.
# ``h`` is the 0-based position of the purchase, or -1 for the outside option.


def _fallback(u0, n):
    return np.full(n, -np.inf) if u0 is None else np.asarray(u0, dtype=float)


def check_osr_batch(z_pos, u_pos, u0, J: int, h: int) -> np.ndarray:
    """Optimal search rules, applied rule by rule, for each row."""
    z_pos = np.asarray(z_pos, dtype=float)
    u_pos = np.asarray(u_pos, dtype=float)
    n, m = z_pos.shape
    best_u = _fallback(u0, n)
    ok = np.ones(n, dtype=bool)
    for j in range(J):
        # ranking: the product inspected at step j has the highest z still unopened
        ok &= z_pos[:, j] >= z_pos[:, j:].max(axis=1)
        # continuing: the best unopened z beats everything in hand
        ok &= z_pos[:, j:].max(axis=1) >= best_u
        best_u = np.maximum(best_u, u_pos[:, j])
    if J < m:
        # stopping: what is in hand beats every unopened z
        ok &= best_u >= z_pos[:, J:].max(axis=1)
    # purchasing: the bought value is the best in hand
    bought = _fallback(u0, n) if h < 0 else u_pos[:, h]
    ok &= bought >= best_u
    return ok


def _core_value_batch(z_pos, u_pos, u0, J, h):
    if h < 0:
        return np.asarray(u0, dtype=float)
    return np.minimum(u_pos[:, h], z_pos[:, J - 1])


def check_pr_batch(z_pos, u_pos, u0, J: int, h: int) -> np.ndarray:
    """Partial-ranking conditions around the core value, for each row."""
    z_pos = np.asarray(z_pos, dtype=float)
    u_pos = np.asarray(u_pos, dtype=float)
    n, m = z_pos.shape
    ok = np.ones(n, dtype=bool)
    for j in range(J - 1):
        ok &= z_pos[:, j] >= z_pos[:, j + 1]
    y = _core_value_batch(z_pos, u_pos, u0, J, h)
    if J >= 1 and h < J - 1:
        bought = np.asarray(u0, dtype=float) if h < 0 else u_pos[:, h]
        ok &= bought <= z_pos[:, J - 1]
    for j in range(J):
        if j != h:
            ok &= u_pos[:, j] <= y
    if u0 is not None and h >= 0:
        ok &= np.asarray(u0, dtype=float) <= y
    for k in range(J, m):
        ok &= z_pos[:, k] <= y
    return ok


def _differencing_matrix(J: int, m: int, h: int) -> np.ndarray:
    """Differencing matrix for J inspections of m products, purchase at 0-based h."""
    ncol = J + m
    rest = m - 1
    if h < J - 1:
        rows = np.zeros((J + rest, ncol), dtype=np.int8)
        # ranking chain with the bought value at its bottom
        for r in range(J):
            rows[r, r] = 1
            rows[r, r + 1] = -1
        # everything unselected sits below u_h
        for r in range(rest):
            rows[J + r, 0] = -1
            rows[J + r, J + 1 + r] = 1
        return rows
    rows = np.zeros((J - 1 + 2 * rest, ncol), dtype=np.int8)
    for r in range(J - 1):
        rows[r, r + 1] = 1
        rows[r, r + 2] = -1
    # everything unselected sits below both u_h and z_J
    for r in range(rest):
        rows[J - 1 + r, 0] = -1
        rows[J - 1 + r, J + 1 + r] = 1
        rows[J - 1 + rest + r, 1] = -1
        rows[J - 1 + rest + r, J + 1 + r] = 1
    return rows


def _stack_batch(z_pos, u_pos, J, h):
    """Stacked values (u_h, z_J..z_1, z uninspected, u other inspected)."""
    others = [j for j in range(J) if j != h]
    return np.column_stack(
        [u_pos[:, h], z_pos[:, J - 1::-1], z_pos[:, J:], u_pos[:, others]]
    )


def check_pr_matrix_batch(z_pos, u_pos, J: int, h: int) -> np.ndarray:
    """``D v <= 0`` row-wise; markets without an outside option only."""
    z_pos = np.asarray(z_pos, dtype=float)
    u_pos = np.asarray(u_pos, dtype=float)
    d = _differencing_matrix(J, z_pos.shape[1], h).astype(float)
    v = _stack_batch(z_pos, u_pos, J, h)
    if d.shape[0] == 0:
        return np.ones(len(v), dtype=bool)
    return np.all(v @ d.T <= 0, axis=1)


# ---------------------------------------------------------------------------
# single-record API


def positions(seq: SequenceObservation) -> tuple[np.ndarray, int, int]:
    """Product indices (0-based) in search-position order, J and 0-based h."""
    order = [j - 1 for j in seq.inspected] + [k - 1 for k in seq.uninspected]
    return np.array(order, dtype=int), seq.J, seq.h - 1


def _as_batch(values: ValueVector, seq: SequenceObservation):
    m = seq.market.n_products
    if values.z.shape[0] != m:
        raise ValueError(f"values cover {values.z.shape[0]} products, market has {m}")
    if seq.market.has_outside and values.u_outside is None:
        raise ValueError("market has an outside option but no outside value was given")
    order, J, h = positions(seq)
    u0 = None
    if seq.market.has_outside:
        u0 = np.array([values.u_outside])
    return values.z[order][None, :], values.u[order][None, :], u0, J, h


def check_osr(values: ValueVector, seq: SequenceObservation) -> bool:
    """Whether `seq` follows the optimal search rules under `values`."""
    z, u, u0, J, h = _as_batch(values, seq)
    return bool(check_osr_batch(z, u, u0, J, h)[0])


def check_pr(values: ValueVector, seq: SequenceObservation) -> bool:
    """Whether `values` satisfy the partial-ranking conditions of `seq`."""
    z, u, u0, J, h = _as_batch(values, seq)
    return bool(check_pr_batch(z, u, u0, J, h)[0])


def core_value(values: ValueVector, seq: SequenceObservation) -> float:
    """Core value ``min(u_h, z_J)``; the outside value when it was bought."""
    if seq.purchased == OUTSIDE:
        if values.u_outside is None:
            raise ValueError("outside option bought but no outside value given")
        return float(values.u_outside)
    if seq.J < 1:
        raise ValueError("core value needs at least one inspection")
    return float(min(values.u[seq.purchased - 1], values.z[seq.inspected[-1] - 1]))


def build_differencing_matrix(seq: SequenceObservation) -> np.ndarray:
    """Differencing matrix of `seq` over the stacked value vector.

    The stacked order is ``(u_h, z_J, ..., z_1, z of uninspected products
    by id, u of the other inspected products in inspection order)``.
    With ``h < J`` the matrix has ``J + M - 1`` rows, otherwise
    ``J + 2M - 3``.
    """
    if seq.J < 1 or seq.purchased == OUTSIDE:
        raise ValueError("differencing matrix needs an inspected purchase")
    return _differencing_matrix(seq.J, seq.market.n_products, seq.h - 1)


def stacked_values(values: ValueVector, seq: SequenceObservation) -> np.ndarray:
    z, u, _, J, h = _as_batch(values, seq)
    return _stack_batch(z, u, J, h)[0]


def check_pr_matrix(values: ValueVector, seq: SequenceObservation) -> bool:
    """Whether ``D v <= 0`` holds; the outside option is not represented."""
    if seq.market.has_outside:
        raise ValueError("the matrix form covers markets without an outside option")
    if seq.J < 1:
        raise ValueError("differencing matrix needs an inspected purchase")
    z, u, _, J, h = _as_batch(values, seq)
    return bool(check_pr_matrix_batch(z, u, J, h)[0])


def enumerate_sequences(market: Market) -> list[SequenceObservation]:
    """Every well-formed search record over `market`."""
    from itertools import permutations

    m = market.n_products
    out = []
    if market.has_outside:
        out.append(SequenceObservation((), OUTSIDE, market))
    for J in range(1, m + 1):
        for ins in permutations(range(1, m + 1), J):
            buys = list(ins) + ([OUTSIDE] if market.has_outside else [])
            for b in buys:
                out.append(SequenceObservation(ins, b, market))
    return out


# ---------------------------------------------------------------------------
# censoring


def censor(seq: SequenceObservation, scenario: Kind | str,
           observable: Iterable[int] | None = None) -> ObservedData:
    """Reduce a full record to what `scenario` lets the researcher see.

    Parameters
    ----------
    seq : SequenceObservation
    scenario : Kind or str
    observable : iterable of int, optional
        Products whose inspections are recorded; required for SUBSET_PATH.
    """
    k = Kind(scenario)
    if k is Kind.FULL_PATH:
        return ObservedData(k, purchased=seq.purchased, inspected=seq.inspected)
    if k is Kind.PURCHASE_ONLY:
        return ObservedData(k, purchased=seq.purchased)
    if k is Kind.SEARCHED_SET:
        return ObservedData(k, purchased=seq.purchased, searched=frozenset(seq.inspected))
    if k is Kind.FIRST_AND_PURCHASE:
        first = seq.inspected[0] if seq.inspected else None
        return ObservedData(k, purchased=seq.purchased, first=first)
    if k is Kind.SUBSET_PATH:
        if observable is None:
            raise ValueError("subset-path censoring needs the observable products")
        obs = frozenset(int(j) for j in observable)
        path = tuple(j for j in seq.inspected if j in obs)
        return ObservedData(k, inspected=path, observable=obs)
    raise ValueError("full search records have no discovery log to censor")
