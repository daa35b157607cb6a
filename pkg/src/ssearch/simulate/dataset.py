"""Synthetic datasets and their on-disk form.

A dataset directory holds

``consumers.csv``
    one row per consumer and product (outside option included), with the
    censored view of the search encoded in ``inspected_rank``,
    ``purchased`` and ``observable``;
``actions.csv``
    discovery logs, one row per action (discovery data only);
``catalog.csv``
    route populations (discovery data only);
``truth.json``
    true parameters and seed;
``dataset.json``
    design metadata needed to read the rest back;
``latents.npz``
    realized values, kept for validation and never read by estimation.
"""
from __future__ import annotations

import csv
import io
import json
import math
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..core import OUTSIDE, Action, Kind, Market, ObservedData, censor
from .baseline import batch_to_sequences, draw_values_batch, simulate_search_batch
from .discovery import (DiscoveryMarket, RouteCatalog, decode_actions, discovery_tables,
                        draw_discovery_values, simulate_discovery_batch)
from .params import ModelParams

__all__ = [
    "DataError",
    "DiscoveryDesign",
    "DgpConfig",
    "Dataset",
    "binary_attributes",
    "draw_catalog",
    "generate_dataset",
    "write_dataset",
    "read_dataset",
]

FORMAT_VERSION = 1


class DataError(ValueError):
    """Malformed dataset files."""


def binary_attributes() -> np.ndarray:
    """The eight 0/1 combinations of three attributes, ``(0,0,0)`` first."""
    return np.array([[a, b, c] for a in (0, 1) for b in (0, 1) for c in (0, 1)], dtype=float)


@dataclass(frozen=True)
class DiscoveryDesign:
    """Two-route discovery market.

    Each route's catalogue has binary attributes with success probability
    `attr_prob` and uniform prices on `price_range`. A consumer starts aware
    of `n_initial` products drawn from the whole catalogue and can reach
    `pool_size` further products, split across routes and revealed in a
    random order.
    """

    route_sizes: tuple = (600, 400)
    attr_prob: tuple = (0.5, 0.15)
    price_range: tuple = ((0.5, 2.5), (0.0, 1.5))
    n_initial: int = 1
    pool_size: int = 15
    n_per_discovery: int = 2
    max_discoveries: int = 15

    def __post_init__(self):
        k = len(self.route_sizes)
        if k < 1 or len(self.attr_prob) != k or len(self.price_range) != k:
            raise ValueError("route settings must have one entry per route")
        if min(self.route_sizes) < 1 or self.n_initial < 1 or self.pool_size < 0:
            raise ValueError("invalid discovery sizes")
        if self.n_initial + self.pool_size > sum(self.route_sizes):
            raise ValueError("catalogue too small for the consumer pool")
        if self.n_per_discovery < 1 or self.max_discoveries < 0:
            raise ValueError("invalid discovery settings")

    def to_dict(self) -> dict:
        return {k: _plain(v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "DiscoveryDesign":
        d = dict(d)
        for k in ("route_sizes", "attr_prob"):
            if k in d:
                d[k] = tuple(d[k])
        if "price_range" in d:
            d["price_range"] = tuple(tuple(r) for r in d["price_range"])
        return cls(**d)


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    return v


@dataclass(frozen=True)
class DgpConfig:
    """Everything needed to reproduce a synthetic dataset.

    Baseline markets show all eight binary attribute profiles (or the first
    `n_products` of them) with prices drawn per consumer and product from
    ``Uniform(price_low, price_high)``.
    """

    params: ModelParams = field(default_factory=ModelParams)
    n_consumers: int = 2000
    seed: int = 0
    scenario: Kind = Kind.FULL_PATH
    n_products: int = 8
    has_outside: bool = True
    price_low: float = 0.0
    price_high: float = 2.0
    n_observable: int = 6
    discovery: DiscoveryDesign | None = None

    def __post_init__(self):
        object.__setattr__(self, "scenario", Kind(self.scenario))
        if self.n_consumers < 1:
            raise ValueError("n_consumers must be at least 1")
        if not 1 <= self.n_products <= 8:
            raise ValueError("n_products must lie in 1..8")
        if not self.price_high >= self.price_low:
            raise ValueError("price range is empty")
        if (self.scenario is Kind.DISCOVERY_LOG) != (self.discovery is not None):
            raise ValueError("discovery data needs a discovery design and vice versa")
        if self.scenario is Kind.SUBSET_PATH and not 0 <= self.n_observable <= self.n_products:
            raise ValueError("n_observable must lie in 0..n_products")

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "n_consumers": self.n_consumers,
            "seed": self.seed,
            "scenario": self.scenario.value,
            "n_products": self.n_products,
            "has_outside": self.has_outside,
            "price_low": self.price_low,
            "price_high": self.price_high,
            "n_observable": self.n_observable,
            "discovery": None if self.discovery is None else self.discovery.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DgpConfig":
        d = dict(d)
        if "params" in d:
            d["params"] = ModelParams.from_dict(d["params"])
        if d.get("discovery") is not None:
            d["discovery"] = DiscoveryDesign.from_dict(d["discovery"])
        return cls(**d)


@dataclass
class Dataset:
    """Observed records plus the markets they come from.

    `latents` holds realized values and is empty for data read from disk
    unless requested.
    """

    scenario: Kind
    markets: list
    observations: list
    discovery_markets: list | None = None
    catalog: RouteCatalog | None = None
    n_per_discovery: int = 2
    config: DgpConfig | None = None
    latents: dict = field(default_factory=dict)

    @property
    def n_consumers(self) -> int:
        return len(self.observations)

    def summary(self) -> dict:
        """Mean inspections per consumer and purchase shares."""
        n_ins, bought = [], []
        for ob, mk in zip(self.observations, self.markets):
            if ob.kind is Kind.DISCOVERY_LOG:
                n_ins.append(sum(a.kind == "I" for a in ob.actions))
                bought.append(ob.actions[-1].target)
            elif ob.kind is Kind.SEARCHED_SET:
                n_ins.append(len(ob.searched))
                bought.append(ob.purchased)
            elif ob.kind is Kind.FIRST_AND_PURCHASE:
                n_ins.append(float(ob.first is not None))
                bought.append(ob.purchased)
            else:
                n_ins.append(len(ob.inspected))
                bought.append(ob.purchased)
        out = {"n_consumers": self.n_consumers, "scenario": self.scenario.value}
        if self.scenario is Kind.FIRST_AND_PURCHASE:
            out["share_inspecting"] = float(np.mean(n_ins))
        elif self.scenario is not Kind.PURCHASE_ONLY:
            out["mean_inspections"] = float(np.mean(n_ins))
        if self.scenario is Kind.DISCOVERY_LOG:
            out["mean_discoveries"] = float(np.mean(
                [sum(a.kind == "D" for a in ob.actions) for ob in self.observations]))
        known = [b for b in bought if b is not None]
        if known:
            out["outside_share"] = float(np.mean([b == OUTSIDE for b in known]))
            out["inside_share"] = 1.0 - out["outside_share"]
        return out


def _consumer_rng(seed: int, i: int) -> np.random.Generator:
    # one substream per consumer so any subset regenerates identically
    return np.random.Generator(np.random.PCG64([int(seed), 1, int(i)]))


def _baseline(cfg: DgpConfig) -> Dataset:
    attrs = binary_attributes()[: cfg.n_products]
    markets, obs = [], []
    z_all, u_all, u0_all = [], [], []
    for i in range(cfg.n_consumers):
        rng = _consumer_rng(cfg.seed, i)
        prices = rng.uniform(cfg.price_low, cfg.price_high, cfg.n_products)
        mk = Market.from_arrays(attrs, prices, cfg.has_outside)
        z, u, u0 = draw_values_batch(mk, cfg.params, rng, 1)
        order, J, h = simulate_search_batch(z, u, u0)
        seq = batch_to_sequences(order, J, h, mk)[0]
        observable = None
        if cfg.scenario is Kind.SUBSET_PATH:
            observable = (rng.permutation(cfg.n_products)[: cfg.n_observable] + 1).tolist()
        obs.append(censor(seq, cfg.scenario, observable))
        markets.append(mk)
        z_all.append(z[0])
        u_all.append(u[0])
        u0_all.append(np.nan if u0 is None else u0[0])
    latents = {"z": np.array(z_all), "u": np.array(u_all), "u_outside": np.array(u0_all)}
    return Dataset(cfg.scenario, markets, obs, config=cfg, latents=latents)


def draw_catalog(design: DiscoveryDesign, rng: np.random.Generator) -> RouteCatalog:
    """Route populations: binary attributes and uniform prices per route."""
    attrs, prices = {}, {}
    for k, n in enumerate(design.route_sizes):
        attrs[k + 1] = (rng.random((n, 3)) < design.attr_prob[k]).astype(float)
        lo, hi = design.price_range[k]
        prices[k + 1] = rng.uniform(lo, hi, n)
    return RouteCatalog(attrs, prices)


def _discovery(cfg: DgpConfig) -> Dataset:
    des = cfg.discovery
    catalog = draw_catalog(des, np.random.Generator(np.random.PCG64([int(cfg.seed), 2])))
    tables = discovery_tables(catalog, cfg.params, des.n_per_discovery)
    routes = catalog.route_ids
    offsets = np.cumsum([0] + [catalog.size(r) for r in routes])
    n_total = int(offsets[-1])
    markets, dms, obs = [], [], []
    lat = {"z": [], "u": [], "u_outside": [], "q": []}
    for i in range(cfg.n_consumers):
        rng = _consumer_rng(cfg.seed, i)
        picked = rng.choice(n_total, des.n_initial + des.pool_size, replace=False)
        route_of = np.searchsorted(offsets, picked, side="right")
        x = np.empty((len(picked), 3))
        p = np.empty(len(picked))
        for k, (g, ri) in enumerate(zip(picked, route_of)):
            r = routes[ri - 1]
            x[k] = catalog.attributes[r][g - offsets[ri - 1]]
            p[k] = catalog.prices[r][g - offsets[ri - 1]]
        rid = [routes[ri - 1] for ri in route_of]
        mk = Market.from_arrays(x, p, True, rid)
        initial = tuple(range(1, des.n_initial + 1))
        # the pool is already in random order; each route reveals its share in that order
        reveal = tuple((r, tuple(j + 1 for j in range(des.n_initial, len(picked)) if rid[j] == r))
                       for r in routes)
        dm = DiscoveryMarket(mk, initial, tuple(rv for rv in reveal if rv[1]),
                             des.n_per_discovery, des.max_discoveries)
        z, u, u0, q = draw_discovery_values(dm, cfg.params, tables, rng, 1)
        codes = simulate_discovery_batch(dm, z, u, u0, q)
        obs.append(ObservedData(Kind.DISCOVERY_LOG, actions=decode_actions(dm, codes[0])))
        markets.append(mk)
        dms.append(dm)
        lat["z"].append(z[0])
        lat["u"].append(u[0])
        lat["u_outside"].append(u0[0])
        qq = np.full((len(routes), des.pool_size + 1), np.nan)
        for k, r in enumerate(dm.routes):
            qq[routes.index(r), : q.shape[2]] = q[0, k]
        lat["q"].append(qq)
    latents = {k: np.array(v) for k, v in lat.items()}
    return Dataset(Kind.DISCOVERY_LOG, markets, obs, dms, catalog, des.n_per_discovery, cfg, latents)


def generate_dataset(cfg: DgpConfig) -> Dataset:
    """Simulate `cfg.n_consumers` searches and censor them to `cfg.scenario`.

    Deterministic in `cfg`; consumer ``i`` uses its own random substream.
    """
    if cfg.scenario is Kind.DISCOVERY_LOG:
        return _discovery(cfg)
    return _baseline(cfg)


# ---------------------------------------------------------------- files

CONSUMER_COLUMNS = ["consumer_id", "product_id", "x1", "x2", "x3", "price", "is_outside",
                    "inspected_rank", "purchased", "observable"]
DISCOVERY_COLUMNS = ["route_id", "reveal_order"]
ACTION_COLUMNS = ["consumer_id", "step", "action_type", "target_id", "route_id"]
CATALOG_COLUMNS = ["route_id", "item", "x1", "x2", "x3", "price"]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_rows(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _consumer_rows(ds: Dataset):
    for i, (mk, ob) in enumerate(zip(ds.markets, ds.observations)):
        k = ob.kind
        rank = {}
        if k is Kind.FULL_PATH or k is Kind.SUBSET_PATH:
            rank = {j: r + 1 for r, j in enumerate(ob.inspected)}
        elif k is Kind.SEARCHED_SET:
            # order unknown: every searched product carries rank 1
            rank = {j: 1 for j in ob.searched}
        elif k is Kind.FIRST_AND_PURCHASE and ob.first is not None:
            rank = {ob.first: 1}
        elif k is Kind.DISCOVERY_LOG:
            ins = [a.target for a in ob.actions if a.kind == "I"]
            rank = {j: r + 1 for r, j in enumerate(ins)}
        if k is Kind.DISCOVERY_LOG:
            bought = ob.actions[-1].target
        else:
            bought = ob.purchased
        extra = {}
        if k is Kind.DISCOVERY_LOG:
            dm = ds.discovery_markets[i]
            for j in dm.initial:
                extra[j] = (mk.products[j - 1].route_id, 0)
            for r, prods in dm.reveal:
                for pos, j in enumerate(prods):
                    extra[j] = (r, pos + 1)
        if mk.has_outside:
            row = [i, OUTSIDE, 0, 0, 0, 0.0, 1, 0, int(bought == OUTSIDE), 0]
            if k is Kind.DISCOVERY_LOG:
                row += [0, 0]
            yield row
        for prod in mk.products:
            j = prod.product_id
            row = [i, j, *prod.attributes, prod.price, 0, rank.get(j, 0),
                   int(bought == j), int(j in ob.observable)]
            if k is Kind.DISCOVERY_LOG:
                row += list(extra[j])
            yield row


def write_dataset(ds: Dataset, out_dir, latents: bool = True) -> list[Path]:
    """Write `ds` to `out_dir` and return the files written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    disc = ds.scenario is Kind.DISCOVERY_LOG
    paths = []
    header = CONSUMER_COLUMNS + (DISCOVERY_COLUMNS if disc else [])
    _write_rows(out / "consumers.csv", header, _consumer_rows(ds))
    paths.append(out / "consumers.csv")
    if disc:
        rows = []
        for i, ob in enumerate(ds.observations):
            for s, a in enumerate(ob.actions):
                if a.kind == "D":
                    rows.append([i, s + 1, "D", 0, a.target])
                else:
                    rows.append([i, s + 1, a.kind, a.target, 0])
        _write_rows(out / "actions.csv", ACTION_COLUMNS, rows)
        rows = [[r, k + 1, *ds.catalog.attributes[r][k].astype(int).tolist(),
                 float(ds.catalog.prices[r][k])]
                for r in ds.catalog.route_ids for k in range(ds.catalog.size(r))]
        _write_rows(out / "catalog.csv", CATALOG_COLUMNS, rows)
        paths += [out / "actions.csv", out / "catalog.csv"]
    meta = {
        "format_version": FORMAT_VERSION,
        "scenario": ds.scenario.value,
        "n_consumers": ds.n_consumers,
        "spec": ds.config.params.spec if ds.config else None,
        "n_per_discovery": ds.n_per_discovery if disc else None,
        "max_discoveries": ds.discovery_markets[0].max_discoveries if disc else None,
        "config": ds.config.to_dict() if ds.config else None,
    }
    (out / "dataset.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    paths.append(out / "dataset.json")
    if ds.config is not None:
        truth = {"params": ds.config.params.to_dict(), "seed": ds.config.seed}
        (out / "truth.json").write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n")
        paths.append(out / "truth.json")
    if latents and ds.latents:
        _save_npz(out / "latents.npz", ds.latents)
        paths.append(out / "latents.npz")
    return paths


def _save_npz(path: Path, arrays: dict):
    # np.savez stamps the current time into the archive; fix it so reruns are byte-identical
    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
        for k in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arrays[k]), allow_pickle=False)
            info = zipfile.ZipInfo(k + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, buf.getvalue())


def _read_csv(path: Path, header):
    if not path.exists():
        raise DataError(f"missing file {path.name}")
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        try:
            got = next(rd)
        except StopIteration:
            raise DataError(f"{path.name}: empty file") from None
        if got != header:
            raise DataError(f"{path.name}: expected columns {','.join(header)}")
        for lineno, row in enumerate(rd, start=2):
            if len(row) != len(header):
                raise DataError(f"{path.name} row {lineno}: expected {len(header)} fields, got {len(row)}")
            yield lineno, row


def _num(path, lineno, col, text, kind=int):
    try:
        v = kind(text)
    except ValueError:
        raise DataError(f"{path.name} row {lineno}: column {col} is not a valid number: {text!r}") from None
    if kind is float and not math.isfinite(v):
        raise DataError(f"{path.name} row {lineno}: column {col} is not finite")
    return v


def read_dataset(data_dir) -> Dataset:
    """Read a dataset directory written by :func:`write_dataset`.

    Raises
    ------
    DataError
        On missing files or malformed rows; messages carry the row number.
    """
    d = Path(data_dir)
    meta_path = d / "dataset.json"
    if not meta_path.exists():
        raise DataError("missing file dataset.json")
    try:
        meta = json.loads(meta_path.read_text())
        scenario = Kind(meta["scenario"])
    except (ValueError, KeyError) as exc:
        raise DataError(f"dataset.json: {exc}") from None
    disc = scenario is Kind.DISCOVERY_LOG
    header = CONSUMER_COLUMNS + (DISCOVERY_COLUMNS if disc else [])
    path = d / "consumers.csv"
    per = {}
    order = []
    for lineno, row in _read_csv(path, header):
        i = _num(path, lineno, "consumer_id", row[0])
        j = _num(path, lineno, "product_id", row[1])
        xs = [_num(path, lineno, c, t) for c, t in zip(("x1", "x2", "x3"), row[2:5])]
        price = _num(path, lineno, "price", row[5], float)
        flags = [_num(path, lineno, c, t) for c, t in zip(header[6:], row[6:])]
        if flags[0] not in (0, 1) or flags[2] not in (0, 1) or flags[3] not in (0, 1) or flags[1] < 0:
            raise DataError(f"{path.name} row {lineno}: flag out of range")
        if (flags[0] == 1) != (j == OUTSIDE):
            raise DataError(f"{path.name} row {lineno}: is_outside must mark product 0")
        if i not in per:
            per[i] = []
            order.append(i)
        per[i].append((lineno, j, xs, price, *flags))
    if order != list(range(len(order))):
        raise DataError(f"{path.name}: consumer ids must run 0..n-1 in order")
    actions = {}
    if disc:
        apath = d / "actions.csv"
        for lineno, row in _read_csv(apath, ACTION_COLUMNS):
            i = _num(apath, lineno, "consumer_id", row[0])
            step = _num(apath, lineno, "step", row[1])
            kind = row[2]
            if kind not in ("D", "I", "P"):
                raise DataError(f"{apath.name} row {lineno}: action_type must be D, I or P")
            target = _num(apath, lineno, "target_id", row[3])
            route = _num(apath, lineno, "route_id", row[4])
            log = actions.setdefault(i, [])
            if step != len(log) + 1:
                raise DataError(f"{apath.name} row {lineno}: steps must run 1, 2, ... per consumer")
            log.append((lineno, Action(kind, route if kind == "D" else target)))
        cpath = d / "catalog.csv"
        attrs, prices = {}, {}
        for lineno, row in _read_csv(cpath, CATALOG_COLUMNS):
            r = _num(cpath, lineno, "route_id", row[0])
            attrs.setdefault(r, []).append([_num(cpath, lineno, c, t) for c, t in zip(("x1", "x2", "x3"), row[2:5])])
            prices.setdefault(r, []).append(_num(cpath, lineno, "price", row[5], float))
        catalog = RouteCatalog({r: np.array(v, dtype=float) for r, v in attrs.items()},
                               {r: np.array(v) for r, v in prices.items()})
    markets, obs, dms = [], [], []
    for i in order:
        rows = per[i]
        prods = [r for r in rows if r[1] != OUTSIDE]
        lineno0 = rows[0][0]
        if [r[1] for r in prods] != list(range(1, len(prods) + 1)):
            raise DataError(f"{path.name} row {lineno0}: product ids of consumer {i} must run 1..n")
        has_out = len(prods) < len(rows)
        x = np.array([r[2] for r in prods], dtype=float)
        p = np.array([r[3] for r in prods])
        rank = {r[1]: r[5] for r in prods if r[5] > 0}
        bought = [r[1] for r in rows if r[6] == 1]
        observable = [r[1] for r in prods if r[7] == 1]
        try:
            if disc:
                rid = [r[8] for r in prods]
                mk = Market.from_arrays(x, p, has_out, rid)
                initial = tuple(r[1] for r in prods if r[9] == 0)
                reveal = {}
                for r in prods:
                    if r[9] > 0:
                        reveal.setdefault(r[8], []).append((r[9], r[1]))
                reveal = tuple((k, tuple(j for _, j in sorted(v))) for k, v in sorted(reveal.items()))
                dm = DiscoveryMarket(mk, initial, reveal, int(meta["n_per_discovery"]),
                                     int(meta["max_discoveries"]))
                log = actions.get(i)
                if not log:
                    raise DataError(f"actions.csv: consumer {i} has no actions")
                ob = ObservedData(Kind.DISCOVERY_LOG, actions=tuple(a for _, a in log))
                dms.append(dm)
            else:
                mk = Market.from_arrays(x, p, has_out)
                ob = _observed_from_rows(scenario, rank, bought, observable)
        except DataError:
            raise
        except ValueError as exc:
            raise DataError(f"{path.name} row {lineno0}: consumer {i}: {exc}") from None
        markets.append(mk)
        obs.append(ob)
    cfg = DgpConfig.from_dict(meta["config"]) if meta.get("config") else None
    return Dataset(scenario, markets, obs, dms if disc else None, catalog if disc else None,
                   int(meta["n_per_discovery"] or 2), cfg)


def _observed_from_rows(scenario: Kind, rank: dict, bought: list, observable: list) -> ObservedData:
    if scenario is not Kind.SUBSET_PATH and len(bought) != 1:
        raise ValueError("exactly one purchase flag must be set")
    h = bought[0] if bought else None
    ranked = [j for j, _ in sorted(rank.items(), key=lambda t: t[1])]
    if scenario is Kind.FULL_PATH:
        if sorted(rank.values()) != list(range(1, len(rank) + 1)):
            raise ValueError("inspection ranks must run 1..n")
        return ObservedData(scenario, purchased=h, inspected=tuple(ranked))
    if scenario is Kind.PURCHASE_ONLY:
        if rank:
            raise ValueError("purchase-only data carries no inspections")
        return ObservedData(scenario, purchased=h)
    if scenario is Kind.SEARCHED_SET:
        return ObservedData(scenario, purchased=h, searched=frozenset(rank))
    if scenario is Kind.FIRST_AND_PURCHASE:
        if len(rank) > 1:
            raise ValueError("only the first inspection is recorded")
        return ObservedData(scenario, purchased=h, first=ranked[0] if ranked else None)
    if sorted(rank.values()) != list(range(1, len(rank) + 1)):
        raise ValueError("inspection ranks must run 1..n")
    return ObservedData(scenario, inspected=tuple(ranked), observable=frozenset(observable))
