"""GHK kernels for full and censored search records.

Each kernel receives arrays of shape ``(n, R, M)`` (consumers sharing one
observation shape, draws, products in a kernel-specific position order)
and returns the per-draw likelihood of shape ``(n, R)``.

Position orders, by kind:

* full path: inspected products in order, then uninspected by id;
* purchase only: the bought product, then the rest by id;
* searched set: the bought product, the other inspected, the uninspected;
* first and purchase: bought, first (if different), the rest;
* subset path: observed chain, hidden products, never-inspected observable.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..core import OUTSIDE, Kind, Market, ObservedData

__all__ = ["Shape", "shape_of", "KERNELS"]


class Shape(NamedTuple):
    kind: Kind
    m: int
    has_outside: bool
    a: int = 0  # J, |S|, or chain length L
    b: int = 0  # h position, hidden count H, or case code
    c: int = 0


def _first_max(*arrs):
    out = arrs[0]
    for a in arrs[1:]:
        out = np.maximum(out, a)
    return out


def shape_of(obs: ObservedData, market: Market) -> tuple[Shape, list[int]]:
    """Observation shape and 0-based product order for the kernel."""
    m = market.n_products
    ho = market.has_outside
    if obs.purchased == OUTSIDE and not ho:
        raise ValueError("outside option bought in a market without one")
    allp = list(range(1, m + 1))
    for j in list(obs.inspected) + list(obs.searched) + [obs.first or 1] + list(obs.observable):
        if not 1 <= j <= m:
            raise ValueError(f"product {j} not in the market")
    k = obs.kind
    if k is Kind.FULL_PATH:
        ins = list(obs.inspected)
        order = ins + [j for j in allp if j not in ins]
        h = -1 if obs.purchased == OUTSIDE else ins.index(obs.purchased)
        if not ins and obs.purchased != OUTSIDE:
            raise ValueError("purchase without inspection")
        return Shape(k, m, ho, len(ins), h), [j - 1 for j in order]
    if k is Kind.PURCHASE_ONLY:
        if obs.purchased == OUTSIDE:
            return Shape(k, m, ho, 0, -1), [j - 1 for j in allp]
        order = [obs.purchased] + [j for j in allp if j != obs.purchased]
        return Shape(k, m, ho, 0, 0), [j - 1 for j in order]
    if k is Kind.SEARCHED_SET:
        s = sorted(obs.searched)
        if obs.purchased == OUTSIDE:
            order = s + [j for j in allp if j not in obs.searched]
            return Shape(k, m, ho, len(s), -1), [j - 1 for j in order]
        rest = [j for j in s if j != obs.purchased]
        order = [obs.purchased] + rest + [j for j in allp if j not in obs.searched]
        return Shape(k, m, ho, len(s), 0), [j - 1 for j in order]
    if k is Kind.FIRST_AND_PURCHASE:
        f, h = obs.first, obs.purchased
        if h == OUTSIDE and f is None:
            return Shape(k, m, ho, 0, 3), [j - 1 for j in allp]
        if h == OUTSIDE:
            order = [f] + [j for j in allp if j != f]
            return Shape(k, m, ho, 0, 2), [j - 1 for j in order]
        if f == h:
            order = [h] + [j for j in allp if j != h]
            return Shape(k, m, ho, 0, 0), [j - 1 for j in order]
        order = [h, f] + [j for j in allp if j not in (h, f)]
        return Shape(k, m, ho, 0, 1), [j - 1 for j in order]
    if k is Kind.SUBSET_PATH:
        path = list(obs.inspected)
        hidden = [j for j in allp if j not in obs.observable]
        never = [j for j in allp if j in obs.observable and j not in path]
        if not path and not hidden and not ho:
            raise ValueError("someone must be inspected when there is no outside option")
        return Shape(k, m, ho, len(path), len(hidden)), [j - 1 for j in path + hidden + never]
    raise ValueError(f"no baseline kernel for {k.value} data")


# ---------------------------------------------------------------------------


def _full(model, sh: Shape, d, uz, ue, u0):
    J, h, m = sh.a, sh.b, sh.m
    p = 1.0
    z = [None] * J
    lower = None
    for pos in range(J - 1, -1, -1):
        z[pos], pp = model.z_draw(d[..., pos], uz[..., pos], lower)
        p = p * pp
        lower = z[pos]
    if h < 0:
        if J == 0:
            y, _ = model.o_draw(u0)
        else:
            y, pp = model.o_draw(u0, upper=z[J - 1])
            p = p * pp
    else:
        if h < J - 1:
            uh, pp = model.u_draw(z[h], d[..., h], ue[..., h], upper=z[J - 1])
            p = p * pp
        else:
            uh, _ = model.u_draw(z[h], d[..., h], ue[..., h])
        y = np.minimum(uh, z[J - 1])
        if sh.has_outside:
            p = p * model.o_cdf(y)
    for j in range(J):
        if j != h:
            p = p * model.u_cdf(y, z[j], d[..., j])
    for k in range(J, m):
        p = p * model.z_cdf(y, d[..., k])
    return p


def _effective(model, d, uz, ue, pos):
    z, _ = model.z_draw(d[..., pos], uz[..., pos])
    u, _ = model.u_draw(z, d[..., pos], ue[..., pos])
    return np.minimum(z, u)


def _below_effective(model, w, d, uz, pos):
    """``Pr(min(z_k, u_k) < w)`` integrated over a free draw of ``z_k``."""
    zk, _ = model.z_draw(d[..., pos], uz[..., pos])
    return np.where(zk > w, model.u_cdf(w, zk, d[..., pos]), 1.0)


def _purchase_only(model, sh: Shape, d, uz, ue, u0):
    if sh.b < 0:
        w, _ = model.o_draw(u0)
        start = 0
        p = 1.0
    else:
        w = _effective(model, d, uz, ue, 0)
        start = 1
        p = model.o_cdf(w) if sh.has_outside else 1.0
    for k in range(start, sh.m):
        p = p * _below_effective(model, w, d, uz, k)
    return p


def _searched_set(model, sh: Shape, d, uz, ue, u0):
    s = sh.a
    if sh.b < 0:
        w, _ = model.o_draw(u0)
        start = 0
        p = 1.0
    else:
        w = _effective(model, d, uz, ue, 0)
        start = 1
        p = model.o_cdf(w) if sh.has_outside else 1.0
    for j in range(start, s):
        zj, pp = model.z_draw(d[..., j], uz[..., j], w)
        p = p * pp * model.u_cdf(w, zj, d[..., j])
    for k in range(s, sh.m):
        p = p * model.z_cdf(w, d[..., k])
    return p


def _first_and_purchase(model, sh: Shape, d, uz, ue, u0):
    case, m = sh.b, sh.m
    if case == 3:
        # nothing inspected, outside bought
        w, _ = model.o_draw(u0)
        p = 1.0
        for k in range(m):
            p = p * model.z_cdf(w, d[..., k])
        return p
    if case == 2:
        # first product at position 0, outside bought
        w, _ = model.o_draw(u0)
        others = range(1, m)
    elif case == 0:
        # first product bought, position 0
        others = range(1, m)
    else:
        # bought at 0, first at 1
        zh, _ = model.z_draw(d[..., 0], uz[..., 0])
        uh, _ = model.u_draw(zh, d[..., 0], ue[..., 0])
        w = np.minimum(zh, uh)
        others = range(2, m)
    zo = {k: model.z_draw(d[..., k], uz[..., k])[0] for k in others}
    f = 0 if case in (0, 2) else 1
    # the first inspection carries the highest reservation value
    floor = [zo[k] for k in others]
    if case == 1:
        floor.append(zh)
    if case == 2:
        floor.append(w)
    p = 1.0
    zf, pp = model.z_draw(d[..., f], uz[..., f], _first_max(*floor) if floor else None)
    p = p * pp
    if case == 0:
        uf, _ = model.u_draw(zf, d[..., 0], ue[..., 0])
        w = np.minimum(zf, uf)
    else:
        p = p * model.u_cdf(w, zf, d[..., f])
    for k in others:
        p = p * np.where(zo[k] > w, model.u_cdf(w, zo[k], d[..., k]), 1.0)
    if sh.has_outside and case in (0, 1):
        p = p * model.o_cdf(w)
    return p


def _subset_path(model, sh: Shape, d, uz, ue, u0):
    L, H, m = sh.a, sh.b, sh.m
    hidden = [_effective(model, d, uz, ue, L + c) for c in range(H)]
    if sh.has_outside:
        hidden.append(model.o_draw(u0)[0])
    top = _first_max(*hidden) if hidden else None
    p = 1.0
    if L == 0:
        y = top
    else:
        z = [None] * L
        z[L - 1], pp = model.z_draw(d[..., L - 1], uz[..., L - 1], top)
        p = p * pp
        for i in range(L - 2, -1, -1):
            z[i], pp = model.z_draw(d[..., i], uz[..., i], z[i + 1])
            p = p * pp
        held = []
        for i in range(L - 1):
            ui, pp = model.u_draw(z[i], d[..., i], ue[..., i], upper=z[L - 1])
            p = p * pp
            held.append(ui)
        held.append(model.u_draw(z[L - 1], d[..., L - 1], ue[..., L - 1])[0])
        if top is not None:
            held.append(top)
        y = np.minimum(z[L - 1], _first_max(*held))
    for k in range(L + H, m):
        p = p * model.z_cdf(y, d[..., k])
    return p


KERNELS = {
    Kind.FULL_PATH: _full,
    Kind.PURCHASE_ONLY: _purchase_only,
    Kind.SEARCHED_SET: _searched_set,
    Kind.FIRST_AND_PURCHASE: _first_and_purchase,
    Kind.SUBSET_PATH: _subset_path,
}
