"""Spreading diagnostics: Voronoi spatial balance and the Moran-type index."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geom import MetricSpec, NeighborTable
from .population import Population
from .strata import MoranWeights


class MeasureError(ValueError):
    pass


@dataclass(frozen=True)
class BalanceResult:
    B: float
    v: np.ndarray  # pi-mass of each sampled unit's Voronoi cell, in sample order


@dataclass(frozen=True)
class MoranResult:
    IB: float
    scheme: str
    a_bar: float


def _indicator(sample) -> np.ndarray:
    a = getattr(sample, "indicator", sample)
    return np.asarray(a, dtype=float)


def voronoi_balance(pop: Population, metric: MetricSpec | None, sample, pi=None, *,
                    table: NeighborTable | None = None) -> BalanceResult:
    """Spatial balance B = mean over sampled units of (v_k - 1)^2.

    Every population unit gives its inclusion probability to the nearest
    sampled unit; units equidistant from several sampled units split it
    equally among them.
    """
    a = _indicator(sample) > 0.5
    if not a.any():
        raise MeasureError("empty sample")
    if pi is None:
        pi = getattr(sample, "pi_used", None)
    if pi is None:
        pi = pop.pi
    pi = np.asarray(pi, dtype=float)
    if table is None:
        table = NeighborTable(metric or MetricSpec(), pop)
    N = pop.N
    sel = a[table.order]  # sel[i, r]: r-th nearest unit of i is sampled
    first = np.argmax(sel, axis=1)
    rows = np.arange(N)
    gs = table.group_start[rows, first]
    ge = table.group_end[rows, first]
    mass = np.zeros(N)
    single = gs == ge
    np.add.at(mass, table.order[rows[single], first[single]], pi[single])
    for i in np.flatnonzero(~single):
        members = table.order[i, gs[i]: ge[i] + 1]
        members = members[a[members]]
        mass[members] += pi[i] / len(members)
    v = mass[a]
    n = a.sum()
    return BalanceResult(float(np.sum((v - 1.0) ** 2) / n), v)


def moran_index(sample, weights: MoranWeights) -> MoranResult:
    """Moran-type spreading index in [-1, 1]; -1 for a perfectly spread sample.

    It is the weighted correlation between each unit's indicator and the
    weighted average indicator of its neighbours, unit weights being the row
    sums of W.
    """
    a = _indicator(sample)
    W = weights.W
    r = weights.row_sums
    total = r.sum()
    if total <= 0:
        raise MeasureError("weights have no nonzero rows")
    a_bar = float(a @ r / total)
    z = a - a_bar
    Wz = W @ z
    num = float(z @ Wz)
    with np.errstate(divide="ignore", invalid="ignore"):
        local = np.where(r > 0, Wz / r, 0.0)
    Cz = local - Wz.sum() / total
    zDz = float(r @ (z * z))
    zBz = float(r @ (Cz * Cz))
    den = np.sqrt(zDz * zBz)
    # constant neighbourhood means leave only rounding noise in zBz
    if not (zDz > 0 and zBz > 1e-20 * zDz):
        raise MeasureError("degenerate indicator: zero denominator")
    return MoranResult(num / den, weights.scheme, a_bar)
