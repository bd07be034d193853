"""Squared distances, quasi-metrics and nearest-neighbour rankings.

Every distance in the package is kept squared; rankings only need a monotone
transform of the Euclidean length so no square root is ever taken.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .population import Population, as_generator

TIE_RTOL = 1e-12

METRIC_KINDS = ("euclidean2", "tore2", "shifted_tore2", "mahalanobis2")
_ALIASES = {
    "euclidean": "euclidean2",
    "tore": "tore2",
    "torus": "tore2",
    "shifted-tore": "shifted_tore2",
    "shifted_tore": "shifted_tore2",
    "mahalanobis": "mahalanobis2",
}


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class MetricSpec:
    """Which (quasi-)metric to use and its parameters.

    ``shift`` only applies to ``shifted_tore2``; when it is None a shift is
    drawn by :func:`resolve_shift` (the sampler does this once per run).
    """

    kind: str = "euclidean2"
    grid_dims: tuple[int, int] | None = None
    shift: tuple[float, ...] | None = None
    aux_cov: np.ndarray | None = None

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in METRIC_KINDS:
            raise MetricError(f"unknown metric {self.kind!r}; valid: {', '.join(METRIC_KINDS)}")
        object.__setattr__(self, "kind", kind)
        if kind in ("tore2", "shifted_tore2"):
            if self.grid_dims is None:
                raise MetricError(f"{kind} requires grid_dims")
            object.__setattr__(self, "grid_dims", tuple(float(g) for g in self.grid_dims))
        if self.shift is not None:
            object.__setattr__(self, "shift", tuple(float(e) for e in self.shift))
        if self.aux_cov is not None:
            object.__setattr__(self, "aux_cov", np.atleast_2d(np.asarray(self.aux_cov, dtype=float)))

    @property
    def is_symmetric(self) -> bool:
        return self.kind != "shifted_tore2"

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.grid_dims is not None:
            d["grid_dims"] = list(self.grid_dims)
        if self.shift is not None:
            d["shift"] = list(self.shift)
        if self.aux_cov is not None:
            d["aux_cov"] = self.aux_cov.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict | str | None) -> MetricSpec:
        if d is None:
            return cls()
        if isinstance(d, str):
            return cls(kind=d)
        d = dict(d)
        if d.get("grid_dims") is not None:
            d["grid_dims"] = tuple(d["grid_dims"])
        return cls(**d)


def resolve_shift(metric: MetricSpec, seed=None) -> MetricSpec:
    """Fill in a random shift ~ Normal(0, I/100) for a shifted tore metric."""
    if metric.kind != "shifted_tore2" or metric.shift is not None:
        return metric
    rng = as_generator(seed)
    return replace(metric, shift=tuple(rng.normal(0.0, 0.1, size=len(metric.grid_dims))))


class _Prepared:
    """Metric bound to a population: the arrays distances are computed on."""

    def __init__(self, metric: MetricSpec, pop: Population):
        self.metric = metric
        kind = metric.kind
        if kind == "mahalanobis2":
            if pop.aux is None:
                raise MetricError("mahalanobis2 requires auxiliary variables")
            x = np.asarray(pop.aux, dtype=float)
            S = metric.aux_cov
            if S is None:
                xc = x - x.mean(axis=0)
                S = xc.T @ xc / len(x)
            if S.shape != (x.shape[1], x.shape[1]):
                raise MetricError("aux_cov shape does not match auxiliary variables")
            if 1.0 / np.linalg.cond(S) < 1e-12:
                raise MetricError("covariance matrix is singular (reciprocal condition < 1e-12)")
            # m_M^2 = |L^T (x_k - x_l)|^2 with S^-1 = L L^T
            L = np.linalg.cholesky(np.linalg.inv(S))
            self.z = x @ L
        else:
            self.z = np.asarray(pop.coords, dtype=float)
        if kind in ("tore2", "shifted_tore2"):
            dims = np.asarray(metric.grid_dims)
            if self.z.shape[1] != len(dims):
                raise MetricError("grid_dims length must equal the coordinate dimension")
            if np.any(self.z < 0) or np.any(self.z >= dims):
                raise MetricError("tore metric requires coordinates inside [0, N1) x [0, N2)")
            self.dims = dims
            if kind == "shifted_tore2":
                if metric.shift is None:
                    raise MetricError("shifted_tore2 requires a shift (see resolve_shift)")
                self.shift = np.asarray(metric.shift)
                if self.shift.shape != dims.shape:
                    raise MetricError("shift length must equal the coordinate dimension")
            else:
                self.shift = np.zeros_like(dims)

    def from_unit(self, k: int, targets=None) -> np.ndarray:
        """Squared distances m(k, l) for l in targets (all units by default)."""
        z = self.z if targets is None else self.z[targets]
        if self.metric.kind in ("euclidean2", "mahalanobis2"):
            d = z - self.z[k]
            return np.einsum("ij,ij->i", d, d)
        diff = (self.z[k] + self.shift) - z
        # min over the three wraps in each coordinate
        wraps = np.stack([diff, diff + self.dims, diff - self.dims])
        return np.min(wraps**2, axis=0).sum(axis=1)


def prepare(metric: MetricSpec, pop: Population) -> _Prepared:
    return _Prepared(metric, pop)


def distance2(metric: MetricSpec, pop: Population, k: int, l: int) -> float:
    """Squared (quasi-)distance from unit k to unit l (0-based positions).

    For the shifted tore only k's coordinates are shifted, so the result is
    not symmetric in general; m(k, k) is 0 by definition.
    """
    N = pop.N
    if not (0 <= k < N and 0 <= l < N):
        raise IndexError("unit index out of range")
    if k == l:
        return 0.0
    return float(_Prepared(metric, pop).from_unit(k, [l])[0])


def distance_matrix(metric: MetricSpec, pop: Population) -> np.ndarray:
    """Dense matrix M[k, l] = m(k, l), zero diagonal. Intended for small populations."""
    prep = _Prepared(metric, pop)
    M = np.vstack([prep.from_unit(k) for k in range(pop.N)])
    np.fill_diagonal(M, 0.0)
    return M


def _group_bounds(d_sorted: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """For each position of a sorted distance row, first and last position of
    its tie group. Position 0 (the focal unit) is always a group of its own."""
    m = len(d_sorted)
    new = np.ones(m, dtype=bool)
    if m > 2:
        step = np.diff(d_sorted[1:])
        new[2:] = step > TIE_RTOL * np.abs(d_sorted[2:])
    gid = np.cumsum(new) - 1
    starts = np.flatnonzero(new)
    ends = np.append(starts[1:] - 1, m - 1)
    return starts[gid], ends[gid]


def _sorted_row(d: np.ndarray, k: int, ids: np.ndarray) -> np.ndarray:
    """Order of units by increasing distance, focal first, ties by position."""
    not_focal = ids != k
    return np.lexsort((ids, not_focal, d))


@dataclass(frozen=True)
class NeighborRanking:
    """Units ordered by increasing distance from a focal unit."""

    focal: int
    order: np.ndarray
    distances: np.ndarray
    group_start: np.ndarray
    group_end: np.ndarray

    @property
    def tie_groups(self) -> list[np.ndarray]:
        starts = np.unique(self.group_start)
        return [self.order[s: self.group_end[s] + 1] for s in starts]

    def __len__(self):
        return len(self.order)


def rank_neighbors(metric: MetricSpec, pop: Population, k: int, active=None) -> NeighborRanking:
    """Rank the ``active`` units (all by default) by distance from unit k."""
    active = np.arange(pop.N) if active is None else np.asarray(active, dtype=int)
    if k not in set(active.tolist()):
        raise ValueError("focal unit must belong to the active set")
    d = _Prepared(metric, pop).from_unit(k, active)
    idx = _sorted_row(d, k, active)
    ds = d[idx]
    gs, ge = _group_bounds(ds)
    return NeighborRanking(int(k), active[idx], ds, gs, ge)


class NeighborTable:
    """Full neighbour ordering of every unit, one row per focal unit.

    ``order[k]`` lists all units by increasing distance from k (k first);
    ``group_start[k, i]`` / ``group_end[k, i]`` delimit the tie group of
    position i. Memory is O(N^2) integers; distances are computed row by row
    and never stored as a full matrix.
    """

    def __init__(self, metric: MetricSpec, pop: Population):
        prep = _Prepared(metric, pop)
        N = pop.N
        dtype = np.int32 if N < 2**31 else np.int64
        self.metric = metric
        self.N = N
        self.order = np.empty((N, N), dtype=dtype)
        self.group_start = np.empty((N, N), dtype=dtype)
        self.group_end = np.empty((N, N), dtype=dtype)
        ids = np.arange(N)
        for k in range(N):
            d = prep.from_unit(k)
            idx = _sorted_row(d, k, ids)
            gs, ge = _group_bounds(d[idx])
            self.order[k] = idx
            self.group_start[k] = gs
            self.group_end[k] = ge

    def ranking(self, k: int) -> np.ndarray:
        return self.order[k]


def nearest_among(prep: _Prepared, k: int, candidates: np.ndarray) -> np.ndarray:
    """All candidates tied for the smallest distance from k (relative tol)."""
    d = prep.from_unit(k, candidates)
    dmin = d.min()
    return candidates[d <= dmin + TIE_RTOL * abs(dmin)]
