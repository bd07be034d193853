"""Stratification matrices.

Row k of W spreads a unit of probability mass over k and its nearest
neighbours: neighbours are taken in order of distance, each contributing its
own inclusion probability, until the running total reaches one; the last
neighbour only contributes what is left. A = W diag(pi)^-1.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse

from .geom import MetricSpec, NeighborTable
from .population import Population

# Running sums within this distance of 1 count as having reached 1.
SUM_TOL = 1e-9


class StrataInfeasible(ValueError):
    pass


def _stratum_weights(P: np.ndarray, group_start: np.ndarray, group_end: np.ndarray,
                     tol: float = SUM_TOL) -> np.ndarray:
    """Stratum weights for rows of probabilities laid out in neighbour order.

    P[r, i] is the probability of the i-th nearest unit of row r (zero for
    units outside the active set). The tie group that crosses 1 shares the
    remaining mass in proportion to its members' probabilities.
    """
    cum = np.cumsum(P, axis=1)
    if np.any(cum[:, -1] < 1.0 - tol):
        raise StrataInfeasible("stratum infeasible: active inclusion probabilities sum to less than 1")
    r = np.arange(P.shape[0])[:, None]
    end_cum = cum[r, np.minimum(group_end, P.shape[1] - 1)]
    before = group_start - 1
    start_cum = np.where(before >= 0, cum[r, np.maximum(before, 0)], 0.0)
    thr = 1.0 - tol
    full = end_cum < thr
    boundary = ~full & (start_cum < thr)
    rest = 1.0 - start_cum
    single = group_start == group_end
    with np.errstate(divide="ignore", invalid="ignore"):
        shared = np.where(single, rest, rest * P / (end_cum - start_cum))
    return np.where(full, P, np.where(boundary, shared, 0.0))


def _active_rows(table: NeighborTable, pi_full: np.ndarray, rows: np.ndarray, width: int = 32):
    """Neighbour order and stratum weights for ``rows``, truncated to the
    shortest neighbour prefix that contains every row's stratum."""
    N = table.N
    K = min(width, N)
    while True:
        order = table.order[rows, :K]
        P = pi_full[order]
        if K == N:
            break
        # the stratum must be complete before the (possibly cut) last tie group
        last = table.group_start[rows, K - 1]
        head = np.cumsum(P, axis=1)
        reached = np.where(last > 0, head[np.arange(len(rows)), np.maximum(last - 1, 0)], 0.0)
        if np.all(reached >= 1.0 - SUM_TOL):
            break
        K = min(2 * K, N)
    w = _stratum_weights(P, table.group_start[rows, :K], table.group_end[rows, :K])
    return order, w


@dataclass(frozen=True)
class StrataMatrix:
    """Row-stochastic stratification matrix on a set of active units.

    ``W`` is indexed by local positions 0..J-1; ``active`` maps them back to
    population positions and ``active_ids`` to unit labels.
    """

    W: sparse.csr_array
    pi: np.ndarray
    active: np.ndarray
    active_ids: np.ndarray

    @property
    def g(self) -> np.ndarray:
        """Stratum sizes (nonzeros per row)."""
        return np.diff(self.W.indptr)

    @cached_property
    def A(self) -> sparse.csr_array:
        return build_A(self)

    def dump(self, fh, which: str = "W") -> None:
        """Write the matrix as ``row col value`` lines with 1-based unit ids."""
        M = (self.W if which == "W" else self.A).tocoo()
        for r, c, v in zip(M.row, M.col, M.data):
            fh.write(f"{int(self.active_ids[r])} {int(self.active_ids[c])} {float(v)!r}\n")


def stratum_dense(table: NeighborTable, pi_full: np.ndarray, active: np.ndarray) -> np.ndarray:
    """Dense J x J W restricted to ``active``; pi_full is zero off the active set."""
    order, w = _active_rows(table, pi_full, active)
    local = np.full(table.N, -1)
    local[active] = np.arange(len(active))
    r, c = np.nonzero(w)
    W = np.zeros((len(active), len(active)))
    W[r, local[order[r, c]]] = w[r, c]
    return W


def build_strata(pop: Population, metric: MetricSpec, active=None, pi_active=None, *,
                 table: NeighborTable | None = None) -> StrataMatrix:
    """Stratification matrix over the active units.

    Parameters
    ----------
    active : positions of the active units (all units by default)
    pi_active : their inclusion probabilities (defaults to ``pop.pi[active]``)
    table : precomputed neighbour table for (metric, pop), reused if given
    """
    active = np.arange(pop.N) if active is None else np.asarray(active, dtype=int)
    if pi_active is None:
        if pop.pi is None:
            raise ValueError("population has no inclusion probabilities")
        pi_active = pop.pi[active]
    pi_active = np.asarray(pi_active, dtype=float)
    if pi_active.shape != active.shape:
        raise ValueError("pi_active must match active")
    if np.any(pi_active <= 0) or np.any(pi_active > 1):
        raise ValueError("active inclusion probabilities must lie in (0, 1]")
    if table is None:
        table = NeighborTable(metric, pop)
    pi_full = np.zeros(pop.N)
    pi_full[active] = pi_active
    order, w = _active_rows(table, pi_full, active)
    local = np.full(pop.N, -1)
    local[active] = np.arange(len(active))
    rows = np.repeat(np.arange(len(active)), w.shape[1])
    cols = local[order.ravel()]
    vals = w.ravel()
    keep = vals > 0
    W = sparse.csr_array((vals[keep], (rows[keep], cols[keep])), shape=(len(active),) * 2)
    W.sort_indices()
    return StrataMatrix(W, pi_active, active, pop.ids[active])


def build_A(strata: StrataMatrix) -> sparse.csr_array:
    """A = W D^-1 with D = diag(pi)."""
    if np.any(strata.pi <= 0):
        raise ValueError("zero inclusion probability in an active column")
    return (strata.W @ sparse.diags_array(1.0 / strata.pi)).tocsr()


@dataclass(frozen=True)
class MoranWeights:
    """Spatial weights for the Moran-type spreading index (zero diagonal)."""

    W: sparse.csr_array
    scheme: str
    empty_rows: np.ndarray

    @property
    def row_sums(self) -> np.ndarray:
        return np.asarray(self.W.sum(axis=1)).ravel()


def build_moran_weights(pop: Population, metric: MetricSpec, pi=None, scheme: str = "pik", *,
                        table: NeighborTable | None = None) -> MoranWeights:
    """Weights for the spreading index.

    ``pik``: the stratification weights with the diagonal set to zero (rows
    are not renormalized). ``pik1``: with h_k = 1/pi_k, weight 1 on the
    floor(h_k) - 1 nearest other units and h_k - floor(h_k) on the next one,
    ties at the boundary sharing equally.
    """
    pi = pop.pi if pi is None else np.asarray(pi, dtype=float)
    if pi is None:
        raise ValueError("inclusion probabilities required")
    if np.any(pi <= 0) or np.any(pi > 1):
        raise ValueError("inclusion probabilities must lie in (0, 1]")
    if table is None:
        table = NeighborTable(metric, pop)
    N = pop.N
    rows = np.arange(N)
    order = table.order
    if scheme == "pik":
        w = _stratum_weights(pi[order], table.group_start, table.group_end)
    elif scheme == "pik1":
        # the pik row built with every unit carrying k's own probability, scaled by h_k
        P = np.broadcast_to(pi[:, None], (N, N))
        w = _stratum_weights(P, table.group_start, table.group_end) / pi[:, None]
    else:
        raise ValueError(f"unknown scheme {scheme!r}; valid: pik, pik1")
    w[:, 0] = 0.0  # position 0 is the focal unit
    r = np.repeat(rows, N)
    c = order.ravel()
    v = w.ravel()
    keep = v > 0
    W = sparse.csr_array((v[keep], (r[keep], c[keep])), shape=(N, N))
    W.sort_indices()
    empty = np.flatnonzero(np.diff(W.indptr) == 0)
    return MoranWeights(W, scheme, empty)
