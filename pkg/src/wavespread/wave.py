"""Weakly associated vector sampling.

A martingale random walk on the inclusion-probability vector. At every step
the stratification matrix A of the still-undecided units is rebuilt, the
walk moves along the (centred) right singular vector of its smallest
singular value, and the step is pushed as far as the unit hypercube allows so
that at least one unit is resolved to 0 or 1.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.linalg.lapack import dsyevr, dsyevr_lwork

from .geom import MetricSpec, NeighborTable, resolve_shift
from .population import Population, as_generator
from .strata import stratum_dense


class SamplingError(RuntimeError):
    """Numerical failure during sample selection."""


@dataclass(frozen=True)
class Sample:
    """A selected sample as a 0/1 indicator over the population."""

    indicator: np.ndarray
    pi_used: np.ndarray
    ids: np.ndarray | None = None
    info: dict = field(default_factory=dict, compare=False)

    @property
    def indices(self) -> np.ndarray:
        """0-based positions of the selected units."""
        return np.flatnonzero(self.indicator)

    @property
    def selected_ids(self) -> np.ndarray:
        idx = self.indices
        return idx + 1 if self.ids is None else self.ids[idx]

    @property
    def n(self) -> int:
        return int(self.indicator.sum())


@dataclass(frozen=True)
class WaveOptions:
    rank_tol: float = 1e-12
    round_eps: float = 1e-9
    max_steps: int | None = None  # default 10 N
    solver: str = "gram"  # "gram" (eigh of A^T A) or "svd"


@functools.lru_cache(maxsize=None)
def _evr_workspace(n: int) -> tuple[int, int]:
    lwork, liwork, _ = dsyevr_lwork(n, lower=1)
    return int(lwork), int(liwork)


def _smallest_right_vectors(A: np.ndarray, solver: str, count: int = 2):
    """Singular values and right singular vectors, smallest first."""
    J = A.shape[1]
    count = min(count, J)
    if solver == "svd":
        try:
            _, s, Vt = scipy.linalg.svd(A, check_finite=False, lapack_driver="gesdd")
        except np.linalg.LinAlgError:
            _, s, Vt = scipy.linalg.svd(A, check_finite=False, lapack_driver="gesvd")
        return s[::-1][:count], Vt[::-1][:count].T, s[0]
    if solver == "gram":
        G = A.T @ A
        # dsyevr directly: the scipy.linalg.eigh wrapper costs as much as the
        # solve itself for the small matrices of late steps. The optimal
        # workspace matters: the minimal one switches to unblocked reduction,
        # whose rounding picks different vectors in degenerate eigenspaces
        # and loses the exactly systematic samples on tore grids.
        lwork, liwork = _evr_workspace(G.shape[0])
        lam, V, _, _, info = dsyevr(G, compute_v=1, range="I", il=1, iu=count, lower=1,
                                    lwork=lwork, liwork=liwork)
        if info != 0:
            # MRRR can fail on tight eigenvalue clusters
            return _smallest_right_vectors(A, "svd", count)
        lam, V = lam[:count], V[:, :count]
        smax = math.sqrt(np.max(np.abs(G).sum(axis=1)))  # upper bound on sigma_max
        return np.sqrt(np.maximum(lam, 0.0)), V, smax
    raise ValueError(f"unknown solver {solver!r}")


def direction_vector(A, rank_tol: float = 1e-12, solver: str = "svd") -> np.ndarray:
    """Unit-norm right singular vector of A's smallest singular value.

    When A is numerically rank deficient (sigma_min <= rank_tol * J * sigma_max)
    this vector spans part of the right null space.
    """
    A = A.toarray() if hasattr(A, "toarray") else np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    if A.shape[0] == 0:
        raise ValueError("empty matrix")
    _, V, _ = _smallest_right_vectors(A, solver, count=1)
    v = V[:, 0]
    return v / np.linalg.norm(v)


def step_bounds(pi_sub, v) -> tuple[float, float]:
    """Largest l1, l2 > 0 keeping pi + l1 v and pi - l2 v inside [0, 1]."""
    pi_sub = np.asarray(pi_sub, dtype=float)
    v = np.asarray(v, dtype=float)
    pos, neg = v > 0, v < 0
    if not (pos.any() or neg.any()):
        raise ValueError("direction is identically zero")
    up = np.concatenate([(1.0 - pi_sub[pos]) / v[pos], pi_sub[neg] / -v[neg]])
    down = np.concatenate([pi_sub[pos] / v[pos], (1.0 - pi_sub[neg]) / -v[neg]])
    return float(up.min()), float(down.min())


def update_choice(pi_sub, v, lam1: float, lam2: float, rng) -> np.ndarray:
    """Move to pi + lam1 v with probability lam2/(lam1+lam2), else pi - lam2 v."""
    rng = as_generator(rng)
    pi_sub = np.asarray(pi_sub, dtype=float)
    if rng.random() < lam2 / (lam1 + lam2):
        return pi_sub + lam1 * np.asarray(v)
    return pi_sub - lam2 * np.asarray(v)


def _pin_limit(new: np.ndarray, old: np.ndarray, v: np.ndarray) -> None:
    """Set the component(s) that determined the step length exactly on their bound."""
    moved = new - old
    with np.errstate(divide="ignore", invalid="ignore"):
        to1 = np.where(moved > 0, (1.0 - old) / moved, np.inf)
        to0 = np.where(moved < 0, old / -moved, np.inf)
    r1, r0 = to1.min(), to0.min()
    if r1 <= r0:
        new[to1 <= r1 * (1 + 1e-12)] = 1.0
    if r0 <= r1:
        new[to0 <= r0 * (1 + 1e-12)] = 0.0


def _direction(A: np.ndarray, opts: WaveOptions, rng: np.random.Generator):
    """Centred weakest direction and whether A was numerically rank deficient."""
    J = A.shape[0]
    s, V, smax = _smallest_right_vectors(A, opts.solver, count=2)
    # eigenvalues of A^T A only resolve singular values down to ~sqrt(eps) * smax
    floor = 1e-7 if opts.solver == "gram" else 0.0
    deficient = bool(s[0] <= max(opts.rank_tol * J, floor) * smax)
    for j in range(V.shape[1]):
        v = V[:, j] - V[:, j].mean()
        if np.linalg.norm(v) > 1e-10:
            return v, deficient
    # every candidate is (numerically) constant
    v = rng.standard_normal(J)
    v -= v.mean()
    return 1e-6 * v / np.linalg.norm(v), deficient


def wave_sample(pop: Population, metric: MetricSpec | None = None, pi=None, seed=None,
                opts: WaveOptions | None = None, *, table: NeighborTable | None = None,
                trace: list | None = None, on_step=None) -> Sample:
    """Select a well-spread sample with the given inclusion probabilities.

    Parameters
    ----------
    pop : population (``pop.pi`` is used when ``pi`` is None)
    metric : distance used to build the strata (Euclidean by default)
    seed : int, Generator or None
    opts : numerical options
    table : precomputed neighbour table for (metric, pop); ignored for a
        shifted tore without an explicit shift, which draws a fresh shift
    trace : if a list is given, the pi vector after each step is appended
    on_step : optional callable ``on_step(undecided, W, A, pi_sub)`` invoked
        with the stratification matrices of every step (W is None once the
        undecided mass drops below 1)
    """
    opts = opts or WaveOptions()
    metric = metric or MetricSpec()
    rng = as_generator(seed)
    pi = pop.pi if pi is None else np.asarray(pi, dtype=float)
    if pi is None:
        raise ValueError("inclusion probabilities required")
    pi = np.array(pi, dtype=float)
    N = pop.N
    if pi.shape != (N,) or np.any(pi < 0) or np.any(pi > 1):
        raise ValueError("pi must be a length-N vector in [0, 1]")
    pi_used = pi.copy()
    eps = opts.round_eps
    pi[pi <= eps] = 0.0
    pi[pi >= 1 - eps] = 1.0

    if metric.kind == "shifted_tore2" and metric.shift is None:
        metric = resolve_shift(metric, rng)
        table = None
    max_steps = opts.max_steps if opts.max_steps is not None else 10 * N
    steps = null_steps = 0
    und = np.flatnonzero((pi > 0) & (pi < 1))
    if len(und) > 1 and table is None:
        table = NeighborTable(metric, pop)

    while len(und) > 1:
        if steps >= max_steps:
            raise SamplingError(f"no convergence after {steps} steps ({len(und)} undecided units)")
        sub = pi[und]
        masked = np.zeros(N)
        masked[und] = sub
        if math.fsum(sub) < 1.0 - 1e-9:
            # only with a non-integer total: every stratum is the whole remainder
            W, A = None, np.ones((len(und), len(und)))
        else:
            W = stratum_dense(table, masked, und)
            A = W / sub[None, :]
        if on_step is not None:
            on_step(und, W, A, sub)
        v, deficient = _direction(A, opts, rng)
        null_steps += deficient
        lam1, lam2 = step_bounds(sub, v)
        new = update_choice(sub, v, lam1, lam2, rng)
        _pin_limit(new, sub, v)
        new[new <= eps] = 0.0
        new[new >= 1 - eps] = 1.0
        still = (new > 0) & (new < 1)
        drift = math.fsum(sub) - math.fsum(new)
        if abs(drift) > 1e-12 and still.any():
            # put the rounding drift on the unit farthest from both bounds
            cand = np.flatnonzero(still)
            k = cand[np.argmax(np.minimum(new[cand], 1 - new[cand]))]
            new[k] = min(max(new[k] + drift, 0.0), 1.0)
        pi[und] = new
        if trace is not None:
            trace.append(pi.copy())
        nxt = np.flatnonzero((pi > 0) & (pi < 1))
        if len(nxt) >= len(und):
            raise SamplingError(f"step {steps} resolved no unit")
        und = nxt
        steps += 1

    if len(und) == 1:
        k = und[0]
        # only reachable with a non-integer total
        pi[k] = 1.0 if rng.random() < pi[k] else 0.0
        steps += 1

    a = (pi > 0.5).astype(np.int8)
    return Sample(a, pi_used, pop.ids, {"steps": steps, "null_steps": null_steps,
                                          "metric": metric.to_dict()})
