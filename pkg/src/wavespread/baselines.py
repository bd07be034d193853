"""Comparison designs: simple random sampling without replacement and the
local pivotal method (LPM1)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geom import TIE_RTOL, MetricSpec, prepare, resolve_shift
from .population import Population, as_generator
from .wave import Sample, SamplingError

DESIGNS = ("wave", "srswor", "lpm1")


@dataclass(frozen=True)
class DesignSpec:
    kind: str
    metric: MetricSpec | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in DESIGNS:
            raise ValueError(f"unknown design {self.kind!r}; valid designs: {', '.join(DESIGNS)}")


def srswor(pop: Population, n: int, seed=None) -> Sample:
    """Simple random sampling of n units without replacement."""
    N = pop.N
    if not 0 < n <= N:
        raise ValueError(f"sample size must satisfy 0 < n <= N (n={n}, N={N})")
    rng = as_generator(seed)
    a = np.zeros(N, dtype=np.int8)
    a[rng.permutation(N)[:n]] = 1
    return Sample(a, np.full(N, n / N), pop.ids)


def _pivot(pa: float, pb: float, rng) -> tuple[float, float]:
    s = pa + pb
    if s < 1.0:
        if rng.random() < pb / s:
            return 0.0, s
        return s, 0.0
    if s > 1.0:
        if rng.random() < (1.0 - pb) / (2.0 - s):
            return 1.0, s - 1.0
        return s - 1.0, 1.0
    if rng.random() < pa:
        return 1.0, 0.0
    return 0.0, 1.0


def lpm1(pop: Population, metric: MetricSpec | None = None, pi=None, seed=None, *,
         round_eps: float = 1e-9, dist: np.ndarray | None = None,
         trace: list | None = None) -> Sample:
    """Local pivotal method, variant 1.

    A random undecided unit i and its nearest undecided neighbour j compete
    only when i is also among j's nearest undecided neighbours. The pivotal
    update then resolves at least one of them while preserving pi_i + pi_j.

    ``dist`` may hold a precomputed dense distance matrix for (metric, pop).
    If ``trace`` is a list, the pi vector after each pivot is appended.
    """
    metric = metric or MetricSpec()
    rng = as_generator(seed)
    pi = pop.pi if pi is None else np.asarray(pi, dtype=float)
    if pi is None:
        raise ValueError("inclusion probabilities required")
    p = np.array(pi, dtype=float)
    if p.shape != (pop.N,) or np.any(p < 0) or np.any(p > 1):
        raise ValueError("pi must be a length-N vector in [0, 1]")
    pi_used = p.copy()
    p[p <= round_eps] = 0.0
    p[p >= 1 - round_eps] = 1.0
    if dist is None:
        metric = resolve_shift(metric, rng)
    prep = prepare(metric, pop) if dist is None else None

    def row(k, cand):
        return dist[k, cand] if dist is not None else prep.from_unit(k, cand)

    def nearest(k, cand):
        d = row(k, cand)
        dmin = d.min()
        return cand[d <= dmin + TIE_RTOL * abs(dmin)]

    und = np.flatnonzero((p > 0) & (p < 1))
    attempts = 0
    limit = 1000 * pop.N + 1000
    while len(und) > 1:
        attempts += 1
        if attempts > limit:
            raise SamplingError("lpm1 failed to find mutual nearest neighbours")
        i = und[rng.integers(len(und))]
        others = und[und != i]
        near_i = nearest(i, others)
        j = near_i[rng.integers(len(near_i))] if len(near_i) > 1 else near_i[0]
        if i not in nearest(j, und[und != j]):
            continue
        pi_i, pi_j = _pivot(p[i], p[j], rng)
        for k, v in ((i, pi_i), (j, pi_j)):
            p[k] = 0.0 if v <= round_eps else 1.0 if v >= 1 - round_eps else v
        if trace is not None:
            trace.append(p.copy())
        und = np.flatnonzero((p > 0) & (p < 1))
    if len(und) == 1:
        k = und[0]
        p[k] = 1.0 if rng.random() < p[k] else 0.0
    return Sample((p > 0.5).astype(np.int8), pi_used, pop.ids)


def draw(design: str, pop: Population, n: int | None = None, metric: MetricSpec | None = None,
         pi=None, seed=None, **kw) -> Sample:
    """Dispatch to one of the available designs."""
    from .wave import wave_sample

    if design not in DESIGNS:
        raise ValueError(f"unknown design {design!r}; valid designs: {', '.join(DESIGNS)}")
    pi = pop.pi if pi is None else pi
    if design == "srswor":
        if n is None:
            n = int(round(float(np.sum(pi))))
        if pi is not None and not np.allclose(pi, n / pop.N, rtol=0, atol=1e-9):
            raise ValueError("srswor requires equal inclusion probabilities n/N")
        return srswor(pop, n, seed)
    if design == "lpm1":
        return lpm1(pop, metric, pi, seed, dist=kw.get("dist"))
    return wave_sample(pop, metric, pi, seed, kw.get("opts"), table=kw.get("table"))
