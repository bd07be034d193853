"""Horvitz-Thompson estimation of a total and variance estimators for it."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geom import MetricSpec, prepare
from .population import Population

Z95 = 1.96


class EstimationError(ValueError):
    pass


def _sampled(sample) -> np.ndarray:
    a = getattr(sample, "indicator", sample)
    return np.flatnonzero(np.asarray(a) > 0.5)


def _expanded(sample, y, pi):
    s = _sampled(sample)
    y = np.asarray(y, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if np.any(pi[s] <= 0):
        raise EstimationError("selected unit with zero inclusion probability")
    return s, y[s] / pi[s]


def ht_total(sample, y, pi) -> float:
    """Horvitz-Thompson estimator: sum over the sample of y_k / pi_k."""
    _, z = _expanded(sample, y, pi)
    return float(np.sum(z))


def var_haj(sample, y, pi) -> float:
    """Hajek-Rosen variance estimator."""
    s, z = _expanded(sample, y, pi)
    n = len(s)
    if n < 2:
        raise EstimationError("var_haj needs n >= 2")
    c = 1.0 - np.asarray(pi, dtype=float)[s]
    if c.sum() <= 0:
        raise EstimationError("var_haj undefined: every sampled unit has pi = 1")
    centre = np.sum(c * z) / c.sum()
    return float(n / (n - 1) * np.sum(c * (z - centre) ** 2))


def _sample_distances(pop: Population, metric: MetricSpec | None, s: np.ndarray) -> np.ndarray:
    prep = prepare(metric or MetricSpec(), pop)
    return np.vstack([prep.from_unit(k, s) for k in s])


def _neighbours(D: np.ndarray, j: int, ids: np.ndarray | None = None) -> np.ndarray:
    """Indices (into the sample) of each unit's j nearest other sampled units.
    Ties go to the lowest unit id."""
    D = D.copy()
    np.fill_diagonal(D, np.inf)
    if ids is None:
        return np.argsort(D, axis=1, kind="stable")[:, :j]
    return np.vstack([np.lexsort((ids, row))[:j] for row in D])


def var_sb(sample, y, pi, metric: MetricSpec | None = None, pop: Population | None = None) -> float:
    """Nearest-neighbour variance estimator for spatially balanced designs:
    half the sum of squared differences of y/pi between each sampled unit and
    its nearest sampled neighbour."""
    s, z = _expanded(sample, y, pi)
    if len(s) < 2:
        raise EstimationError("var_sb needs n >= 2")
    if pop is None:
        raise EstimationError("var_sb needs the population coordinates")
    nn = _neighbours(_sample_distances(pop, metric, s), 1, pop.ids[s])[:, 0]
    return float(0.5 * np.sum((z - z[nn]) ** 2))


@dataclass
class LocalMeanWeights:
    """Neighbourhood weights of the local mean estimator (sample positions)."""

    W: np.ndarray
    converged: bool
    sweeps: int


def local_mean_weights(D: np.ndarray, pi_s: np.ndarray, j: int, *, max_sweeps: int = 100,
                       tol: float = 1e-8, ids: np.ndarray | None = None) -> LocalMeanWeights:
    """Weights over symmetric j-nearest-neighbour neighbourhoods.

    Start from weights proportional to 1/pi within each neighbourhood, then
    alternately rescale columns and rows towards unit sums. Falls back to the
    row-normalized start when the scaling does not converge.
    """
    n = len(pi_s)
    nn = _neighbours(D, j, ids)
    mask = np.eye(n, dtype=bool)
    rows = np.repeat(np.arange(n), j)
    mask[rows, nn.ravel()] = True
    mask[nn.ravel(), rows] = True
    W = np.where(mask, 1.0 / pi_s[None, :], 0.0)
    W0 = W / W.sum(axis=1, keepdims=True)
    W = W0.copy()
    for sweep in range(1, max_sweeps + 1):
        W /= W.sum(axis=0, keepdims=True)
        W /= W.sum(axis=1, keepdims=True)
        if np.max(np.abs(W.sum(axis=0) - 1.0)) <= tol:
            return LocalMeanWeights(W, True, sweep)
    return LocalMeanWeights(W0, False, max_sweeps)


def var_lm(sample, y, pi, metric: MetricSpec | None = None, pop: Population | None = None,
           j: int = 3, *, return_weights: bool = False):
    """Local mean variance estimator with neighbourhoods of j nearest units.

    For each sampled k with neighbourhood D_k and weights w_kl,
    sum_l w_kl (y_k/pi_k - sum_m w_km y_m/pi_m)^2, summed over k.
    """
    s, z = _expanded(sample, y, pi)
    n = len(s)
    if j < 1 or j >= n:
        raise EstimationError(f"var_lm needs 1 <= j < n (j={j}, n={n})")
    if pop is None:
        raise EstimationError("var_lm needs the population coordinates")
    D = _sample_distances(pop, metric, s)
    lw = local_mean_weights(D, np.asarray(pi, dtype=float)[s], j, ids=pop.ids[s])
    W = lw.W
    local = W @ z
    v = float(np.sum(W.sum(axis=1) * (z - local) ** 2))
    return (v, lw) if return_weights else v


def ci95(ht: float, v: float) -> tuple[float, float]:
    if v < 0:
        raise EstimationError("negative variance")
    h = Z95 * np.sqrt(v)
    return (ht - h, ht + h)


@dataclass
class EstimateReport:
    ht: float
    variance_estimates: dict[str, float]
    ci95: dict[str, tuple[float, float]] = field(default_factory=dict)
    flags: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "ht": self.ht,
            "variance_estimates": self.variance_estimates,
            "ci95": {k: list(v) for k, v in self.ci95.items()},
            "flags": self.flags,
        }


def estimate(sample, y, pi, metric: MetricSpec | None = None, pop: Population | None = None,
             which=("haj", "sb", "lm2", "lm3", "lm4")) -> EstimateReport:
    """HT total with every requested variance estimator and its 95% interval.

    Estimators whose preconditions fail (e.g. too small a sample) are left out
    and the reason is recorded in ``flags``.
    """
    ht = ht_total(sample, y, pi)
    out, flags = {}, {}
    for name in which:
        try:
            if name == "haj":
                out[name] = var_haj(sample, y, pi)
            elif name == "sb":
                out[name] = var_sb(sample, y, pi, metric, pop)
            elif name.startswith("lm"):
                v, lw = var_lm(sample, y, pi, metric, pop, int(name[2:]), return_weights=True)
                out[name] = v
                if not lw.converged:
                    flags[name] = "weight scaling did not converge; row-normalized weights used"
            else:
                raise EstimationError(f"unknown estimator {name!r}")
        except EstimationError as exc:
            flags[name] = str(exc)
    return EstimateReport(ht, out, {k: ci95(ht, v) for k, v in out.items()}, flags)
