"""Monte Carlo harness: repeated sample selection on a fixed population,
spreading measures, HT estimates, simulated variance and interval coverage."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .baselines import DESIGNS, draw
from .estimators import Z95, estimate
from .geom import MetricSpec, NeighborTable, distance_matrix
from .measures import MeasureError, moran_index, voronoi_balance
from .population import Population, PopulationSpec, assign_equal_pi, assign_proportional_pi
from .strata import build_moran_weights
from .wave import WaveOptions

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ESTIMATORS = ("haj", "sb", "lm2", "lm3", "lm4")


class SimError(RuntimeError):
    pass


def derive_seed(master: int, replicate: int, design: int, n_index: int) -> int:
    """128-bit seed for one replicate, independent of scheduling order."""
    ss = np.random.SeedSequence(entropy=master, spawn_key=(design, n_index, replicate))
    words = ss.generate_state(4, dtype=np.uint32)
    return int(sum(int(w) << (32 * i) for i, w in enumerate(words)))


@dataclass
class SimConfig:
    population: PopulationSpec
    designs: list[str]
    sample_sizes: list[int]
    pi_mode: str = "equal"
    reps: int = 1000
    y_column: str | None = None
    seed: int = 0
    metric: MetricSpec = field(default_factory=MetricSpec)
    measure_metric: MetricSpec | None = None
    estimators: tuple[str, ...] = ESTIMATORS
    wave_options: WaveOptions = field(default_factory=WaveOptions)
    full_reps: int = 10_000

    def __post_init__(self):
        if self.reps < 1:
            raise SimError("reps must be >= 1")
        for d in self.designs:
            if d not in DESIGNS:
                raise SimError(f"unknown design {d!r}; valid designs: {', '.join(DESIGNS)}")
        if not (self.pi_mode == "equal" or self.pi_mode.startswith(("proportional:", "prop:"))):
            raise SimError(f"invalid pi_mode {self.pi_mode!r}; use 'equal' or 'proportional:<column>'")
        for e in self.estimators:
            if e not in ESTIMATORS:
                raise SimError(f"unknown estimator {e!r}")

    @classmethod
    def from_dict(cls, d: dict) -> SimConfig:
        d = dict(d)
        d["population"] = PopulationSpec.from_dict(d["population"])
        d["metric"] = MetricSpec.from_dict(d.get("metric"))
        if d.get("measure_metric") is not None:
            d["measure_metric"] = MetricSpec.from_dict(d["measure_metric"])
        d["wave_options"] = WaveOptions(**d.get("wave_options", {}))
        if "estimators" in d:
            d["estimators"] = tuple(d["estimators"])
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> SimConfig:
        path = Path(path)
        cfg = cls.from_dict(json.loads(path.read_text()))
        cfg._base_dir = path.parent
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["population"] = asdict(self.population)
        d["metric"] = self.metric.to_dict()
        d["measure_metric"] = None if self.measure_metric is None else self.measure_metric.to_dict()
        d["wave_options"] = asdict(self.wave_options)
        d["estimators"] = list(self.estimators)
        return d


@dataclass
class CellResult:
    """Aggregates for one (design, n) combination."""

    design: str
    n: int
    reps: int
    means: dict[str, float]
    ses: dict[str, float]
    v_sim: float | None = None
    v_sim_se: float | None = None
    ratio: dict[str, float] = field(default_factory=dict)
    coverage95: float | None = None
    coverage_estimator: str | None = None
    size_min: int = 0
    size_max: int = 0
    inclusion_counts: np.ndarray | None = None
    raw: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "design": self.design,
            "n": self.n,
            "reps": self.reps,
            "means": self.means,
            "ses": self.ses,
            "v_sim": self.v_sim,
            "v_sim_se": self.v_sim_se,
            "ratio": self.ratio,
            "coverage95": self.coverage95,
            "coverage_estimator": self.coverage_estimator,
            "size_min": self.size_min,
            "size_max": self.size_max,
        }


@dataclass
class SimReport:
    config: dict
    N: int
    Y: float | None
    cells: list[CellResult]

    def cell(self, design: str, n: int) -> CellResult:
        for c in self.cells:
            if c.design == design and c.n == n:
                return c
        raise KeyError((design, n))

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config,
            "N": self.N,
            "Y": self.Y,
            "cells": [c.to_dict() for c in self.cells],
        }

    def csv_rows(self) -> list[tuple]:
        rows = []
        for c in self.cells:
            for k, v in c.means.items():
                rows.append((c.design, c.n, f"mean_{k}", v, c.ses.get(k)))
            if c.v_sim is not None:
                rows.append((c.design, c.n, "v_sim", c.v_sim, c.v_sim_se))
            for k, v in c.ratio.items():
                rows.append((c.design, c.n, f"ratio_{k}", v, None))
            if c.coverage95 is not None:
                se = np.sqrt(c.coverage95 * (1 - c.coverage95) / c.reps)
                rows.append((c.design, c.n, "coverage95", c.coverage95, float(se)))
        return rows


def _with_pi(pop: Population, mode: str, n: int) -> Population:
    if mode == "equal":
        return assign_equal_pi(pop, n)
    return assign_proportional_pi(pop, n, mode.split(":", 1)[1])


class _Cell:
    """Everything a worker needs to run replicates of one (design, n)."""

    def __init__(self, cfg: SimConfig, pop: Population, design: str, d_index: int, n: int,
                 n_index: int, y: np.ndarray | None):
        self.cfg, self.design, self.d_index, self.n, self.n_index = cfg, design, d_index, n, n_index
        self.pop = _with_pi(pop, cfg.pi_mode, n)
        self.y = y
        metric = cfg.metric
        self.table = None
        self.dist = None
        if design == "wave" and not (metric.kind == "shifted_tore2" and metric.shift is None):
            self.table = NeighborTable(metric, self.pop)
        fixed = not (metric.kind == "shifted_tore2" and metric.shift is None)
        if design == "lpm1" and fixed and self.pop.N <= 5000:
            self.dist = distance_matrix(metric, self.pop)
        mm = cfg.measure_metric or metric
        if mm.kind == "shifted_tore2" and mm.shift is None:
            mm = MetricSpec("tore2", grid_dims=mm.grid_dims)
        self.mmetric = mm
        self.mtable = NeighborTable(mm, self.pop)
        pi = self.pop.pi
        self.moran = {}
        if np.all(pi > 0):
            for scheme in ("pik", "pik1"):
                self.moran[scheme] = build_moran_weights(self.pop, mm, pi, scheme, table=self.mtable)

    def run(self, r: int) -> dict:
        cfg = self.cfg
        seed = derive_seed(cfg.seed, r, self.d_index, self.n_index)
        try:
            s = draw(self.design, self.pop, self.n, cfg.metric, seed=seed, opts=cfg.wave_options,
                     table=self.table, dist=self.dist)
        except Exception as exc:
            raise SimError(f"{self.design} n={self.n} replicate {r}: {exc}") from exc
        out = {"a": s.indicator}
        try:
            out["B"] = voronoi_balance(self.pop, self.mmetric, s, table=self.mtable).B
        except MeasureError:
            out["B"] = np.nan
        for key, scheme in (("IB", "pik"), ("IB1", "pik1")):
            try:
                out[key] = moran_index(s, self.moran[scheme]).IB if scheme in self.moran else np.nan
            except MeasureError:
                out[key] = np.nan
        if self.y is not None:
            rep = estimate(s, self.y, self.pop.pi, self.mmetric, self.pop, cfg.estimators)
            out["ht"] = rep.ht
            for e in cfg.estimators:
                out[f"v_{e}"] = rep.variance_estimates.get(e, np.nan)
        return out


_WORKER_CELL: _Cell | None = None


def _init_worker(cell: _Cell):
    global _WORKER_CELL
    _WORKER_CELL = cell


def _run_chunk(idx: list[int]) -> list[dict]:
    return [_WORKER_CELL.run(r) for r in idx]


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    x = x[np.isfinite(x)]
    if len(x) == 0:
        return float("nan"), float("nan")
    se = float(np.std(x, ddof=1) / np.sqrt(len(x))) if len(x) > 1 else float("nan")
    return float(np.mean(x)), se


def run_sim(config: SimConfig, *, jobs: int = 1, reps: int | None = None, keep_raw: bool = False,
            population: Population | None = None) -> SimReport:
    """Run every (design, n) cell of the configuration.

    Replicate r of cell (design d, size index i) uses ``derive_seed(seed, r, d, i)``,
    so the report does not depend on ``jobs``.
    """
    reps = config.reps if reps is None else reps
    if reps < 1:
        raise SimError("reps must be >= 1")
    pop = population or config.population.build(getattr(config, "_base_dir", None))
    y = None
    Y = None
    if config.y_column is not None:
        y = np.asarray(pop.column(config.y_column), dtype=float)
        Y = float(np.sum(y))
    for n in config.sample_sizes:
        if not 0 < n <= pop.N:
            raise SimError(f"sample size {n} out of range for N={pop.N}")

    cells = []
    for i, n in enumerate(config.sample_sizes):
        for d in config.designs:
            cell = _Cell(config, pop, d, DESIGNS.index(d), n, i, y)
            logger.info("running %s n=%d (%d reps)", d, n, reps)
            if jobs > 1 and reps > 1:
                chunks = [list(range(k, min(k + 64, reps))) for k in range(0, reps, 64)]
                with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(cell,)) as ex:
                    results = [r for chunk in ex.map(_run_chunk, chunks) for r in chunk]
            else:
                results = [cell.run(r) for r in range(reps)]
            cells.append(_aggregate(config, cell, results, Y, keep_raw))
    return SimReport(config.to_dict() | {"reps": reps}, pop.N, Y, cells)


def _aggregate(cfg: SimConfig, cell: _Cell, results: list[dict], Y, keep_raw: bool) -> CellResult:
    m = len(results)
    A = np.vstack([r["a"] for r in results])
    sizes = A.sum(axis=1)
    keys = ["B", "IB", "IB1"]
    if Y is not None:
        keys += ["ht"] + [f"v_{e}" for e in cfg.estimators]
    raw = {k: np.array([r[k] for r in results], dtype=float) for k in keys}
    means, ses = {}, {}
    for k in keys:
        means[k], ses[k] = _mean_se(raw[k])
    res = CellResult(cell.design, cell.n, m, means, ses, size_min=int(sizes.min()),
                     size_max=int(sizes.max()), inclusion_counts=A.sum(axis=0))
    if Y is not None:
        sq = (raw["ht"] - Y) ** 2
        res.v_sim = float(np.mean(sq))
        res.v_sim_se = float(np.std(sq, ddof=1) / np.sqrt(m)) if m > 1 else float("nan")
        for e in cfg.estimators:
            res.ratio[e] = means[f"v_{e}"] / res.v_sim if res.v_sim > 0 else float("nan")
        est = "haj" if cell.design == "srswor" else "sb"
        if est in cfg.estimators:
            v = raw[f"v_{est}"]
            ok = np.isfinite(v)
            half = Z95 * np.sqrt(np.maximum(v[ok], 0.0))
            lo, hi = raw["ht"][ok] - half, raw["ht"][ok] + half
            res.coverage95 = float(np.mean((lo <= Y) & (Y <= hi))) if ok.any() else float("nan")
            res.coverage_estimator = est
    if keep_raw:
        res.raw = raw | {"a": A}
    return res


def write_report(report: SimReport, json_path, csv_path=None) -> None:
    """Write the JSON report (and optional flat CSV) atomically."""
    from .io import atomic_write

    atomic_write(json_path, json.dumps(report.to_dict(), indent=2, default=_json_default))
    if csv_path is not None:
        lines = ["design,n,metric,value,se"]
        for d, n, name, v, se in report.csv_rows():
            lines.append(f"{d},{n},{name},{v!r},{'' if se is None else repr(se)}")
        atomic_write(csv_path, "\n".join(lines) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o))
