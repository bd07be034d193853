"""Command-line interface: ``wavespread {gen,sample,measure,estimate,simulate}``.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure,
4 input/output error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import DESIGNS, draw
from .estimators import EstimationError, estimate
from .geom import MetricError, MetricSpec, resolve_shift
from .io import atomic_write, read_sample, sample_csv
from .measures import MeasureError, moran_index, voronoi_balance
from .population import (Population, PopulationError, PopulationSpec, assign_equal_pi,
                         assign_proportional_pi, load_population, save_population)
from .sim import SimConfig, SimError, run_sim, write_report
from .strata import StrataInfeasible, build_moran_weights, build_strata
from .wave import SamplingError, WaveOptions

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("wavespread")


class ConfigError(ValueError):
    pass


def _grid(text: str) -> tuple[int, int]:
    try:
        a, b = text.lower().split("x")
        dims = int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N1xN2, got {text!r}") from None
    if min(dims) < 1:
        raise argparse.ArgumentTypeError("grid dimensions must be positive")
    return dims


def _metric(args, pop: Population | None = None) -> MetricSpec:
    kind = args.metric
    dims = args.grid
    if kind in ("tore", "shifted-tore") and dims is None:
        if pop is not None and "grid_dims" in pop.meta:
            dims = pop.meta["grid_dims"]
        elif pop is not None and pop.p == 2:
            # integer grid read from file: extents from the coordinates
            dims = tuple(int(v) + 1 for v in pop.coords.max(axis=0))
        else:
            raise ConfigError(f"--metric {kind} requires --grid N1xN2")
    return MetricSpec(kind, grid_dims=dims)


def _with_pi(pop: Population, mode: str | None, n: int | None) -> Population:
    """Resolve inclusion probabilities from --pi-mode / --n."""
    if mode is None:
        if pop.pi is not None and n is None:
            return pop
        mode = "equal"
    if mode.startswith("column:"):
        col = mode.split(":", 1)[1]
        if col == "pi" and pop.pi is not None:
            return pop
        return pop.with_pi(pop.column(col))
    if n is None:
        raise ConfigError(f"--pi-mode {mode} requires --n")
    if mode == "equal":
        return assign_equal_pi(pop, n)
    if mode.startswith(("prop:", "proportional:")):
        return assign_proportional_pi(pop, n, mode.split(":", 1)[1])
    raise ConfigError(f"invalid --pi-mode {mode!r}; use equal, prop:<col> or column:<col>")


def _wave_options(args) -> WaveOptions:
    return WaveOptions(rank_tol=args.rank_tol, round_eps=args.round_eps, max_steps=args.max_steps)


def _emit(text: str, output: str | None) -> None:
    if output is None:
        sys.stdout.write(text)
    else:
        atomic_write(output, text)


def cmd_gen(args) -> int:
    spec = PopulationSpec(
        kind=args.kind,
        target_n_points=args.n_points,
        fixed_count=args.fixed_count,
        grid_dims=args.grid,
        cluster_count=args.clusters,
        cluster_radius=args.radius,
        points_per_cluster=args.per_cluster,
        seed=args.seed,
        fields={name: {"seed": args.seed + 1 + i} for i, name in enumerate(args.field or [])},
    )
    if args.kind == "file":
        raise ConfigError("gen cannot build a population of kind 'file'")
    pop = spec.build()
    if args.output is None:
        raise ConfigError("gen requires --output")
    path = Path(args.output)
    tmp = path.with_name(f".{path.name}.tmp")
    save_population(pop, tmp)
    tmp.replace(path)
    return EXIT_OK


def cmd_sample(args) -> int:
    pop = _with_pi(load_population(args.input), args.pi_mode, args.n)
    metric = _metric(args, pop)
    if args.seed is None:
        # record a fresh seed so the run can be repeated
        args.seed = int(np.random.SeedSequence().generate_state(1, dtype=np.uint64)[0] >> 1)
    rng = np.random.default_rng(args.seed)
    if args.dump_strata:
        m = resolve_shift(metric, rng) if metric.kind == "shifted_tore2" else metric
        metric = m
        active = np.flatnonzero(pop.pi > 0)
        strata = build_strata(pop, m, active=active)
        with open(args.dump_strata, "w", encoding="utf-8") as fh:
            strata.dump(fh, "W")
    t0 = time.perf_counter()
    s = draw(args.design, pop, args.n, metric, seed=rng, opts=_wave_options(args))
    runtime = time.perf_counter() - t0
    _emit(sample_csv(pop, s.indicator), args.output)
    if args.output is not None:
        meta = {
            "seed": args.seed,
            "design": args.design,
            "metric": s.info.get("metric", metric.to_dict()),
            "n": s.n,
            "N": pop.N,
            "runtime_s": runtime,
            "version": __version__,
        }
        if "steps" in s.info:
            meta["steps"] = s.info["steps"]
        atomic_write(f"{args.output}.json", json.dumps(meta, indent=2) + "\n")
    return EXIT_OK


def _load_pair(args):
    pop = load_population(args.input)
    a = read_sample(args.sample, pop)
    n = args.n if args.n is not None else int(a.sum())
    mode = args.pi_mode
    if mode is None and pop.pi is None:
        mode = "equal"
    pop = _with_pi(pop, mode, n if mode is not None else None)
    return pop, a


def cmd_measure(args) -> int:
    pop, a = _load_pair(args)
    metric = _metric(args, pop)
    if metric.kind == "shifted_tore2":
        metric = MetricSpec("tore2", grid_dims=metric.grid_dims)
    bmetric = MetricSpec() if args.euclidean_balance else metric
    out = {"n": int(a.sum()), "metric": metric.to_dict()}
    out["B"] = voronoi_balance(pop, bmetric, a).B
    for key, scheme in (("I_B", "pik"), ("I_B1", "pik1")):
        out[key] = moran_index(a, build_moran_weights(pop, metric, scheme=scheme)).IB
    _emit(json.dumps(out, indent=2) + "\n", args.output)
    return EXIT_OK


def cmd_estimate(args) -> int:
    pop, a = _load_pair(args)
    metric = _metric(args, pop)
    if metric.kind == "shifted_tore2":
        metric = MetricSpec("tore2", grid_dims=metric.grid_dims)
    y = pop.column(args.y)
    rep = estimate(a, y, pop.pi, metric, pop)
    _emit(json.dumps(rep.to_dict(), indent=2) + "\n", args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = SimConfig.from_json(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    reps = cfg.full_reps if args.full else args.reps
    report = run_sim(cfg, jobs=args.jobs, reps=reps)
    out = args.output or "report.json"
    csv_path = args.csv or str(Path(out).with_suffix(".csv"))
    write_report(report, out, csv_path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wavespread", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def metric_flags(sp):
        sp.add_argument("--metric", default="euclidean",
                        choices=["euclidean", "tore", "shifted-tore", "mahalanobis"])
        sp.add_argument("--grid", type=_grid, default=None, metavar="N1xN2")

    def pi_flags(sp):
        sp.add_argument("--n", type=int, default=None, help="sample size")
        sp.add_argument("--pi-mode", default=None,
                        help="equal, prop:<col> or column:<col> (default: pi column, else equal)")

    g = sub.add_parser("gen", help="generate an artificial population CSV")
    g.add_argument("--kind", choices=["csr", "neyman-scott", "grid"], default="csr")
    g.add_argument("--n-points", type=float, default=144, help="CSR intensity")
    g.add_argument("--fixed-count", action="store_true", help="CSR with exactly n-points units")
    g.add_argument("--grid", type=_grid, default=None, metavar="N1xN2")
    g.add_argument("--clusters", type=int, default=12)
    g.add_argument("--radius", type=float, default=0.055)
    g.add_argument("--per-cluster", type=int, default=12)
    g.add_argument("--field", action="append", help="add a synthetic smooth variable")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--output", required=False)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("sample", help="select one sample")
    s.add_argument("--input", required=True, help="population CSV")
    s.add_argument("--output", help="sample CSV (stdout if omitted)")
    s.add_argument("--design", default="wave", help=f"one of {', '.join(DESIGNS)}")
    pi_flags(s)
    metric_flags(s)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--rank-tol", type=float, default=1e-12)
    s.add_argument("--round-eps", type=float, default=1e-9)
    s.add_argument("--max-steps", type=int, default=None)
    s.add_argument("--dump-strata", metavar="PATH", help="write the initial W as 'row col value'")
    s.set_defaults(func=cmd_sample)

    m = sub.add_parser("measure", help="spreading measures of a sample")
    m.add_argument("--input", required=True)
    m.add_argument("--sample", required=True)
    m.add_argument("--output")
    m.add_argument("--euclidean-balance", action="store_true",
                   help="Voronoi balance with the Euclidean metric")
    pi_flags(m)
    metric_flags(m)
    m.set_defaults(func=cmd_measure)

    e = sub.add_parser("estimate", help="HT total and variance estimates")
    e.add_argument("--input", required=True)
    e.add_argument("--sample", required=True)
    e.add_argument("--y", required=True, help="target column")
    e.add_argument("--output")
    pi_flags(e)
    metric_flags(e)
    e.set_defaults(func=cmd_estimate)

    r = sub.add_parser("simulate", help="Monte Carlo study from a JSON config")
    r.add_argument("--config", "--input", dest="config", required=True)
    r.add_argument("--output", help="report JSON (default report.json)")
    r.add_argument("--csv", help="flat CSV report (default: JSON path with .csv)")
    r.add_argument("--reps", type=int, default=None)
    r.add_argument("--full", action="store_true", help="use the config's full replication count")
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--seed", type=int, default=None)
    r.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "design", None) is not None and args.design not in DESIGNS:
        parser.error(f"invalid design {args.design!r}; valid designs: {', '.join(DESIGNS)}")
    try:
        return args.func(args)
    except (SamplingError, StrataInfeasible, MeasureError, EstimationError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except SimError as exc:
        if isinstance(exc.__cause__, (SamplingError, StrataInfeasible)):
            log.error("numerical failure: %s", exc)
            return EXIT_NUMERIC
        log.error("%s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except (ConfigError, PopulationError, MetricError, ValueError, KeyError, TypeError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
