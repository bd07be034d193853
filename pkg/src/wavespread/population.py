"""Finite geo-referenced populations and the artificial point patterns used in
the simulation studies (complete spatial randomness, Neyman-Scott clusters,
regular grids).

Units are addressed by their 0-based position everywhere in the library; the
``ids`` array only carries the user-facing labels.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

_COORD_RE = re.compile(r"^x(\d+)$")


class PopulationError(ValueError):
    """Raised for invalid population data or generator parameters."""


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Population:
    """A finite population of N geo-referenced units.

    Attributes
    ----------
    coords : (N, p) float array
    ids : (N,) int array of labels (1..N for generated populations)
    aux : (N, q) float array of auxiliary variables, or None
    aux_names : names of the auxiliary columns
    pi : (N,) inclusion probabilities, or None when not yet assigned
    """

    coords: np.ndarray
    ids: np.ndarray | None = None
    aux: np.ndarray | None = None
    aux_names: tuple[str, ...] = ()
    pi: np.ndarray | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        if coords.ndim != 2 or coords.shape[0] < 1 or coords.shape[1] < 1:
            raise PopulationError("coords must be an (N, p) array with N >= 1")
        if not np.all(np.isfinite(coords)):
            raise PopulationError("coords contain missing or non-finite entries")
        N = coords.shape[0]
        ids = np.arange(1, N + 1) if self.ids is None else np.asarray(self.ids)
        if ids.shape != (N,):
            raise PopulationError("ids must have length N")
        if len(np.unique(ids)) != N:
            raise PopulationError("duplicate id")
        object.__setattr__(self, "coords", _frozen(coords))
        object.__setattr__(self, "ids", _frozen(ids.astype(np.int64)))

        if self.aux is not None:
            aux = np.asarray(self.aux, dtype=float)
            if aux.ndim == 1:
                aux = aux[:, None]
            if aux.shape[0] != N:
                raise PopulationError("aux must have N rows")
            names = tuple(self.aux_names) or tuple(f"aux{j + 1}" for j in range(aux.shape[1]))
            if len(names) != aux.shape[1]:
                raise PopulationError("aux_names must match aux columns")
            object.__setattr__(self, "aux", _frozen(aux))
            object.__setattr__(self, "aux_names", names)
        elif self.aux_names:
            raise PopulationError("aux_names given without aux")

        if self.pi is not None:
            pi = np.asarray(self.pi, dtype=float)
            if pi.shape != (N,):
                raise PopulationError("pi must have length N")
            if np.any(~np.isfinite(pi)) or np.any(pi < 0) or np.any(pi > 1):
                raise PopulationError("inclusion probabilities must lie in [0, 1]")
            object.__setattr__(self, "pi", _frozen(pi))

    @property
    def N(self) -> int:
        return self.coords.shape[0]

    @property
    def p(self) -> int:
        return self.coords.shape[1]

    @property
    def n(self) -> int | None:
        """Fixed sample size implied by pi, or None if sum(pi) is not an integer."""
        if self.pi is None:
            return None
        s = float(np.sum(self.pi))
        r = round(s)
        return int(r) if abs(s - r) <= 1e-9 and r >= 1 else None

    def with_pi(self, pi) -> Population:
        return replace(self, pi=np.asarray(pi, dtype=float))

    def with_aux(self, name: str, values) -> Population:
        values = np.asarray(values, dtype=float).reshape(-1, 1)
        if self.aux is None:
            return replace(self, aux=values, aux_names=(name,))
        if name in self.aux_names:
            aux = np.array(self.aux)
            aux[:, self.aux_names.index(name)] = values[:, 0]
            return replace(self, aux=aux)
        return replace(self, aux=np.hstack([self.aux, values]), aux_names=self.aux_names + (name,))

    def column(self, name_or_index) -> np.ndarray:
        """Return an auxiliary column by name or integer index."""
        if self.aux is None:
            raise PopulationError("population has no auxiliary variables")
        if isinstance(name_or_index, (int, np.integer)):
            return self.aux[:, int(name_or_index)]
        try:
            return self.aux[:, self.aux_names.index(name_or_index)]
        except ValueError:
            raise PopulationError(
                f"unknown column {name_or_index!r}; available: {', '.join(self.aux_names)}"
            ) from None


@dataclass(frozen=True)
class PopulationSpec:
    """Recipe for building a population (used by simulation configs)."""

    kind: str
    target_n_points: float = 144
    fixed_count: bool = False
    grid_dims: tuple[int, int] | None = None
    cluster_count: int = 12
    cluster_radius: float = 0.055
    points_per_cluster: int = 12
    path: str | None = None
    seed: int | None = 0
    fields: dict = field(default_factory=dict)

    def __post_init__(self):
        kinds = ("csr", "neyman-scott", "grid", "file")
        if self.kind not in kinds:
            raise PopulationError(f"unknown population kind {self.kind!r}; valid: {', '.join(kinds)}")
        if self.kind == "csr" and not self.target_n_points > 0:
            raise PopulationError("csr requires target_n_points > 0")
        if self.kind == "grid":
            if self.grid_dims is None or min(self.grid_dims) < 1:
                raise PopulationError("grid requires positive grid_dims")
            object.__setattr__(self, "grid_dims", tuple(int(d) for d in self.grid_dims))
        if self.kind == "neyman-scott" and (
            self.cluster_count < 1 or self.points_per_cluster < 1 or not self.cluster_radius > 0
        ):
            raise PopulationError("neyman-scott parameters must be positive")
        if self.kind == "file" and not self.path:
            raise PopulationError("file population requires a path")

    @classmethod
    def from_dict(cls, d: dict) -> PopulationSpec:
        d = dict(d)
        if "grid_dims" in d and d["grid_dims"] is not None:
            d["grid_dims"] = tuple(d["grid_dims"])
        return cls(**d)

    def build(self, base_dir: str | Path | None = None) -> Population:
        """Realize the population, attaching any synthetic fields."""
        rng = np.random.default_rng(self.seed)
        if self.kind == "csr":
            pop = generate_csr(self.target_n_points, rng, fixed_count=self.fixed_count)
        elif self.kind == "neyman-scott":
            pop = generate_neyman_scott(
                self.cluster_count, self.cluster_radius, self.points_per_cluster, rng
            )
        elif self.kind == "grid":
            pop = generate_grid(*self.grid_dims)
        else:
            path = Path(self.path)
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            pop = load_population(path)
        for name, opts in self.fields.items():
            opts = dict(opts)
            kind = opts.pop("kind", "smooth")
            if kind != "smooth":
                raise PopulationError(f"unknown synthetic field kind {kind!r}")
            fseed = opts.pop("seed", None)
            frng = rng if fseed is None else np.random.default_rng(fseed)
            pop = pop.with_aux(name, smooth_field(pop.coords, frng, **opts))
        return pop


def generate_csr(intensity: float, seed=None, *, fixed_count: bool = False,
                 max_retries: int = 100) -> Population:
    """Complete spatial randomness on the unit square.

    The point count is Poisson(intensity) unless ``fixed_count`` is set, in
    which case exactly ``round(intensity)`` points are drawn.
    """
    if not intensity > 0:
        raise PopulationError("intensity must be positive")
    rng = as_generator(seed)
    for _ in range(max_retries):
        N = int(round(intensity)) if fixed_count else int(rng.poisson(intensity))
        if N > 0:
            return Population(rng.uniform(0.0, 1.0, size=(N, 2)))
    raise PopulationError("empty realization")


def generate_neyman_scott(n_clusters: int, radius: float, per_cluster: int, seed=None) -> Population:
    """Neyman-Scott clusters: uniform parents on the unit square, offspring
    uniform on a disc of ``radius`` around each parent.

    Parents are not population units; offspring are not clipped to the window.
    Parent centers are kept in ``meta['parents']`` and each unit's parent index
    in ``meta['cluster']``.
    """
    if n_clusters < 1 or per_cluster < 1 or not radius > 0:
        raise PopulationError("n_clusters, per_cluster >= 1 and radius > 0 required")
    rng = as_generator(seed)
    parents = rng.uniform(0.0, 1.0, size=(n_clusters, 2))
    r = radius * np.sqrt(rng.uniform(0.0, 1.0, size=(n_clusters, per_cluster)))
    theta = rng.uniform(0.0, 2 * np.pi, size=(n_clusters, per_cluster))
    offs = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)
    coords = (parents[:, None, :] + offs).reshape(-1, 2)
    cluster = np.repeat(np.arange(n_clusters), per_cluster)
    return Population(coords, meta={"parents": parents, "cluster": cluster})


def generate_grid(n1: int, n2: int) -> Population:
    """Regular n1 x n2 grid at integer coordinates.

    The first coordinate varies fastest: unit k sits at (k % n1, k // n1).
    """
    if n1 < 1 or n2 < 1:
        raise PopulationError("grid dimensions must be >= 1")
    k = np.arange(n1 * n2)
    coords = np.column_stack([k % n1, k // n1]).astype(float)
    return Population(coords, meta={"grid_dims": (n1, n2)})


def smooth_field(coords, seed=None, *, n_bumps: int = 12, length_scale: float = 0.2,
                 noise: float = 0.05, floor: float = 0.1) -> np.ndarray:
    """Strictly positive, spatially autocorrelated surface evaluated at coords.

    A sum of Gaussian bumps at random centers plus a small white-noise term.
    Coordinates are rescaled to the unit box first so the length scale is
    relative to the extent of the population.
    """
    rng = as_generator(seed)
    z = np.asarray(coords, dtype=float)
    lo, hi = z.min(axis=0), z.max(axis=0)
    z = (z - lo) / np.where(hi > lo, hi - lo, 1.0)
    centers = rng.uniform(0.0, 1.0, size=(n_bumps, z.shape[1]))
    heights = rng.exponential(1.0, size=n_bumps)
    d2 = ((z[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
    f = (heights * np.exp(-d2 / (2 * length_scale**2))).sum(1)
    f = f / f.mean() + noise * rng.standard_normal(len(z))
    return np.maximum(f, 0.0) + floor


def assign_equal_pi(pop: Population, n: int) -> Population:
    N = pop.N
    if not 0 < n <= N:
        raise PopulationError(f"sample size must satisfy 0 < n <= N (n={n}, N={N})")
    pi = np.full(N, n / N)
    pi[-1] = n - math.fsum(pi[:-1])
    return pop.with_pi(np.clip(pi, 0.0, 1.0))


def inclusion_probabilities(x, n: int) -> np.ndarray:
    """pi_k proportional to x_k with sum n, capping units at 1 as needed."""
    x = np.asarray(x, dtype=float)
    N = len(x)
    if np.any(~np.isfinite(x)) or np.any(x <= 0):
        raise PopulationError("size variable must be strictly positive")
    if not 0 < n <= N:
        raise PopulationError(f"sample size must satisfy 0 < n <= N (n={n}, N={N})")
    capped = np.zeros(N, dtype=bool)
    pi = np.empty(N)
    for _ in range(N + 1):
        free = ~capped
        pi[capped] = 1.0
        pi[free] = (n - capped.sum()) * x[free] / x[free].sum()
        over = free & (pi >= 1.0)
        if not over.any():
            break
        capped |= over
    return pi


def assign_proportional_pi(pop: Population, n: int, size_var) -> Population:
    return pop.with_pi(inclusion_probabilities(pop.column(size_var), n))


def load_population(path, format: str = "csv") -> Population:
    """Read a population from CSV.

    Required columns are ``id`` and ``x1..xp``; a ``pi`` column is used as the
    inclusion probabilities, every other column becomes an auxiliary variable.
    """
    if format != "csv":
        raise PopulationError(f"unsupported format {format!r}")
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise PopulationError(f"{path}: no rows")
        header = [h.strip() for h in header]
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not rows:
        raise PopulationError(f"{path}: no rows")
    if "id" not in header:
        raise PopulationError(f"{path}: missing 'id' column")
    coord_cols = sorted(
        (int(m.group(1)), i) for i, h in enumerate(header) if (m := _COORD_RE.match(h))
    )
    if not coord_cols or [c for c, _ in coord_cols] != list(range(1, len(coord_cols) + 1)):
        raise PopulationError(f"{path}: coordinate columns must be x1..xp")
    id_col = header.index("id")
    pi_col = header.index("pi") if "pi" in header else None
    used = {id_col, pi_col, *(i for _, i in coord_cols)}
    aux_cols = [i for i in range(len(header)) if i not in used]

    def num(row, i, lineno, what):
        try:
            v = float(row[i])
        except (ValueError, IndexError):
            raise PopulationError(f"{path}:{lineno}: non-numeric {what} {header[i]!r}") from None
        if not math.isfinite(v):
            raise PopulationError(f"{path}:{lineno}: non-finite {what} {header[i]!r}")
        return v

    ids, coords, aux, pi = [], [], [], []
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise PopulationError(f"{path}:{lineno}: malformed row ({len(row)} fields, expected {len(header)})")
        try:
            ids.append(int(row[id_col]))
        except ValueError:
            raise PopulationError(f"{path}:{lineno}: non-integer id {row[id_col]!r}") from None
        coords.append([num(row, i, lineno, "coordinate") for _, i in coord_cols])
        aux.append([num(row, i, lineno, "value") for i in aux_cols])
        if pi_col is not None:
            pi.append(num(row, pi_col, lineno, "value"))
    if len(set(ids)) != len(ids):
        seen, dup = set(), None
        for i in ids:
            if i in seen:
                dup = i
                break
            seen.add(i)
        raise PopulationError(f"{path}: duplicate id {dup}")
    return Population(
        coords=np.array(coords),
        ids=np.array(ids),
        aux=np.array(aux) if aux_cols else None,
        aux_names=tuple(header[i] for i in aux_cols),
        pi=np.array(pi) if pi_col is not None else None,
    )


def save_population(pop: Population, path) -> None:
    header = ["id"] + [f"x{j + 1}" for j in range(pop.p)] + list(pop.aux_names)
    if pop.pi is not None:
        header.append("pi")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(pop.N):
            row = [int(pop.ids[k])] + [repr(float(c)) for c in pop.coords[k]]
            if pop.aux is not None:
                row += [repr(float(v)) for v in pop.aux[k]]
            if pop.pi is not None:
                row.append(repr(float(pop.pi[k])))
            w.writerow(row)
