"""Spatially balanced sampling with weakly associated vectors."""

from .baselines import DesignSpec, draw, lpm1, srswor
from .estimators import (EstimateReport, ci95, estimate, ht_total, var_haj, var_lm, var_sb)
from .geom import MetricSpec, NeighborTable, distance2, distance_matrix, rank_neighbors
from .measures import moran_index, voronoi_balance
from .population import (Population, PopulationSpec, assign_equal_pi, assign_proportional_pi,
                         generate_csr, generate_grid, generate_neyman_scott, load_population)
from .sim import SimConfig, SimReport, derive_seed, run_sim
from .strata import build_A, build_moran_weights, build_strata
from .wave import Sample, WaveOptions, direction_vector, step_bounds, update_choice, wave_sample

__version__ = "0.1.0"

__all__ = [
    "DesignSpec", "EstimateReport", "MetricSpec", "NeighborTable", "Population",
    "PopulationSpec", "Sample", "SimConfig", "SimReport", "WaveOptions",
    "assign_equal_pi", "assign_proportional_pi", "build_A", "build_moran_weights",
    "build_strata", "ci95", "derive_seed", "direction_vector", "distance2",
    "distance_matrix", "draw", "estimate", "generate_csr", "generate_grid",
    "generate_neyman_scott", "ht_total", "load_population", "lpm1", "moran_index",
    "rank_neighbors", "run_sim", "srswor", "step_bounds", "update_choice", "var_haj",
    "var_lm", "var_sb", "voronoi_balance", "wave_sample",
]
