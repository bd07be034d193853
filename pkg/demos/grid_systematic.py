"""On a 12x12 grid with the tore metric, wave sometimes returns a perfectly
systematic sample (B = 0). This script counts how often and draws one.

    python demos/grid_systematic.py [reps]
"""

import sys

import numpy as np

from wavespread import MetricSpec, NeighborTable, assign_equal_pi, generate_grid, voronoi_balance, wave_sample

reps = int(sys.argv[1]) if len(sys.argv) > 1 else 200
pop = assign_equal_pi(generate_grid(12, 12), 16)
metric = MetricSpec("tore", grid_dims=(12, 12))
table = NeighborTable(metric, pop)

best = None
hits = 0
for seed in range(reps):
    s = wave_sample(pop, metric, seed=seed, table=table)
    b = voronoi_balance(pop, metric, s, table=table).B
    if b < 1e-12:
        hits += 1
        best = best or s
print(f"{hits}/{reps} samples are exactly balanced (B = 0)")

if best is not None:
    picture = np.full((12, 12), ".")
    for x1, x2 in pop.coords[best.indices].astype(int):
        picture[11 - x2, x1] = "#"
    print("\n".join(" ".join(row) for row in picture))
