"""Compare how evenly wave, lpm1 and srswor spread a sample of 16 out of 144.

Draws a modest number of samples per design on one CSR population and prints
mean Voronoi balance B and Moran index I_B (lower is better spread).

    python demos/spread_comparison.py [reps]
"""

import sys

import numpy as np

from wavespread import (MetricSpec, NeighborTable, assign_equal_pi, build_moran_weights, draw,
                        generate_csr, moran_index, voronoi_balance)
from wavespread.geom import distance_matrix

reps = int(sys.argv[1]) if len(sys.argv) > 1 else 100
n = 16
pop = assign_equal_pi(generate_csr(144, 1, fixed_count=True), n)
metric = MetricSpec()
table = NeighborTable(metric, pop)
weights = build_moran_weights(pop, metric)
extra = {"wave": {"table": table}, "lpm1": {"dist": distance_matrix(metric, pop)}, "srswor": {}}

print(f"N={pop.N}, n={n}, {reps} samples per design")
for design in ("wave", "lpm1", "srswor"):
    B, IB = [], []
    for seed in range(reps):
        s = draw(design, pop, n, metric, seed=seed, **extra[design])
        B.append(voronoi_balance(pop, metric, s, table=table).B)
        IB.append(moran_index(s.indicator, weights).IB)
    print(f"{design:>7}: mean B = {np.mean(B):.3f}   mean I_B = {np.mean(IB):+.3f}")
