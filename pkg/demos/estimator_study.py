"""Horvitz-Thompson precision under wave vs srswor on the surrogate
population, with the matching variance estimators and CI coverage.

    python demos/estimator_study.py [reps]
"""

import sys
from pathlib import Path

from wavespread import SimConfig, run_sim

reps = int(sys.argv[1]) if len(sys.argv) > 1 else 300
cfg = SimConfig.from_json(Path(__file__).resolve().parents[1] / "configs" / "surrogate.json")
report = run_sim(cfg, reps=reps)

print(f"Y = {report.Y:.2f}, {reps} samples per design")
srs = report.cell("srswor", cfg.sample_sizes[0])
for cell in report.cells:
    ratio = cell.v_sim / srs.v_sim
    print(f"{cell.design:>7} n={cell.n}: v_SIM = {cell.v_sim:10.2f} (ratio to srswor {ratio:.2f})")
    print(f"         95% CI coverage with {cell.coverage_estimator}: {cell.coverage95:.3f}")
