"""Compare training with and without bank management across seeds.

Run with ``python demos/management_comparison.py``. About half a minute on one core.
"""

from __future__ import annotations

import numpy as np

from skillbank import Config, run
from skillbank.analysis import compare_runs, summarize

seeds = range(3)
runs = []
for label in ("full", "no_management"):
    for seed in seeds:
        config = Config(seed=seed).with_ablations(label)
        report = run(config)
        runs.append(summarize([m.to_dict() for m in report.metrics], label=config.label, seed=seed))

# Mean and population std over seeds of every run scalar.
print(compare_runs(runs).table())

# Pool sizes: management keeps them near capacity, the unmanaged bank only grows.
for r in runs:
    if r.seed == 0:
        sizes = r.series["step_pool_size"]
        print(f"{r.label:15} step pool at steps 50/100/200: {sizes[49]:.0f} {sizes[99]:.0f} {sizes[-1]:.0f}")

# Mean utility of retrieved skills over the last 50 steps, per seed.
for label in ("full", "no_management"):
    tails = [r.tails["mean_retrieved_utility"] for r in runs if r.label == label]
    print(f"{label:15} retrieved utility {np.mean(tails):.3f}  per seed {np.round(tails, 3)}")
