"""Size regularisation: the bell curve, auto-estimated parameters, a sweep.

Shows how the bell-shaped size factor behaves, how its parameters are
estimated from a size distribution, and how correlation with ground truth
responds to the parameter choice on a synthetic benchmark table whose
accuracies are a noisy increasing function of the score.
"""

import numpy as np

from swapnas import (
    CellMatrix,
    RegularisationParams,
    estimate_mu_sigma,
    mu_sigma_sweep,
    regularisation_factor,
    size_histogram,
)
from swapnas.evaluation import BenchmarkEntry, BenchmarkTable
from swapnas.metric import ScoreRecord

rng = np.random.default_rng(0)

print("bell factor exp(-(size - mu)^2 / sigma) at mu = 1.0:")
print(f"{'size':>6} {'sigma=0.2':>10} {'sigma=1.0':>10} {'sigma=5.0':>10}")
for size in (0.25, 0.5, 1.0, 2.0, 4.0):
    row = [
        regularisation_factor(size, RegularisationParams(mu=1.0, sigma=s))
        for s in (0.2, 1.0, 5.0)
    ]
    print(f"{size:>6.2f} " + " ".join(f"{v:>10.4f}" for v in row))

# A right-skewed size sample, as cell spaces typically produce.
sizes = 0.3 + 30.7 * rng.beta(1.2, 5.0, size=1000)
hist = size_histogram(sizes, 12)
print()
print("size histogram (MB):")
for i, count in enumerate(hist.counts):
    bar = "#" * (60 * count // max(hist.counts))
    print(f"{hist.edges[i]:>6.2f}-{hist.edges[i + 1]:<6.2f} {bar}")

params = estimate_mu_sigma(sizes)
print()
print(f"auto-estimated parameters: mu = sigma = {params.mu} (rounded-up size maximum)")

# Synthetic table: score grows with size, accuracy follows the score noisily.
placeholder = CellMatrix([[0, 1], [0, 0]])
n = 300
table_sizes = 0.3 + 30.7 * rng.beta(1.2, 5.0, size=n)
swaps = np.maximum(1, np.round(40 * table_sizes * (1 + 0.1 * rng.normal(size=n))).astype(int))
accs = np.clip(0.2 + 0.6 * swaps / swaps.max() + rng.normal(0, 0.02, size=n), 0, 1)
records = [
    ScoreRecord(f"m{i}", int(swaps[i]), float(swaps[i]), float(table_sizes[i]), 0, 0, "synthetic")
    for i in range(n)
]
table = BenchmarkTable(
    tuple(BenchmarkEntry(f"m{i}", placeholder, float(accs[i]), float(table_sizes[i])) for i in range(n))
)

grid = [(v, v) for v in (0.3, 1.0, 3.0, 10.0, 20.0, 31.0)] + [(31.0, 0.31)]
print()
print("rank correlation of the regularised score against accuracy:")
for point in mu_sigma_sweep(records, table, grid):
    mu = "  none" if point.mu is None else f"{point.mu:>6.2f}"
    sigma = "  none" if point.sigma is None else f"{point.sigma:>6.2f}"
    rho = "undefined" if point.rho is None else f"{point.rho:+.3f}"
    print(f"  mu {mu}  sigma {sigma}  rho {rho}")
print()
print("small centres invert the ranking, a tiny width erases it, and a bell")
print("at the top of the size range keeps (or improves on) the raw signal")
