"""Coverage of SPS regions.

Draw fresh datasets from the linear model, build an SPS region for each and
count how often the true parameter lands inside. The hit rate should sit
at 1 - q/m regardless of the noise distribution, as long as the noise is
symmetric.

Run with ``python notebooks/01_coverage.py``.
"""

import numpy as np

from sps_regions import (
    ExperimentConfig,
    GenerationSpec,
    Gaussian,
    Uniform,
    coverage_probability,
    generate_dataset,
    least_squares_estimate,
    run_coverage,
    sps_indicator,
    sps_initialize,
    sps_rank,
)

# %% one dataset, one region
spec = GenerationSpec(n=200, d=2, theta_star=[5.0, 5.0], noise=Uniform(-1, 1), regressor=Uniform(1, 2), seed=0)
ds = generate_dataset(spec)
cfg = sps_initialize(m=20, q=1, Phi=ds.Phi, seed=1)
lse = least_squares_estimate(ds)
print("LSE:", lse)
print("LSE inside:", sps_indicator(ds, cfg, lse))  # always true
print("theta* inside:", sps_indicator(ds, cfg, ds.theta_star))
print("far point inside:", sps_indicator(ds, cfg, [0.0, 0.0]))

# %% Monte Carlo coverage for a few (m, q)
for m, q in [(2, 1), (10, 1), (20, 1), (20, 5)]:
    res = run_coverage(ExperimentConfig(m=m, q=q), trials=2000)
    print(f"m={m:2d} q={q}: empirical {res.coverage:.3f}, exact {coverage_probability(m, q):.3f}")

# %% heavy-ish Gaussian noise: same guarantee
gen = GenerationSpec(n=100, d=3, theta_star=[1.0, -2.0, 0.5], noise=Gaussian(3.0), regressor=Gaussian(1.0))
res = run_coverage(ExperimentConfig(generation=gen, m=10, q=1, t0=10), trials=2000)
print(f"Gaussian noise, m=10 q=1: {res.coverage:.3f} (exact 0.9)")

# %% the rank of the reference sum at theta* is uniform over 1..m
ranks = []
for seed in range(2000):
    ds = generate_dataset(GenerationSpec(n=50, d=2, theta_star=[5.0, 5.0], seed=seed))
    ranks.append(sps_rank(ds, sps_initialize(5, 1, ds.Phi, seed=10_000 + seed), ds.theta_star).rank)
print("rank histogram (m=5):", np.bincount(ranks, minlength=6)[1:])
