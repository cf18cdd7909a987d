"""Shape of an SPS region.

For m = 2 the region is the sublevel set of a single quadratic, so its
diameter is available in closed form. For larger m the region is an
intersection/union of such sets; we sample it by rejection and measure the
largest pairwise distance.

Run with ``python notebooks/02_region_geometry.py``.
"""

import numpy as np

from sps_regions import (
    GenerationSpec,
    build_certificate,
    empirical_diameter,
    exact_diameter_m2,
    generate_dataset,
    is_bounded,
    pairwise_region,
    sample_region_points,
    sps_initialize,
)

ds = generate_dataset(GenerationSpec(n=500, d=2, theta_star=[5.0, 5.0], seed=3))

# %% m = 2: closed form
cfg = sps_initialize(2, 1, ds.Phi, seed=0)
region = pairwise_region(ds, cfg, 1)
rep = exact_diameter_m2(region)
print("A =\n", region.A)
print("center", rep.center, "diameter", rep.diameter)

# boundedness through the certificate: max |eig(K)| < 1
cert = build_certificate(ds.Phi, cfg.signs[0])
print("eig(K):", cert.k_eigenvalues, "bounded:", is_bounded(cert))

# sampled points never spread wider than the exact diameter
pts = sample_region_points(ds, cfg, 500, seed=1)
print("sampled diameter", empirical_diameter(pts), "<=", rep.diameter)

# %% m = 20: sampled region
cfg20 = sps_initialize(20, 1, ds.Phi, seed=0)
pts20 = sample_region_points(ds, cfg20, 500, seed=2)
print("m=20 sampled diameter", empirical_diameter(pts20))

# %% optional picture
try:
    import matplotlib.pyplot as plt
except ImportError:
    plt = None
if plt is not None:
    fig, ax = plt.subplots()
    ax.scatter(*pts20.T, s=4, label="m=20, q=1")
    ax.scatter(*pts.T, s=4, label="m=2, q=1")
    ax.plot(*ds.theta_star, "k+", ms=12, label="theta*")
    ax.set_aspect("equal")
    ax.legend()
    fig.savefig("region_points.png", dpi=120)
    print("wrote region_points.png")
