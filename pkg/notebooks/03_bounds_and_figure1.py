"""Diameter bound against measured diameters.

Runs the bound-vs-empirical experiment on a reduced grid (pass ``full`` on
the command line for the 100-trajectory, n = 2000 setting), then fits the
log-log shrinkage slope.

Run with ``python notebooks/03_bounds_and_figure1.py [full]``.
"""

import sys

from sps_regions import BoundInputs, ExperimentConfig, bound_curve, min_valid_n, run_figure1, theorem2_bound

# %% the bound by itself
inp = BoundInputs(sigma=3 ** -0.5, lambda0=0.07, kappa=4.0, rho=1.0, delta=0.1, d=2, n=2000)
print("smallest valid n:", min_valid_n(inp))
print("bound at n=2000:", theorem2_bound(inp))
for n, b in bound_curve(inp, [100, 200, 500, 1000, 2000]):
    print(f"  n={n:5d}  bound={'NA' if b is None else f'{b:.4f}'}")

# %% experiment
config = ExperimentConfig() if "full" in sys.argv else ExperimentConfig(trajectories=20, grid=range(250, 2001, 250))
res = run_figure1(config)
c = res.constants
print(f"estimated lambda0={c.lambda0:.4f} kappa={c.kappa:.3f}")
print("   t   q90 diam   median    bound")
for r in res.rows:
    bound = "NA" if r.theoretical_bound is None else f"{r.theoretical_bound:.4f}"
    print(f"{r.t:5d}  {r.empirical_quantile_diameter:.4f}   {r.median_diameter:.4f}   {bound}")
slope, _ = res.shrinkage()
print(f"log-log slope of the median diameter: {slope:.3f}")

# %% optional plot
try:
    import matplotlib.pyplot as plt
except ImportError:
    plt = None
if plt is not None:
    t = [r.t for r in res.rows]
    fig, ax = plt.subplots()
    ax.loglog(t, [r.empirical_quantile_diameter for r in res.rows], "o-", label="0.9-quantile diameter")
    ax.loglog(t, [r.theoretical_bound for r in res.rows], "s--", label="bound")
    ax.set_xlabel("n")
    ax.set_ylabel("diameter")
    ax.legend()
    fig.savefig("figure1.png", dpi=120)
    print("wrote figure1.png")
