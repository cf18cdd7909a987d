"""Randomized checks of the projection certificate and the proof's tail bounds.

Run with ``python notebooks/04_property_checks.py``.
"""

from sps_regions import ExperimentConfig, run_concentration_check, run_property_suite

# %% projection identities on random small designs
for r in run_property_suite(seed=0, instance_count=100):
    print(f"{r.check:20s} worst={r.value:.2e} threshold={r.threshold:g} {'ok' if r.passed else 'FAIL'}")

# %% empirical tails at n = 500
for r in run_concentration_check(ExperimentConfig(), n=500, trials=300):
    print(f"{r.check:28s} tail={r.value:.4f} allowed={r.threshold:.4f} {'ok' if r.passed else 'FAIL'}")
