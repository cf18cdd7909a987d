"""Monte Carlo experiments: coverage, bound-vs-empirical diameters, property and
concentration checks.

Every random quantity is drawn from a stream keyed by ``master_seed`` and
the trajectory index (plus the sample size where relevant), so results do
not depend on the number of worker threads. Workers only compute; results
are merged in index order.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from ._rng import derive_seed, make_rng
from .bounds import (
    BelowValidityThreshold,
    BoundInputs,
    perturbed_gram_tail,
    quadratic_noise_tail,
    shrinkage_fit,
    theorem2_bound,
)
from .core import SpsConfig, sps_indicator, sps_initialize
from .data import (
    AssumptionConstants,
    GenerationSpec,
    RegressionDataset,
    Uniform,
    estimate_constants,
    generate_dataset,
    gram_matrices,
)
from .geometry import (
    build_certificate,
    empirical_diameter,
    exact_diameter_m2,
    is_bounded,
    pairwise_region,
    sample_region_points,
    theta_tilde_region,
)
from .linalg import principal_sqrt_inverse, pseudoinverse, thin_qr

# stream keys
_DATA, _SPS, _SAMPLE, _PROPERTY = 0, 1, 2, 3


class ExperimentError(ValueError):
    pass


def paper_generation(n: int = 2000, seed: int = 0) -> GenerationSpec:
    """theta* = (5, 5), Unif(-1, 1) noise, Unif(1, 2) regressors."""
    return GenerationSpec(
        n=n, d=2, theta_star=np.array([5.0, 5.0]),
        noise=Uniform(-1.0, 1.0), regressor=Uniform(1.0, 2.0), seed=seed,
    )


@dataclass(frozen=True)
class ExperimentConfig:
    generation: GenerationSpec = field(default_factory=paper_generation)
    m: int = 2
    q: int = 1
    delta: float = 0.1
    t0: int = 250
    grid: tuple[int, ...] = tuple(range(250, 2001, 50))
    trajectories: int = 100
    points_per_region: int = 100
    master_seed: int = 0
    output_path: str | None = None
    rho: float = 1.0
    # overrides for the constants otherwise estimated from the trajectories
    sigma: float | None = None
    lambda0: float | None = None
    kappa: float | None = None

    def __post_init__(self):
        grid = tuple(int(t) for t in self.grid)
        object.__setattr__(self, "grid", grid)
        if self.t0 < self.generation.d:
            raise ExperimentError(f"t0={self.t0} must be >= d={self.generation.d}")
        if list(grid) != sorted(grid) or len(set(grid)) != len(grid):
            raise ExperimentError("grid must be strictly increasing")
        if self.trajectories < 1:
            raise ExperimentError("need at least one trajectory")
        if not 0 < self.q < self.m:
            raise ExperimentError(f"need m > q > 0, got m={self.m}, q={self.q}")

    @property
    def noise_sigma(self) -> float:
        return self.sigma if self.sigma is not None else self.generation.sigma

    @classmethod
    def from_dict(cls, cfg: dict) -> "ExperimentConfig":
        cfg = dict(cfg)
        kwargs = {}
        if "generation" in cfg:
            kwargs["generation"] = GenerationSpec.from_dict(cfg.pop("generation"))
        if "grid" in cfg:
            kwargs["grid"] = parse_grid(cfg.pop("grid"))
        names = {f for f in cls.__dataclass_fields__}
        unknown = set(cfg) - names
        if unknown:
            raise ExperimentError(f"unknown config keys: {sorted(unknown)}")
        kwargs.update(cfg)
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        out = {f: getattr(self, f) for f in self.__dataclass_fields__}
        out["generation"] = self.generation.to_dict()
        out["grid"] = list(self.grid)
        return out


def parse_grid(spec) -> tuple[int, ...]:
    """A list of ints, or ``"a..b"`` / ``"a..b:step"`` / ``{"start", "stop", "step"}``."""
    if isinstance(spec, str):
        body, _, step = spec.partition(":")
        lo, sep, hi = body.partition("..")
        if not sep:
            return tuple(int(v) for v in body.split(","))
        return tuple(range(int(lo), int(hi) + 1, int(step) if step else 1))
    if isinstance(spec, dict):
        return tuple(range(int(spec["start"]), int(spec["stop"]) + 1, int(spec.get("step", 1))))
    return tuple(int(v) for v in spec)


def worker_count(default: int = 1) -> int:
    raw = os.environ.get("SPS_THREADS")
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        raise ExperimentError(f"SPS_THREADS must be an integer, got {raw!r}") from None


def ordered_map(fn: Callable, items: Iterable, threads: int | None = None) -> list:
    """``[fn(x) for x in items]`` computed on up to ``threads`` workers."""
    items = list(items)
    threads = worker_count() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def trajectory(config: ExperimentConfig, j: int, n: int | None = None) -> RegressionDataset:
    gen = config.generation if n is None else replace(config.generation, n=n)
    return generate_dataset(gen, seed=derive_seed(config.master_seed, _DATA, j))


def lower_quantile(values: Sequence[float], level: float) -> float:
    """Smallest ``x`` in ``values`` with ``#{v <= x} >= level * len(values)``."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ExperimentError("no values")
    k = math.ceil(Fraction(str(level)) * v.size)
    return float(v[max(k, 1) - 1])


# -- coverage --------------------------------------------------------------------


@dataclass(frozen=True)
class CoverageResult:
    trials: int
    hits: int

    @property
    def coverage(self) -> float:
        return self.hits / self.trials


def run_coverage(config: ExperimentConfig, trials: int | None = None, threads: int | None = None) -> CoverageResult:
    """Fraction of fresh datasets/randomizations whose region contains theta*."""
    trials = config.trajectories if trials is None else trials

    def one(j: int) -> bool:
        ds = trajectory(config, j)
        sps = sps_initialize(config.m, config.q, ds.Phi, derive_seed(config.master_seed, _SPS, j))
        return sps_indicator(ds, sps, ds.theta_star)

    hits = sum(ordered_map(one, range(trials), threads))
    return CoverageResult(trials, int(hits))


# -- bound vs empirical diameters --------------------------------------------------


@dataclass(frozen=True)
class Figure1Row:
    t: int
    empirical_quantile_diameter: float
    median_diameter: float
    theoretical_bound: float | None  # None: t below the validity threshold


@dataclass(frozen=True)
class Figure1Result:
    rows: list[Figure1Row]
    constants: AssumptionConstants
    diameters: np.ndarray  # (trajectories, len(grid))

    def shrinkage(self) -> tuple[float, float]:
        return shrinkage_fit([r.t for r in self.rows], [r.median_diameter for r in self.rows])


def constants_for(config: ExperimentConfig, trajs: Sequence[RegressionDataset]) -> AssumptionConstants:
    if config.lambda0 is not None and config.kappa is not None:
        return AssumptionConstants(config.lambda0, config.kappa, config.rho, config.noise_sigma)
    est = estimate_constants(trajs, config.t0, config.rho, config.noise_sigma)
    return AssumptionConstants(
        est.lambda0 if config.lambda0 is None else config.lambda0,
        est.kappa if config.kappa is None else config.kappa,
        config.rho,
        config.noise_sigma,
    )


def region_diameter(ds: RegressionDataset, config: ExperimentConfig, j: int, t: int) -> float:
    sps = sps_initialize(config.m, config.q, ds.Phi, derive_seed(config.master_seed, _SPS, j, t))
    if config.m == 2:
        return exact_diameter_m2(pairwise_region(ds, sps, 1)).diameter
    pts = sample_region_points(
        ds, sps, config.points_per_region, derive_seed(config.master_seed, _SAMPLE, j, t)
    )
    return empirical_diameter(pts)


def run_figure1(config: ExperimentConfig, threads: int | None = None) -> Figure1Result:
    """Per grid point: (1 - delta)-quantile and median of the region diameters
    over the trajectories, next to the general diameter bound."""
    n = config.generation.n
    if config.grid and (config.grid[0] < config.t0 or config.grid[-1] > n):
        raise ExperimentError(f"grid must lie within [t0, n] = [{config.t0}, {n}]")
    trajs = ordered_map(lambda j: trajectory(config, j), range(config.trajectories), threads)
    consts = constants_for(config, trajs)

    def per_trajectory(j: int) -> list[float]:
        return [region_diameter(trajs[j].prefix(t), config, j, t) for t in config.grid]

    diam = np.array(ordered_map(per_trajectory, range(config.trajectories), threads), dtype=float)
    diam = diam.reshape(config.trajectories, len(config.grid))
    base = BoundInputs(
        sigma=consts.sigma, lambda0=consts.lambda0, kappa=consts.kappa, rho=consts.rho,
        delta=config.delta, d=config.generation.d, n=max(config.grid[0], config.generation.d),
        m=config.m, q=config.q,
    )
    rows = []
    for k, t in enumerate(config.grid):
        try:
            bound = theorem2_bound(base.with_n(t))
        except BelowValidityThreshold:
            bound = None
        rows.append(
            Figure1Row(
                t=t,
                empirical_quantile_diameter=lower_quantile(diam[:, k], 1.0 - config.delta),
                median_diameter=float(np.median(diam[:, k])),
                theoretical_bound=bound,
            )
        )
    return Figure1Result(rows, consts, diam)


# -- property suite ----------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    check: str
    value: float  # max residual, or empirical tail
    threshold: float

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.threshold)


@dataclass
class _Worst:
    values: dict = field(default_factory=dict)

    def update(self, name: str, value: float) -> None:
        self.values[name] = max(self.values.get(name, -math.inf), float(value))


PROPERTY_THRESHOLDS = {
    "M_symmetric": 1e-8,
    "M_idempotent": 1e-8,
    "M_rank_excess": 0.0,
    "K_eigen_excess": 1e-9,
    "M0tM0_identity": 1e-8,
    "A_identity": 1e-8,
    "frame_consistency": 1e-8,
    "bounded_agreement": 0.0,
    "radius_chain": 1e-6,
    "diameter_chain": 1e-6,
}


def _property_instance(seed: int, k: int, all_plus: bool = False):
    rng = make_rng(seed, _PROPERTY, k)
    d = int(rng.integers(1, 5))
    n = int(rng.integers(max(4, d), 51))
    Phi = rng.standard_normal((n, d))
    theta = rng.standard_normal(d)
    w = rng.standard_normal(n)
    signs = np.ones(n) if all_plus else 2.0 * rng.integers(0, 2, n) - 1.0
    thetas = theta + rng.standard_normal((5, d)) * 3.0
    return RegressionDataset(Phi, Phi @ theta + w, theta, w), signs, thetas


def check_instance(ds: RegressionDataset, signs: np.ndarray, thetas: np.ndarray, worst: _Worst) -> None:
    Phi, d, n = ds.Phi, ds.d, ds.n
    cert = build_certificate(Phi, signs, materialize=True)
    M, K, M0 = cert.M, cert.K, cert.M0
    fro = np.linalg.norm
    worst.update("M_symmetric", fro(M - M.T))
    worst.update("M_idempotent", fro(M @ M - M) / (1.0 + fro(M)))
    worst.update("M_rank_excess", int(np.sum(np.linalg.eigvalsh(M) > 0.5)) - d)
    worst.update("K_eigen_excess", np.max(np.abs(cert.k_eigenvalues)) - 1.0)
    I_K2 = np.eye(d) - K @ K
    worst.update("M0tM0_identity", fro(M0.T @ M0 - I_K2) / max(fro(I_K2), 1.0))

    _, Phi_R = thin_qr(Phi)
    tilde = theta_tilde_region(ds, signs)
    R = Phi.T @ Phi
    worst.update("A_identity", fro(tilde.A - Phi_R.T @ I_K2 @ Phi_R) / fro(R))

    # pairwise region in theta space from a one-perturbation SPS config
    sps = SpsConfig(
        m=2, q=1, signs=signs.reshape(1, -1), perm=[0, 1],
        sqrt_inv_gram=principal_sqrt_inverse(gram_matrices(Phi)[1]), seed=0,
    )
    region = pairwise_region(ds, sps, 1)
    for theta in thetas:
        a = tilde.value(ds.theta_star - theta)
        b = n * region.value(theta)
        worst.update("frame_consistency", abs(a - b) / (1.0 + abs(a) + abs(b)))

    rep = exact_diameter_m2(region)
    worst.update("bounded_agreement", float(is_bounded(cert) != rep.bounded))
    if rep.bounded:
        rep_tilde = exact_diameter_m2(tilde)
        wMw = float(ds.w @ M @ ds.w)
        worst.update("radius_chain", rep_tilde.radius_sq - wMw)
        worst.update("diameter_chain", rep_tilde.diameter - 2.0 * math.sqrt(wMw / rep_tilde.lambda_min_A))


def run_property_suite(seed: int, instance_count: int = 100) -> list[CheckResult]:
    """Randomized projection and identity checks; the first instance uses all-plus signs."""
    if instance_count < 1:
        raise ExperimentError("instance_count must be >= 1")
    worst = _Worst()
    for k in range(instance_count):
        check_instance(*_property_instance(seed, k, all_plus=(k == 0)), worst)
    return [CheckResult(name, worst.values[name], thr) for name, thr in PROPERTY_THRESHOLDS.items()]


# -- concentration checks --------------------------------------------------------------

DEFAULT_EPS_GRID = tuple(float(v) for v in np.round(np.geomspace(0.01, 1.0, 9), 6))


@dataclass(frozen=True)
class ConcentrationSample:
    X: np.ndarray  # w^T M w per trajectory
    trace_M: np.ndarray
    max_abs_K: np.ndarray
    constants: AssumptionConstants
    n: int
    d: int


def concentration_sample(config: ExperimentConfig, n: int = 500, trials: int | None = None,
                         threads: int | None = None) -> ConcentrationSample:
    trials = config.trajectories if trials is None else trials

    def one(j: int):
        ds = trajectory(config, j, n=n)
        sps = sps_initialize(2, 1, ds.Phi, derive_seed(config.master_seed, _SPS, j, n))
        cert = build_certificate(ds.Phi, sps.signs[0], materialize=False)
        # w^T M w and tr M through the d-dimensional factor M0
        G = cert.M0.T @ cert.M0
        P = pseudoinverse(0.5 * (G + G.T), rank_tol=1e-10, scale=1.0)
        z = cert.M0.T @ ds.w
        return ds, float(z @ P @ z), float(np.trace(P @ G)), float(np.max(np.abs(cert.k_eigenvalues)))

    out = ordered_map(one, range(trials), threads)
    trajs = [o[0] for o in out]
    t0 = min(config.t0, n)
    cfg = replace(config, t0=t0)
    consts = constants_for(cfg, trajs)
    return ConcentrationSample(
        X=np.array([o[1] for o in out]),
        trace_M=np.array([o[2] for o in out]),
        max_abs_K=np.array([o[3] for o in out]),
        constants=consts,
        n=n,
        d=config.generation.d,
    )


def _slack(p: float, trials: int) -> float:
    p = min(max(p, 0.0), 1.0)
    return 3.0 * math.sqrt(p * (1.0 - p) / trials)


def run_concentration_check(
    config: ExperimentConfig,
    epsilon_grid: Sequence[float] = DEFAULT_EPS_GRID,
    eps0_grid: Sequence[float] | None = None,
    n: int = 500,
    trials: int | None = None,
    threads: int | None = None,
) -> list[CheckResult]:
    """Empirical tails of ``w^T M w`` and ``max|lambda(K)|`` against their bounds.

    ``X`` is centered at ``Var(W) * mean(tr M)``, its exact expectation when
    ``tr M`` does not vary, which holds whenever every region is bounded.
    """
    sample = concentration_sample(config, n, trials, threads)
    eps0_grid = epsilon_grid if eps0_grid is None else eps0_grid
    c = sample.constants
    N = sample.X.size
    EX = config.generation.noise.variance * float(sample.trace_M.mean())
    dev = np.abs(sample.X - EX) / (n * c.lambda0)
    out = []
    for eps in epsilon_grid:
        bound = quadratic_noise_tail(eps, n, c.lambda0, c.sigma, sample.d)
        tail = float(np.mean(dev >= eps))
        out.append(CheckResult(f"quadratic_tail_eps={eps:g}", tail, bound + _slack(bound, N)))
    for eps0 in eps0_grid:
        bound = perturbed_gram_tail(eps0, n, c.rho, c.kappa, sample.d)
        tail = float(np.mean(sample.max_abs_K >= eps0))
        out.append(CheckResult(f"K_eigen_tail_eps0={eps0:g}", tail, bound + _slack(bound, N)))
    return out


# -- CSV output ----------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return "NA"
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def to_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def coverage_csv(res: CoverageResult) -> str:
    return to_csv(["trials", "hits", "coverage"], [(res.trials, res.hits, res.coverage)])


def figure1_csv(res: Figure1Result) -> str:
    return to_csv(
        ["t", "empirical_quantile_diameter", "median_diameter", "theoretical_bound"],
        [(r.t, r.empirical_quantile_diameter, r.median_diameter, r.theoretical_bound) for r in res.rows],
    )


def checks_csv(results: Sequence[CheckResult]) -> str:
    return to_csv(
        ["check", "max_residual_or_tail", "threshold", "pass"],
        [(r.check, r.value, r.threshold, r.passed) for r in results],
    )


def bound_csv(curve: Sequence[tuple[int, float | None]]) -> str:
    return to_csv(["n", "bound"], curve)
